"""Kernel-dependence few-shot adaptation on precomputed embeddings."""

from .adapt import (
    AdadeltaState,
    AdaptConfig,
    EpisodeResult,
    LinearHead,
    adadelta_step,
    dependence_loss,
    dependence_loss_gradient,
    ncc_loss,
    ncc_loss_gradient,
    ncc_predict,
    run_episode,
    transform,
)
from .evaluation import (
    EpisodeSummary,
    EvalReport,
    ci95,
    episode_rng,
    evaluate,
    exp_mean_bound_holds,
    similarity_export,
)
from .hsic import (
    DEFAULT_EPSILON,
    DEFAULT_GRID_COEFFICIENTS,
    BandwidthGrid,
    BandwidthSelection,
    HsicEstimate,
    hsic_unbiased,
    hsic_unbiased_naive,
    hsic_variance,
    power_ratio,
    select_bandwidth,
)
from .kernels import (
    COSINE,
    GAUSSIAN,
    IMQ,
    KERNEL_FAMILIES,
    KernelSpec,
    eval_kernel,
    kernel_matrix,
    label_kernel_matrix,
    median_sq_distance,
)
from .tasks import (
    EmbeddingDataset,
    EmbeddingFormatError,
    SamplerConfig,
    Task,
    TaskProvenance,
    compute_query_size,
    compute_shots,
    compute_support_size,
    flatten_dataset,
    load_embeddings,
    sample_task,
    sample_way_count,
    save_embeddings,
    synth_dataset,
    synth_task,
)

__version__ = "0.1.0"

__all__ = [
    "AdadeltaState",
    "AdaptConfig",
    "BandwidthGrid",
    "BandwidthSelection",
    "COSINE",
    "DEFAULT_EPSILON",
    "DEFAULT_GRID_COEFFICIENTS",
    "EmbeddingDataset",
    "EmbeddingFormatError",
    "EpisodeResult",
    "EpisodeSummary",
    "EvalReport",
    "GAUSSIAN",
    "HsicEstimate",
    "IMQ",
    "KERNEL_FAMILIES",
    "KernelSpec",
    "LinearHead",
    "SamplerConfig",
    "Task",
    "TaskProvenance",
    "adadelta_step",
    "ci95",
    "compute_query_size",
    "compute_shots",
    "compute_support_size",
    "dependence_loss",
    "dependence_loss_gradient",
    "episode_rng",
    "eval_kernel",
    "evaluate",
    "exp_mean_bound_holds",
    "flatten_dataset",
    "hsic_unbiased",
    "hsic_unbiased_naive",
    "hsic_variance",
    "kernel_matrix",
    "label_kernel_matrix",
    "load_embeddings",
    "median_sq_distance",
    "ncc_loss",
    "ncc_loss_gradient",
    "ncc_predict",
    "power_ratio",
    "run_episode",
    "sample_task",
    "sample_way_count",
    "save_embeddings",
    "select_bandwidth",
    "similarity_export",
    "synth_dataset",
    "synth_task",
    "transform",
]
