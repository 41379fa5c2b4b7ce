"""Kernel functions, Gram matrices, the label kernel, and the median heuristic.

All public functions validate their inputs and compute in float64. Gram
matrices are exactly symmetric because each off-diagonal pair is evaluated
once and mirrored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

GAUSSIAN = "gaussian"
IMQ = "imq"
COSINE = "cosine"
KERNEL_FAMILIES = (GAUSSIAN, IMQ, COSINE)
RADIAL_FAMILIES = (GAUSSIAN, IMQ)


def as_embeddings(z) -> np.ndarray:
    """Validate and return an (m, d) float64 embedding matrix."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"embedding matrix must be 2-D, got shape {z.shape}")
    if z.shape[0] < 1 or z.shape[1] < 1:
        raise ValueError(f"embedding matrix must be non-empty, got shape {z.shape}")
    if not np.isfinite(z).all():
        raise ValueError("embedding matrix contains non-finite entries")
    return z


def as_labels(labels, n_samples: int | None = None) -> np.ndarray:
    """Validate a label vector.

    Labels are integer class ids and every id in [0, n_classes) must appear
    at least once.
    """
    y = np.asarray(labels)
    if y.ndim != 1 or y.size == 0:
        raise ValueError(f"labels must be a non-empty 1-D vector, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise ValueError(f"labels must be integers, got dtype {y.dtype}")
    y = y.astype(np.int64)
    if n_samples is not None and y.size != n_samples:
        raise ValueError(f"expected {n_samples} labels, got {y.size}")
    if int(y.min()) < 0:
        raise ValueError("class ids must be non-negative")
    n_classes = int(y.max()) + 1
    present = np.unique(y)
    if present.size != n_classes:
        missing = sorted(set(range(n_classes)) - set(present.tolist()))
        raise ValueError(f"class ids must cover [0, {n_classes}); missing {missing}")
    return y


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family plus its bandwidth (the bandwidth is ignored by cosine)."""

    family: str
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}"
            )
        if self.family in RADIAL_FAMILIES and not self.sigma > 0:
            raise ValueError(f"bandwidth must be positive, got {self.sigma}")


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """Evaluate the kernel on a single pair of vectors.

    gaussian: exp(-||x-y||^2 / (2 sigma^2))
    imq:      (1 + ||x-y||^2 / sigma^2)^(-1/2)
    cosine:   <x, y> / (||x|| ||y||), 0 if either norm is zero
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"expected 1-D vectors of equal length, got {x.shape} and {y.shape}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("kernel inputs contain non-finite entries")
    if spec.family == COSINE:
        nx = float(np.linalg.norm(x))
        ny = float(np.linalg.norm(y))
        if nx == 0.0 or ny == 0.0:
            return 0.0
        return float(x @ y / (nx * ny))
    r = float(((x - y) ** 2).sum())
    if spec.family == GAUSSIAN:
        return float(np.exp(-r / (2.0 * spec.sigma * spec.sigma)))
    return float(1.0 / np.sqrt(1.0 + r / (spec.sigma * spec.sigma)))


def sq_dist_matrix(z: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances; each pair evaluated once, so the
    result is exactly symmetric with an exactly zero diagonal."""
    if z.shape[0] == 1:
        return np.zeros((1, 1))
    return squareform(pdist(z, "sqeuclidean"))


def kernel_from_sq_dists(d2: np.ndarray, family: str, sigma: float) -> np.ndarray:
    """Radial kernel matrix from precomputed squared distances."""
    if family not in RADIAL_FAMILIES:
        raise ValueError(f"expected a radial kernel family, got {family!r}")
    if not sigma > 0:
        raise ValueError(f"bandwidth must be positive, got {sigma}")
    if family == GAUSSIAN:
        return np.exp(-d2 / (2.0 * sigma * sigma))
    return 1.0 / np.sqrt(1.0 + d2 / (sigma * sigma))


def cosine_gram(z: np.ndarray) -> np.ndarray:
    """Cosine-similarity Gram matrix; zero rows get similarity 0 everywhere."""
    norms = np.linalg.norm(z, axis=1)
    nz = np.divide(z, norms[:, None], out=np.zeros_like(z), where=norms[:, None] > 0)
    g = nz @ nz.T
    g = np.triu(g, 1)
    g = g + g.T
    np.fill_diagonal(g, np.where(norms > 0, 1.0, 0.0))
    return g


def kernel_matrix(spec: KernelSpec, z, zero_diag: bool = False) -> np.ndarray:
    """Gram matrix K[i, j] = eval_kernel(spec, z_i, z_j), optionally with the
    diagonal forced to zero."""
    z = as_embeddings(z)
    if spec.family == COSINE:
        k = cosine_gram(z)
    else:
        k = kernel_from_sq_dists(sq_dist_matrix(z), spec.family, spec.sigma)
    if zero_diag:
        np.fill_diagonal(k, 0.0)
    return k


def label_kernel_matrix(labels, l1: float = 1.0, l0: float = 0.0,
                        zero_diag: bool = False) -> np.ndarray:
    """Label kernel: l1 where labels agree, l0 where they differ.

    Requires l1 > l0 so that agreement scores strictly above disagreement.
    """
    y = as_labels(labels)
    if not l1 > l0:
        raise ValueError(f"same-class weight must exceed cross-class weight, got l1={l1}, l0={l0}")
    mat = np.where(y[:, None] == y[None, :], float(l1), float(l0))
    if zero_diag:
        np.fill_diagonal(mat, 0.0)
    return mat


def median_sq_distance(z) -> float:
    """Median of the nonzero pairwise squared distances.

    Zero distances (duplicate points) are excluded; if every pair coincides
    the heuristic is undefined and an error is raised.
    """
    z = as_embeddings(z)
    if z.shape[0] < 2:
        raise ValueError("median heuristic needs at least two samples")
    d2 = pdist(z, "sqeuclidean")
    positive = d2[d2 > 0]
    if positive.size == 0:
        raise ValueError("all points are identical; median distance is undefined")
    return float(np.median(positive))
