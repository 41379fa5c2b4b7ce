"""Command-line surface: subcommands, config precedence, exit codes."""

import subprocess
import sys

import numpy as np
import pytest

from kerndep.cli import main, read_config_file
from kerndep.tasks import load_embeddings, synth_dataset, save_embeddings


@pytest.fixture()
def pool_path(tmp_path):
    """Separable synthetic pool written to disk once per test."""
    ds = synth_dataset(6, 24, 4, 6.0, 1.0, np.random.default_rng(0))
    path = tmp_path / "pool.emb"
    save_embeddings(ds, path)
    return path


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ------------------------------------------------------------------ synth


def test_synth_writes_loadable_dataset(tmp_path, capsys):
    out = tmp_path / "synth.emb"
    code, stdout, _ = run_cli(
        capsys,
        ["synth", "--classes", "6", "--per-class", "10", "--dim", "5",
         "--seed", "3", "--out", str(out)],
    )
    assert code == 0
    assert "wrote 6 classes" in stdout
    ds = load_embeddings(out)
    assert ds.n_classes == 6
    assert ds.d == 5
    assert ds.sizes == [10] * 6


def test_synth_same_seed_same_bytes(tmp_path, capsys):
    a = tmp_path / "a.emb"
    b = tmp_path / "b.emb"
    for out in (a, b):
        argv = ["synth", "--classes", "5", "--per-class", "6", "--dim", "3",
                "--seed", "42", "--out", str(out)]
        assert main(argv) == 0
    capsys.readouterr()
    assert a.read_bytes() == b.read_bytes()


def test_synth_csv_suffix_switches_format(tmp_path, capsys):
    out = tmp_path / "synth.csv"
    code, _, _ = run_cli(
        capsys,
        ["synth", "--classes", "5", "--per-class", "4", "--dim", "2",
         "--out", str(out)],
    )
    assert code == 0
    assert out.read_text().startswith("label,f0,f1")


# ------------------------------------------------------------------- hsic


def test_hsic_table_has_grid_rows_and_selection(pool_path, capsys):
    code, stdout, _ = run_cli(capsys, ["hsic", "--embeddings", str(pool_path)])
    assert code == 0
    lines = stdout.splitlines()
    data_lines = [
        l for l in lines if l and not l.lstrip().startswith(("coeff", "selected"))
    ]
    assert len(data_lines) == 15
    assert sum(1 for l in data_lines if l.rstrip().endswith("*")) == 1
    assert lines[-1].startswith("selected: coeff=")


def test_hsic_csv_format(pool_path, capsys):
    code, stdout, _ = run_cli(
        capsys, ["hsic", "--embeddings", str(pool_path), "--format", "csv"]
    )
    assert code == 0
    lines = stdout.splitlines()
    assert lines[0] == "coeff,sigma,hsic,variance,power_ratio,selected"
    assert len(lines) == 16
    assert sum(1 for l in lines[1:] if l.endswith(",1")) == 1
    # full-precision floats round-trip through repr
    first = lines[1].split(",")
    assert float(first[0]) == 0.001


def test_hsic_single_coefficient_flag(pool_path, capsys):
    code, stdout, _ = run_cli(
        capsys,
        ["hsic", "--embeddings", str(pool_path), "--coeff", "0.5",
         "--format", "csv"],
    )
    assert code == 0
    assert len(stdout.splitlines()) == 2


def test_hsic_custom_grid_flag(pool_path, capsys):
    code, stdout, _ = run_cli(
        capsys,
        ["hsic", "--embeddings", str(pool_path), "--grid", "0.5,1.0,2.0",
         "--format", "csv"],
    )
    assert code == 0
    assert len(stdout.splitlines()) == 4


def test_hsic_coeff_and_grid_are_mutually_exclusive(pool_path, capsys):
    code, _, stderr = run_cli(
        capsys,
        ["hsic", "--embeddings", str(pool_path), "--coeff", "1.0",
         "--grid", "1.0,2.0"],
    )
    assert code == 2
    assert "mutually exclusive" in stderr


def test_hsic_label_file_changes_the_pairing(pool_path, tmp_path, capsys):
    ds = load_embeddings(pool_path)
    n = sum(ds.sizes)
    rng = np.random.default_rng(5)
    shuffled = rng.permutation(np.repeat(np.arange(ds.n_classes), ds.sizes))
    label_file = tmp_path / "labels.txt"
    label_file.write_text("\n".join(str(v) for v in shuffled))
    code, with_file, _ = run_cli(
        capsys,
        ["hsic", "--embeddings", str(pool_path), "--labels-from",
         str(label_file), "--format", "csv"],
    )
    assert code == 0
    code, embedded, _ = run_cli(
        capsys, ["hsic", "--embeddings", str(pool_path), "--format", "csv"]
    )
    assert code == 0
    assert with_file != embedded


def test_hsic_bad_label_file_exits_two(pool_path, tmp_path, capsys):
    label_file = tmp_path / "labels.txt"
    label_file.write_text("0 1 zebra")
    code, _, stderr = run_cli(
        capsys,
        ["hsic", "--embeddings", str(pool_path), "--labels-from", str(label_file)],
    )
    assert code == 2
    assert "integers" in stderr


# ----------------------------------------------------------------- errors


def test_missing_embeddings_file_exits_one(capsys):
    code, _, stderr = run_cli(capsys, ["hsic", "--embeddings", "/nonexistent.emb"])
    assert code == 1
    assert "error:" in stderr


def test_corrupt_binary_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.emb"
    bad.write_bytes(b"EMB1" + b"\x07")  # right magic, wrong version
    code, _, stderr = run_cli(capsys, ["hsic", "--embeddings", str(bad)])
    assert code == 1
    assert "version" in stderr


def test_missing_subcommand_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_eval_invalid_gamma_exits_two(pool_path, capsys):
    code, _, stderr = run_cli(
        capsys,
        ["eval", "--embeddings", str(pool_path), "--episodes", "1",
         "--gamma", "-1", "--jobs", "1"],
    )
    assert code == 2
    assert "gamma" in stderr


# ------------------------------------------------------------------- eval


def eval_argv(pool_path, *extra):
    return ["eval", "--embeddings", str(pool_path), "--episodes", "3",
            "--steps", "2", "--jobs", "1", *extra]


def test_eval_prints_report(pool_path, capsys):
    code, stdout, _ = run_cli(capsys, eval_argv(pool_path))
    assert code == 0
    lines = stdout.splitlines()
    assert lines[0] == "episodes: 3"
    assert lines[1].startswith("mean_accuracy: ")
    assert lines[2].startswith("ci95: ")
    acc = float(lines[1].split(": ")[1])
    assert 0.0 <= acc <= 1.0


def test_eval_repeated_invocation_is_identical(pool_path, capsys):
    _, first, _ = run_cli(capsys, eval_argv(pool_path, "--verbose"))
    _, second, _ = run_cli(capsys, eval_argv(pool_path, "--verbose"))
    assert first == second


def test_eval_verbose_emits_one_line_per_episode(pool_path, capsys):
    code, stdout, _ = run_cli(capsys, eval_argv(pool_path, "--verbose"))
    assert code == 0
    episode_lines = [l for l in stdout.splitlines() if l.startswith("episode ")]
    assert len(episode_lines) == 3
    assert "accuracy=" in episode_lines[0]


def test_eval_ncc_loss_mode(pool_path, capsys):
    code, stdout, _ = run_cli(capsys, eval_argv(pool_path, "--loss", "ncc"))
    assert code == 0
    assert "mean_accuracy:" in stdout


def test_eval_share_zz_flags_parse(pool_path, capsys):
    code, _, _ = run_cli(capsys, eval_argv(pool_path, "--share-zz"))
    assert code == 0
    code, _, _ = run_cli(capsys, eval_argv(pool_path, "--no-share-zz"))
    assert code == 0


def test_eval_dump_heatmaps_writes_pgm_files(pool_path, tmp_path, capsys):
    heat_dir = tmp_path / "heat"
    code, _, _ = run_cli(
        capsys,
        ["eval", "--embeddings", str(pool_path), "--episodes", "2",
         "--steps", "2", "--jobs", "1", "--dump-heatmaps", str(heat_dir)],
    )
    assert code == 0
    names = sorted(p.name for p in heat_dir.iterdir())
    assert names == [
        "episode_0000_query.pgm",
        "episode_0000_support.pgm",
        "episode_0001_query.pgm",
        "episode_0001_support.pgm",
    ]
    for p in heat_dir.iterdir():
        assert p.read_bytes().startswith(b"P5\n")


# ------------------------------------------------------- config precedence


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# a comment\n"
        "\n"
        "gamma = 1.5   # trailing comment\n"
        "steps=7\n"
        "share_zz_coefficient = off\n"
        "grid_coefficients = 0.5, 1.0\n"
        "n_max = 12\n"
    )
    values = read_config_file(cfg)
    assert values == {
        "gamma": 1.5,
        "steps": 7,
        "share_zz_coefficient": False,
        "grid_coefficients": (0.5, 1.0),
        "n_max": 12,
    }


def test_config_file_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("warmup=5\n")
    with pytest.raises(ValueError, match="unknown config key 'warmup'"):
        read_config_file(cfg)


def test_config_file_rejects_malformed_lines(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("gamma 1.0\n")
    with pytest.raises(ValueError, match="key=value"):
        read_config_file(cfg)
    cfg.write_text("steps=soon\n")
    with pytest.raises(ValueError, match="bad value for 'steps'"):
        read_config_file(cfg)


def test_eval_unknown_config_key_exits_two(pool_path, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("momentum=0.9\n")
    code, _, stderr = run_cli(
        capsys,
        ["eval", "--embeddings", str(pool_path), "--episodes", "1",
         "--jobs", "1", "--config", str(cfg)],
    )
    assert code == 2
    assert "momentum" in stderr


def test_flag_beats_config_beats_default(pool_path, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("steps=5\ngamma=1.0\n")
    base = ["eval", "--embeddings", str(pool_path), "--episodes", "2",
            "--jobs", "1", "--verbose"]

    # config layer: file values behave exactly like explicit flags
    _, from_config, _ = run_cli(capsys, [*base, "--config", str(cfg)])
    _, from_flags, _ = run_cli(capsys, [*base, "--steps", "5", "--gamma", "1.0"])
    assert from_config == from_flags

    # flag layer: an explicit flag overrides the same key in the file
    _, overridden, _ = run_cli(capsys, [*base, "--config", str(cfg), "--steps", "2"])
    _, two_steps, _ = run_cli(capsys, [*base, "--steps", "2", "--gamma", "1.0"])
    assert overridden == two_steps
    assert overridden != from_config

    # default layer: dropping both flag and file key falls back to steps=40
    _, defaults, _ = run_cli(capsys, [*base, "--gamma", "1.0"])
    assert defaults != from_config


# ------------------------------------------------------------- entrypoints


def test_module_entrypoint_runs(tmp_path):
    out = tmp_path / "m.emb"
    proc = subprocess.run(
        [sys.executable, "-m", "kerndep", "synth", "--classes", "5",
         "--per-class", "4", "--dim", "2", "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert out.exists()


def test_console_script_help():
    proc = subprocess.run(
        ["kerndep", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "synth" in proc.stdout
    assert "hsic" in proc.stdout
    assert "eval" in proc.stdout
