import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from tsgdiff.cli import read_samples, run, write_samples
from tsgdiff.data import TimeSeriesTable, prepare_windows, write_csv

FAST = ["--window-size", "24", "--hidden-dim", "8", "--latent-dim", "4", "--diffusion-steps", "40",
        "--epochs", "2", "--batch-size", "64"]


def _cli(*argv):
    return run([str(a) for a in argv])


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_build_graphs_finds_period_12(sine_csv, tmp_path):
    out = tmp_path / "g"
    assert _cli("build-graphs", "--data", sine_csv, "--out-dir", out, "--edge-lists") == 0
    rows = _rows(out / "graphs.csv")
    assert len(rows) == 300 - 48 + 1
    assert {r["periods"] for r in rows} == {"12"}
    assert {int(r["edges"]) for r in rows} == {47 + 36}
    edges = (out / "edges" / "window_000000.txt").read_text().split("\n")
    assert edges[0] == "0 1"


def test_build_graphs_constant_series(tmp_path):
    data = tmp_path / "flat.csv"
    write_csv(data, np.full((100, 2), 3.5), ["a", "b"])
    assert _cli("build-graphs", "--data", data, "--out-dir", tmp_path / "g") == 0
    rows = _rows(tmp_path / "g" / "graphs.csv")
    assert {r["periods"] for r in rows} == {""}
    assert {int(r["edges"]) for r in rows} == {47}


def test_missing_dataset_reports_error(tmp_path, capsys):
    assert _cli("build-graphs", "--data", tmp_path / "nope.csv", "--out-dir", tmp_path) == 1
    assert "ERROR MissingFile" in capsys.readouterr().err


def test_bad_config_reports_error(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("epochs = -3\n")
    assert _cli("train", "--config", cfg, "--data", tmp_path / "x.csv") == 1
    assert "ERROR ConfigError" in capsys.readouterr().err


def test_train_with_all_ablations_logs_zeros(sine_csv, tmp_path):
    out = tmp_path / "run"
    assert _cli("train", "--data", sine_csv, "--out-dir", out, *FAST, "--no-kl", "--no-denoising", "--no-fourier") == 0
    rows = _rows(out / "train_log.csv")
    assert [int(r["epoch"]) for r in rows] == [1, 2]
    for r in rows:
        assert float(r["kl"]) == float(r["denoising"]) == float(r["fourier"]) == 0.0
        assert float(r["total"]) == float(r["recon"]) > 0
    assert (out / "weights.tsgd").exists() and (out / "config.txt").exists()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_exit_code(sine_csv, tmp_path, capsys):
    code = _cli("train", "--data", sine_csv, "--out-dir", tmp_path, *FAST, "--lr", "1e300")
    assert code == 2
    assert "ERROR NonFiniteLoss" in capsys.readouterr().err


def _pipeline(sine_csv, out, seed=3):
    assert _cli("train", "--data", sine_csv, "--out-dir", out, "--seed", seed, *FAST) == 0
    assert _cli("sample", "--data", sine_csv, "--out-dir", out, "--seed", seed, "--n", 25, *FAST) == 0
    assert _cli("evaluate", "--data", sine_csv, "--out-dir", out, "--seed", seed, "--synth",
                out / "samples.csv", *FAST) == 0


def test_same_seed_same_bytes(sine_csv, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _pipeline(sine_csv, a)
    _pipeline(sine_csv, b)
    for name in ("weights.tsgd", "train_log.csv", "samples.csv", "metrics.json", "kde.csv", "pca.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    c = tmp_path / "c"
    assert _cli("train", "--data", sine_csv, "--out-dir", c, "--seed", 4, *FAST) == 0
    assert (a / "weights.tsgd").read_bytes() != (c / "weights.tsgd").read_bytes()


def test_metrics_report_keys(sine_csv, tmp_path):
    _pipeline(sine_csv, tmp_path)
    report = json.loads((tmp_path / "metrics.json").read_text())
    base = ["topo_fid", "s_edit_mean", "s_entropy_mean", "correlational", "discriminative", "predictive"]
    expected = {f"{m}{s}" for m in base for s in ("", "_min", "_max")} | {"pair_count", "seed", "runs", "pairing"}
    assert set(report) == expected
    assert report["runs"] == 5 and report["pair_count"] == 1000
    assert 0 <= report["topo_fid"] <= 1
    samples = read_samples(tmp_path / "samples.csv")
    assert samples.shape == (25, 24, 2)
    # decoded values are denormalized into the data range of the sine
    assert np.all(np.abs(samples) <= 1.0 + 1e-9)


def test_sample_zero_and_deterministic(sine_csv, tmp_path):
    assert _cli("train", "--data", sine_csv, "--out-dir", tmp_path, *FAST) == 0
    assert _cli("sample", "--out-dir", tmp_path, "--n", 0) == 0
    assert (tmp_path / "samples.csv").read_text().strip() == "window_id,t,a,b"
    outs = []
    for seed in (1, 2):
        assert _cli("sample", "--out-dir", tmp_path, "--n", 4, "--deterministic", "--seed", seed) == 0
        outs.append(read_samples(tmp_path / "samples.csv"))
    # the starting latents depend on the seed
    assert not np.array_equal(outs[0], outs[1])
    again = tmp_path / "again"
    assert _cli("sample", "--out-dir", again, "--weights", tmp_path / "weights.tsgd", "--n", 4,
                "--deterministic", "--seed", 2) == 0
    assert np.array_equal(read_samples(again / "samples.csv"), outs[1])


def test_digest_checked_with_config(sine_csv, tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text(f"dataset_path = {sine_csv}\nwindow_size = 24\nhidden_dim = 8\nlatent_dim = 4\n"
                   "diffusion_steps = 40\nepochs = 1\n")
    assert _cli("train", "--config", cfg, "--out-dir", tmp_path) == 0
    assert _cli("sample", "--config", cfg, "--out-dir", tmp_path, "--n", 2) == 0
    assert _cli("sample", "--config", cfg, "--out-dir", tmp_path, "--n", 2, "--epochs", 9) == 1
    assert "ERROR DigestMismatch" in capsys.readouterr().err


def test_corrupt_weights_reported(tmp_path, capsys):
    (tmp_path / "weights.tsgd").write_bytes(b"JUNKJUNK")
    assert _cli("sample", "--out-dir", tmp_path, "--n", 1) == 1
    assert "ERROR CorruptWeights" in capsys.readouterr().err


def _real_and_noise(tmp_path, n_real=80, w=24):
    t = np.arange(n_real + w - 1)
    values = np.stack([np.sin(2 * np.pi * t / 12), np.sin(2 * np.pi * t / 12 + 1.0)], axis=1)
    data = tmp_path / "real.csv"
    write_csv(data, values, ["a", "b"])
    wb = prepare_windows(TimeSeriesTable(values, ["a", "b"]), w, 1)
    lo, hi = wb.norm.per_feature_min, wb.norm.per_feature_max
    real_raw = (wb.windows + 1) / 2 * (hi - lo) + lo
    noise = np.random.default_rng(0).uniform(lo, hi, size=real_raw.shape)
    write_samples(tmp_path / "self.csv", real_raw, ["a", "b"])
    write_samples(tmp_path / "noise.csv", noise, ["a", "b"])
    return data


def test_evaluate_self_and_noise(tmp_path):
    data = _real_and_noise(tmp_path)
    assert _cli("evaluate", "--data", data, "--window-size", 24, "--synth", tmp_path / "self.csv",
                "--pairing", "identity", "--out-dir", tmp_path / "self") == 0
    me = json.loads((tmp_path / "self" / "metrics.json").read_text())
    assert me["topo_fid"] == 1.0
    assert me["correlational"] == pytest.approx(0.0, abs=1e-12)
    assert _cli("evaluate", "--data", data, "--window-size", 24, "--synth", tmp_path / "noise.csv",
                "--out-dir", tmp_path / "noise") == 0
    noise = json.loads((tmp_path / "noise" / "metrics.json").read_text())
    assert noise["topo_fid"] < me["topo_fid"]
    assert noise["discriminative"] > me["discriminative"]
    kde = _rows(tmp_path / "self" / "kde.csv")
    assert list(kde[0]) == ["x", "density_real", "density_synth"]


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "tsgdiff.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("build-graphs", "train", "sample", "evaluate"):
        assert cmd in proc.stdout
