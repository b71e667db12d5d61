"""End-to-end acceptance checks.

The synthetic experiment (criteria 4-6) trains the default network once on
two simulated 60 s runs and reuses that checkpoint for the sweep and the PSD
comparison. Each test records its measured numbers as a ``detail`` property;
``conftest.py`` prints one pass/fail line per criterion at the end of the run.
"""
import json
import math
import time

import numpy as np
import pytest

from oracles import gru_layer_fd_errors, tiny_model_fd_error
from vemo.cli import main
from vemo.data import Run, filter_run, load_dataset, load_run, make_windows
from vemo.evaluation import (
    max_abs_error,
    noise_sweep,
    one_step_eval,
    psd_band_error,
    relative_error_series,
    rmse,
)
from vemo.nn import load_checkpoint
from vemo.signal import PsdEstimate, ScalingTable, apply_zero_phase, design_butterworth_lowpass, scale

STATES = ("a_x", "a_y", "yaw_rate", "v_x")
EPOCHS = 20


def criterion(number, title):
    return pytest.mark.criterion(number, title)


# ---------------------------------------------------------------------------
# 1. gradients

@criterion(1, "gradient exactness (finite differences, 20 seeds, < 30 s)")
def test_gradient_exactness(record_property):
    t0 = time.perf_counter()
    layer = max(max(gru_layer_fd_errors(s, "elu", "logistic").values()) for s in range(20))
    layer_logistic = max(max(gru_layer_fd_errors(s, "logistic", None).values()) for s in range(20))
    model = max(tiny_model_fd_error(s) for s in range(20))
    elapsed = time.perf_counter() - t0
    record_property("detail", f"layer {max(layer, layer_logistic):.2e} (<= 1e-5), "
                              f"model {model:.2e} (<= 1e-4), {elapsed:.1f} s")
    assert layer <= 1e-5 and layer_logistic <= 1e-5
    assert model <= 1e-4
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# 2. filter

@criterion(2, "8th-order 5 Hz Butterworth gains and zero-phase lag (< 5 s)")
def test_filter_correctness(record_property):
    t0 = time.perf_counter()
    filt = design_butterworth_lowpass(8, 5.0, 100.0)
    g_cut, g_dc, g_oct = filt.gain_db([5.0, 0.0, 10.0])
    # analytic |H|^2 of the prewarped prototype one octave up
    ratio = math.tan(math.pi * 10 / 100) / math.tan(math.pi * 5 / 100)
    analytic = -10 * math.log10(1 + ratio ** 16)
    lags = []
    t = np.arange(3000) / 100.0
    for f in (0.3, 1.0, 2.0, 3.5):
        x = np.sin(2 * np.pi * f * t)
        y = apply_zero_phase(filt, x)
        core = slice(300, -300)
        xc = np.correlate(y[core], x[core], mode="full")
        lags.append(int(np.argmax(xc)) - (x[core].size - 1))
    elapsed = time.perf_counter() - t0
    record_property("detail", f"cutoff {g_cut:.3f} dB, DC {g_dc:.2e} dB, 10 Hz {g_oct:.2f} dB "
                              f"(analytic {analytic:.2f}), lags {lags}, {elapsed:.2f} s")
    assert abs(g_cut + 3.01) <= 0.05
    assert abs(g_dc) < 1e-9
    assert g_oct <= -48.0 and abs(g_oct - analytic) < 1e-6
    assert lags == [0, 0, 0, 0]
    assert elapsed < 5.0


# ---------------------------------------------------------------------------
# 3. windows

def _naive(run, k, table):
    z = scale(run.records, table)
    n = len(run) - k
    X = np.empty((n, k, 8))
    Y = np.empty((n, 4))
    for i in range(n):
        for j in range(k):
            X[i, j] = z[i + j]
        Y[i] = z[i + k, 4:]
    return X, Y


@criterion(3, "make_windows equals the naive double loop on 50 runs (< 5 s)")
def test_reshape_oracle(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    table = ScalingTable.default()
    for _ in range(50):
        T = int(rng.integers(101, 400))
        rec = np.column_stack([
            rng.uniform(0, 100, T), rng.uniform(0, 100, T), rng.uniform(-179, 179, T),
            rng.integers(1, 7, T), rng.normal(0, 5, (T, 3)), rng.uniform(0, 250, T),
        ])
        run = Run(rec)
        ds = make_windows(run, 100, table)
        assert ds.X.shape == (T - 100, 100, 8) and ds.Y.shape == (T - 100, 4)
        X, Y = _naive(run, 100, table)
        np.testing.assert_array_equal(ds.X, X)
        np.testing.assert_array_equal(ds.Y, Y)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"50 runs, {elapsed:.2f} s")
    assert elapsed < 5.0


# ---------------------------------------------------------------------------
# 4-6. synthetic experiment

@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    cfg = {
        "synth": {"n_train_runs": 2, "train_duration_s": 60.0, "test_duration_s": 40.0},
        "train": {"epochs": EPOCHS, "patience": 20},
        "preprocess_cutoffs": [45.0, 25.0, 15.0, 5.0],
    }
    (root / "cfg.json").write_text(json.dumps(cfg))
    timings = {}
    t_all = time.perf_counter()
    for cmd in ("generate", "preprocess", "train", "eval"):
        t0 = time.perf_counter()
        code = main([cmd, "--config", str(root / "cfg.json"), "--workdir", str(root)])
        timings[cmd] = time.perf_counter() - t0
        assert code == 0, cmd
    timings["total"] = time.perf_counter() - t_all
    params = load_checkpoint(root / "model.vemock")
    test = load_dataset(root / "cache" / "test_5Hz.vemods")
    return {"root": root, "params": params, "test": test, "timings": timings}


@criterion(4, "synthetic end-to-end: mean eps_rel < 5 % per channel, E_max >= RMSE (<= 10 min)")
def test_end_to_end(experiment, record_property):
    root = experiment["root"]
    train_s = sum(load_run(p).duration_s for p in (root / "data").glob("train_*.csv"))
    test_run = load_run(root / "data" / "test.csv")
    script = json.loads((root / "data" / "test.script.json").read_text())
    kinds = {s["kind"] for s in script["segments"]}
    report = one_step_eval(experiment["params"], experiment["test"])
    t = experiment["timings"]
    record_property("detail", "mean eps_rel % " + ", ".join(
        f"{c} {v:.3f}" for c, v in zip(STATES, report.mean_rel)))
    record_property("detail", "RMSE " + ", ".join(f"{c} {v:.3f}" for c, v in zip(STATES, report.rmse))
                    + " | E_max " + ", ".join(f"{c} {v:.3f}" for c, v in zip(STATES, report.e_max)))
    record_property("detail", f"train {train_s:.0f} s of telemetry, test {test_run.duration_s:.0f} s, "
                              f"{EPOCHS} epochs; pipeline {t['total']:.0f} s (train {t['train']:.0f} s)")
    assert train_s >= 120.0 and test_run.duration_s == 40.0
    assert {"sine_steer", "brake"} <= kinds
    assert experiment["params"].arch.encoder_widths == (32, 32)
    assert np.all(np.isfinite(report.mean_rel))
    assert np.all(report.mean_rel < 5.0)
    assert np.all(report.e_max >= report.rmse)
    assert t["total"] <= 600.0


@criterion(5, "noise sweep 45/25/15 Hz: mean eps_rel <= 3x matched row (<= 2 min)")
def test_noise_robustness(experiment, record_property):
    raw = load_run(experiment["root"] / "data" / "test.csv")
    t0 = time.perf_counter()
    sweep = noise_sweep(experiment["params"], raw, (45.0, 25.0, 15.0), 5.0)
    elapsed = time.perf_counter() - t0
    matched = sweep.metrics["mean_rel"][-1]
    ratios = sweep.metrics["mean_rel"][:-1] / matched
    for c, row in zip(sweep.cutoffs[:-1], ratios):
        record_property("detail", f"{c:g} Hz ratio " + ", ".join(f"{n} {v:.2f}" for n, v in zip(STATES, row)))
    record_property("detail", f"sweep {elapsed:.1f} s")
    assert sweep.cutoffs == (45.0, 25.0, 15.0, 5.0)
    assert np.all(ratios <= 3.0)
    assert elapsed <= 120.0


@criterion(6, "PSD band error over 0.25-5 Hz <= 0.25 for a_x, a_y, yaw_rate (< 30 s)")
def test_psd_fidelity(experiment, record_property):
    t0 = time.perf_counter()
    report = one_step_eval(experiment["params"], experiment["test"])
    errs = {c: report.band_error(c, (0.25, 5.0)) for c in ("a_x", "a_y", "yaw_rate")}
    elapsed = time.perf_counter() - t0
    record_property("detail", ", ".join(f"{c} {v:.4f}" for c, v in errs.items()) + f"; {elapsed:.1f} s")
    assert all(v <= 0.25 for v in errs.values())
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# 7. determinism

DET_CONFIG = {
    "synth": {"train_duration_s": 30.0, "test_duration_s": 30.0},
    "train": {"epochs": 2},
    "preprocess_cutoffs": [45.0, 5.0],
    "sweep_cutoffs": [45.0, 15.0, 5.0],
}


def _pipeline(root):
    (root / "cfg.json").write_text(json.dumps(DET_CONFIG))
    for cmd in ("generate", "preprocess", "train", "eval", "sweep"):
        assert main([cmd, "--config", str(root / "cfg.json"), "--workdir", str(root), "--seed", "7"]) == 0


@criterion(7, "two seeded pipeline runs give bit-identical artifacts")
def test_determinism(tmp_path, record_property):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    _pipeline(a)
    _pipeline(b)
    compared = 0
    for p in sorted(a.rglob("*")):
        if p.is_dir() or p.name == "model.log.csv":
            continue
        assert (b / p.relative_to(a)).read_bytes() == p.read_bytes(), p.relative_to(a)
        compared += 1
    # the training log is identical apart from its wall-clock column
    strip = lambda path: [line.rsplit(",", 1)[0] for line in path.read_text().splitlines()]  # noqa: E731
    assert strip(a / "model.log.csv") == strip(b / "model.log.csv")
    record_property("detail", f"{compared} files byte-identical (checkpoint, caches, reports, SVGs); "
                              "training log identical except wall time")
    assert compared >= 20


# ---------------------------------------------------------------------------
# 8. metrics

def _per_sample(y, y_hat):
    y = np.asarray(y, dtype=float)
    return 100.0 * np.abs(y - np.asarray(y_hat, dtype=float)) / np.abs(y)


def _relative_error_contract(fn):
    np.testing.assert_allclose(fn([10.0, 5.0], [9.0, 5.0]), [10.0, 0.0])
    np.testing.assert_allclose(fn([10.0, 5.0], [10.0, 4.0]), [0.0, 10.0])


@criterion(8, "metric closed forms; per-sample normalisation mutant is rejected")
def test_metric_closed_forms(record_property):
    assert rmse([1, 2], [1, 2]) == 0.0
    assert rmse([0, 0], [1, 1]) == 1.0
    assert rmse([3, 4], [0, 0]) == pytest.approx(math.sqrt(12.5), rel=1e-15)
    assert max_abs_error([1, 2, 3], [1, 0, 3]) == 2.0
    assert max_abs_error([4.0], [1.5]) == 2.5
    np.testing.assert_array_equal(relative_error_series([3, -4], [3, -4]), [0, 0])
    with pytest.raises(ValueError):
        relative_error_series([0, 0], [1, 1])
    _relative_error_contract(relative_error_series)
    with pytest.raises(AssertionError):
        _relative_error_contract(_per_sample)
    f = np.linspace(0, 50, 257)
    p = np.exp(-f / 10)
    ref, pred = PsdEstimate(f, p, 512, 0.5), PsdEstimate(f, 2 * p, 512, 0.5)
    m = (f >= 0.25) & (f <= 20)
    closed = math.log(2) * math.sqrt(m.sum()) / np.linalg.norm(np.log(p[m]))
    assert psd_band_error(ref, ref, (0.25, 20)) == 0.0
    assert psd_band_error(ref, pred, (0.25, 20)) == pytest.approx(closed, rel=1e-12)
    record_property("detail", "rmse, eps_rel, E_max and PSD band error match closed forms; mutant fails")
