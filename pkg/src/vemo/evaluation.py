"""One-step evaluation: error metrics, histograms, PSD comparison and noise sweeps."""
from dataclasses import dataclass, field
import csv
import io

import numpy as np

from .channels import STATE_CHANNELS, UNITS
from .data import FILTER_ORDER, SAMPLE_RATE_HZ, WINDOW, filter_run, make_windows
from .errors import ArtifactMismatchError, LengthError, ShapeError
from .signal import DEFAULT_PSD_OVERLAP, DEFAULT_PSD_SEGMENT, ScalingTable, unscale, welch_psd
from .train import predict

HIST_BINS = 100
HIST_PERCENTILE = 99.5
RIDE_BAND_HZ = (0.25, 20.0)
SWEEP_CUTOFFS_HZ = (45.0, 25.0, 15.0, 5.0, 1.0)


def _pair(y, y_hat):
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.size != y_hat.size:
        raise LengthError(f"length mismatch: {y.size} vs {y_hat.size}")
    if y.size == 0:
        raise LengthError("empty sequences")
    return y, y_hat


def rmse(y, y_hat):
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def relative_error_series(y, y_hat):
    """``100 |y_i - y_hat_i| / max_i |y_i|`` in percent, normalised over the whole sequence."""
    y, y_hat = _pair(y, y_hat)
    peak = np.max(np.abs(y))
    if not peak > 0:
        raise ValueError("reference is identically zero; relative error undefined")
    return 100.0 * np.abs(y - y_hat) / peak


def max_abs_error(y, y_hat):
    y, y_hat = _pair(y, y_hat)
    return float(np.max(np.abs(y - y_hat)))


def error_histogram(rel, bins=HIST_BINS, percentile=HIST_PERCENTILE):
    """Uniform bins over ``[0, p99.5]``; anything beyond lands in the last bin."""
    rel = np.asarray(rel, dtype=np.float64)
    top = float(np.percentile(rel, percentile))
    if not top > 0:
        top = 1.0
    counts, edges = np.histogram(np.minimum(rel, top), bins=bins, range=(0.0, top))
    return counts, edges


def psd_band_error(reference, prediction, band):
    """Relative L2 distance of the natural-log PSDs over ``band = (f_lo, f_hi)``.

    ``||log P_pred - log P_ref|| / ||log P_ref||`` over the bins with
    ``f_lo <= f <= f_hi``.
    """
    f = reference.frequencies
    if f.shape != prediction.frequencies.shape or not np.array_equal(f, prediction.frequencies):
        raise ShapeError("PSD frequency grids differ")
    lo, hi = band
    if not (lo < hi and lo >= f[0] and hi <= f[-1]):
        raise ValueError(f"band {band} Hz outside the PSD grid [{f[0]}, {f[-1]}] Hz")
    m = (f >= lo) & (f <= hi)
    if not m.any():
        raise ValueError(f"band {band} Hz contains no frequency bins")
    tiny = np.finfo(np.float64).tiny
    lr = np.log(np.maximum(reference.power[m], tiny))
    lp = np.log(np.maximum(prediction.power[m], tiny))
    denom = np.linalg.norm(lr)
    if denom == 0:
        raise ValueError("reference log-power vanishes over the band")
    return float(np.linalg.norm(lp - lr) / denom)


@dataclass
class EvalReport:
    """Per-channel metrics in physical units; array columns follow ``STATE_CHANNELS``."""

    reference: np.ndarray
    prediction: np.ndarray
    rel_error: np.ndarray
    rmse: np.ndarray
    mean_rel: np.ndarray
    median_rel: np.ndarray
    e_max: np.ndarray
    histograms: list
    psd: dict
    sample_rate_hz: float = SAMPLE_RATE_HZ
    channels: tuple = STATE_CHANNELS

    def metric(self, name, channel):
        return float(getattr(self, name)[self.channels.index(channel)])

    def band_error(self, channel, band):
        ref, pred = self.psd[channel]
        return psd_band_error(ref, pred, band)


def _check_meta(params, k, scaling):
    meta = params.meta or {}
    diff = {}
    if "k" in meta and int(meta["k"]) != int(k):
        diff["k"] = (meta["k"], k)
    if "scaling" in meta:
        ck = ScalingTable.from_dict(meta["scaling"])
        for c in ck.factors:
            if ck.factors[c] != scaling.factors[c]:
                diff[f"scaling.{c}"] = (ck.factors[c], scaling.factors[c])
    if diff:
        lines = ", ".join(f"{k}: checkpoint={a} data={b}" for k, (a, b) in diff.items())
        raise ArtifactMismatchError(f"checkpoint/data mismatch: {lines}", diff)


def evaluate_predictions(reference, prediction, sample_rate_hz=SAMPLE_RATE_HZ,
                         psd_segment=DEFAULT_PSD_SEGMENT, psd_overlap=DEFAULT_PSD_OVERLAP):
    """Build an :class:`EvalReport` from physical-unit ``(N, 4)`` arrays."""
    y = np.asarray(reference, dtype=np.float64)
    yh = np.asarray(prediction, dtype=np.float64)
    if y.shape != yh.shape or y.ndim != 2 or y.shape[1] != len(STATE_CHANNELS):
        raise ShapeError(f"reference/prediction must both be (N, 4), got {y.shape} and {yh.shape}")
    n = y.shape[0]
    rel = np.column_stack([relative_error_series(y[:, c], yh[:, c]) for c in range(y.shape[1])])
    seg = min(int(psd_segment), n)
    psd = {
        name: (welch_psd(y[:, c], sample_rate_hz, seg, psd_overlap),
               welch_psd(yh[:, c], sample_rate_hz, seg, psd_overlap))
        for c, name in enumerate(STATE_CHANNELS)
    }
    return EvalReport(
        reference=y,
        prediction=yh,
        rel_error=rel,
        rmse=np.array([rmse(y[:, c], yh[:, c]) for c in range(4)]),
        mean_rel=rel.mean(axis=0),
        median_rel=np.median(rel, axis=0),
        e_max=np.array([max_abs_error(y[:, c], yh[:, c]) for c in range(4)]),
        histograms=[error_histogram(rel[:, c]) for c in range(4)],
        psd=psd,
        sample_rate_hz=sample_rate_hz,
    )


def one_step_eval(params, test, scaling=None, sample_rate_hz=SAMPLE_RATE_HZ, **psd_kwargs):
    """Predict every window of ``test`` from ground-truth history and score it."""
    scaling = scaling or test.scaling
    if scaling != test.scaling:
        raise ArtifactMismatchError("dataset was built with a different scaling table")
    _check_meta(params, test.k, scaling)
    pred = predict(params, test.X)
    return evaluate_predictions(
        unscale(test.Y, scaling), unscale(pred, scaling), sample_rate_hz, **psd_kwargs
    )


@dataclass
class SweepMatrix:
    """Metrics for inputs filtered at several cutoffs against one reference cutoff.

    ``metrics[name]`` is ``(len(cutoffs), 4)``; the last row is the matched
    (training-cutoff) case.
    """

    training_cutoff: float
    cutoffs: tuple
    metrics: dict
    reports: list = field(default_factory=list, repr=False)

    def row(self, cutoff):
        return self.cutoffs.index(float(cutoff))

    def value(self, metric, cutoff, channel):
        return float(self.metrics[metric][self.row(cutoff), STATE_CHANNELS.index(channel)])


def sweep_rows(input_cutoffs, training_cutoff):
    """Input cutoffs above the training cutoff (descending) plus the matched row."""
    above = sorted({float(c) for c in input_cutoffs if float(c) > training_cutoff}, reverse=True)
    return tuple(above) + (float(training_cutoff),)


def noise_sweep(params, raw_test_run, input_cutoffs=SWEEP_CUTOFFS_HZ, training_cutoff=5.0,
                scaling=None, k=None, order=FILTER_ORDER):
    """Feed inputs filtered at each cutoff; score against the training-cutoff reference."""
    bad = [c for c in input_cutoffs if float(c) < training_cutoff]
    if bad:
        raise ValueError(f"input cutoffs {bad} Hz below the training cutoff {training_cutoff} Hz")
    scaling = scaling or ScalingTable.default()
    k = int(k if k is not None else (params.meta or {}).get("k", WINDOW))
    _check_meta(params, k, scaling)
    reference = make_windows(filter_run(raw_test_run, training_cutoff, order), k, scaling)
    y = unscale(reference.Y, scaling)
    rows = sweep_rows(input_cutoffs, training_cutoff)
    reports = []
    for c in rows:
        if c == training_cutoff:
            X = reference.X
        else:
            X = make_windows(filter_run(raw_test_run, c, order), k, scaling).X
        yh = unscale(predict(params, X), scaling)
        reports.append(evaluate_predictions(y, yh, raw_test_run.sample_rate_hz))
    metrics = {
        name: np.array([getattr(r, name) for r in reports])
        for name in ("rmse", "mean_rel", "median_rel", "e_max")
    }
    return SweepMatrix(float(training_cutoff), rows, metrics, reports)


# ---------------------------------------------------------------------------
# text and table output


def format_report(report, title="Error metrics for predicted signals"):
    """Plain-text table: Signal | RMSE | Mean eps_rel [%] | Median eps_rel [%] | E_max."""
    lines = [title, f"{'Signal':<10} {'RMSE':>10} {'Mean e_rel[%]':>14} {'Median e_rel[%]':>16} {'E_max':>10}  units"]
    for c, name in enumerate(report.channels):
        lines.append(
            f"{name:<10} {report.rmse[c]:>10.3f} {report.mean_rel[c]:>14.3f} "
            f"{report.median_rel[c]:>16.3f} {report.e_max[c]:>10.3f}  {UNITS[name]}"
        )
    return "\n".join(lines) + "\n"


def format_sweep(sweep, title=None):
    """Sweep table: one line per (channel, metric), one column per input cutoff."""
    title = title or f"Error metrics for inputs at different frequencies (trained at {sweep.training_cutoff:g} Hz)"
    head = f"{'Signal':<10} {'Metric':<12}" + "".join(f"{f'{c:g} Hz':>11}" for c in sweep.cutoffs)
    lines = [title, head]
    for metric, label in (("rmse", "RMSE"), ("mean_rel", "mean e_rel"), ("median_rel", "median e_rel"),
                          ("e_max", "E_max")):
        for ci, name in enumerate(STATE_CHANNELS):
            vals = "".join(f"{v:>11.3f}" for v in sweep.metrics[metric][:, ci])
            lines.append(f"{name:<10} {label:<12}{vals}")
    return "\n".join(lines) + "\n"


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def report_tables(report):
    """CSV texts keyed by file stem: metrics, histogram, relative_error, psd."""
    ch = report.channels
    tables = {}
    tables["metrics"] = _csv(
        ["channel", "rmse", "mean_rel_pct", "median_rel_pct", "e_max"],
        [[name, report.rmse[c], report.mean_rel[c], report.median_rel[c], report.e_max[c]]
         for c, name in enumerate(ch)],
    )
    hist_rows = []
    for c, name in enumerate(ch):
        counts, edges = report.histograms[c]
        hist_rows += [[name, edges[i], edges[i + 1], int(counts[i])] for i in range(len(counts))]
    tables["histogram"] = _csv(["channel", "bin_lo_pct", "bin_hi_pct", "count"], hist_rows)
    n = report.reference.shape[0]
    t = np.arange(n) / report.sample_rate_hz
    cols = []
    for name in ch:
        cols += [f"{name}_ref", f"{name}_pred", f"{name}_rel_pct"]
    rows = []
    for i in range(n):
        row = [t[i]]
        for c in range(len(ch)):
            row += [report.reference[i, c], report.prediction[i, c], report.rel_error[i, c]]
        rows.append(row)
    tables["relative_error"] = _csv(["t"] + cols, rows)
    f = report.psd[ch[0]][0].frequencies
    psd_cols = []
    for name in ch:
        psd_cols += [f"{name}_ref", f"{name}_pred"]
    psd_rows = [
        [f[i]] + [v for name in ch for v in (report.psd[name][0].power[i], report.psd[name][1].power[i])]
        for i in range(len(f))
    ]
    tables["psd"] = _csv(["frequency_hz"] + psd_cols, psd_rows)
    return tables


def sweep_table(sweep):
    rows = []
    for r, c in enumerate(sweep.cutoffs):
        for ci, name in enumerate(STATE_CHANNELS):
            rows.append([c, name] + [sweep.metrics[m][r, ci] for m in ("rmse", "mean_rel", "median_rel", "e_max")])
    return _csv(["input_cutoff_hz", "channel", "rmse", "mean_rel_pct", "median_rel_pct", "e_max"], rows)
