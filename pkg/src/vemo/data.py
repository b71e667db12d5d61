"""Telemetry runs, CSV import/export, validation and sliding-window datasets."""
import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._container import read_container, write_container
from .channels import ALL_CHANNELS, CONTROL_CHANNELS, N_CHANNELS, STATE_CHANNELS, STATE_SLICE
from .errors import (
    DomainError,
    InsufficientDataError,
    SchemaError,
    StandstillError,
    StructureError,
    TimestampError,
    ValidationError,
)
from .signal import ScalingTable, apply_zero_phase, design_butterworth_lowpass, scale

SAMPLE_RATE_HZ = 100.0
WINDOW = 100
FILTER_ORDER = 8
TIMESTAMP_JITTER_S = 1e-6
DATASET_MAGIC = b"VEMODS01"

CSV_COLUMNS = ("t",) + ALL_CHANNELS

# at-rest thresholds applied to the first and last STANDSTILL_SAMPLES records
STANDSTILL_SAMPLES = 10
STANDSTILL_VX_KMH = 0.5
STANDSTILL_ACC = 0.2
STANDSTILL_YAW = 0.5


@dataclass(frozen=True)
class Run:
    """Uniformly sampled telemetry: ``records`` is ``(T, 8)``, controls then states."""

    records: np.ndarray
    sample_rate_hz: float = SAMPLE_RATE_HZ
    label: str = ""
    # cutoff the run was lowpass-filtered at, None for raw telemetry
    filtered_hz: float = None

    def __post_init__(self):
        rec = np.array(self.records, dtype=np.float64)
        if rec.ndim != 2 or rec.shape[1] != N_CHANNELS:
            raise ValueError(f"records must be (T, {N_CHANNELS}), got {rec.shape}")
        rec.setflags(write=False)
        object.__setattr__(self, "records", rec)

    def __len__(self):
        return self.records.shape[0]

    @property
    def controls(self):
        return self.records[:, : len(CONTROL_CHANNELS)]

    @property
    def states(self):
        return self.records[:, STATE_SLICE]

    @property
    def duration_s(self):
        return len(self) / self.sample_rate_hz

    def channel(self, name):
        return self.records[:, ALL_CHANNELS.index(name)]

    def validate(self):
        validate_domains(self)
        validate_standstill(self)
        return self


def _rows(mask):
    idx = np.flatnonzero(mask)
    shown = ", ".join(str(i) for i in idx[:10])
    return shown + (f" ... ({idx.size} rows)" if idx.size > 10 else "")


def validate_domains(run):
    """Check the state/control domains; row numbers in messages are 0-based data rows."""
    rec = run.records
    bad = ~np.isfinite(rec)
    if bad.any():
        raise DomainError(f"{run.label}: non-finite values in rows {_rows(bad.any(axis=1))}")
    checks = [
        ("u_t", (rec[:, 0] < 0) | (rec[:, 0] > 100), "[0, 100]"),
        ("u_b", (rec[:, 1] < 0) | (rec[:, 1] > 100), "[0, 100]"),
        ("u_s", (rec[:, 2] <= -180) | (rec[:, 2] >= 180), "(-180, 180)"),
        (
            "u_g",
            (rec[:, 3] != np.round(rec[:, 3])) | (rec[:, 3] < 1) | (rec[:, 3] > 6),
            "{1, ..., 6}",
        ),
        ("v_x", rec[:, 7] < 0, "[0, inf)"),
    ]
    for name, mask, dom in checks:
        if mask.any():
            raise DomainError(f"{run.label}: {name} outside {dom} in rows {_rows(mask)}")


def is_at_rest(states):
    s = np.atleast_2d(states)
    return (
        (np.abs(s[:, 3]) < STANDSTILL_VX_KMH)
        & (np.abs(s[:, 0]) < STANDSTILL_ACC)
        & (np.abs(s[:, 1]) < STANDSTILL_ACC)
        & (np.abs(s[:, 2]) < STANDSTILL_YAW)
    )


def validate_standstill(run):
    n = min(STANDSTILL_SAMPLES, len(run))
    for where, rows in (("start", np.arange(n)), ("end", np.arange(len(run) - n, len(run)))):
        rest = is_at_rest(run.states[rows])
        if not rest.all():
            raise StandstillError(
                f"{run.label}: vehicle not at standstill at the {where} of the run "
                f"(rows {_rows(np.isin(np.arange(len(run)), rows[~rest]))})"
            )


def load_run(source, schema=None, sample_rate_hz=SAMPLE_RATE_HZ, label=None, validate=True):
    """Read a telemetry CSV into a validated :class:`Run`.

    ``source`` is a path or a text stream. ``schema`` maps canonical channel
    names (``t``, ``u_t``, ... ``v_x``) to column headers in the file.
    """
    schema = {c: c for c in CSV_COLUMNS} | dict(schema or {})
    if isinstance(source, (str, Path)):
        label = label if label is not None else Path(source).stem
        with open(source, newline="", encoding="utf-8") as fh:
            return _parse_run(fh, schema, sample_rate_hz, label, validate)
    return _parse_run(source, schema, sample_rate_hz, label or "", validate)


def _parse_run(fh, schema, sample_rate_hz, label, validate):
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(f"{label}: empty telemetry file") from None
    missing = [schema[c] for c in CSV_COLUMNS if schema[c] not in header]
    if missing:
        raise SchemaError(f"{label}: missing column(s) {missing}")
    cols = [header.index(schema[c]) for c in CSV_COLUMNS]
    values = []
    for lineno, row in enumerate(reader):
        if not row:
            continue
        try:
            values.append([float(row[i]) for i in cols])
        except (ValueError, IndexError):
            raise SchemaError(f"{label}: unparsable or missing value in data row {lineno}") from None
    if not values:
        raise SchemaError(f"{label}: no data rows")
    arr = np.array(values, dtype=np.float64)
    t = arr[:, 0]
    if len(t) > 1:
        dt = np.diff(t)
        expected = 1.0 / sample_rate_hz
        bad = np.abs(dt - expected) > TIMESTAMP_JITTER_S
        if bad.any():
            kind = "non-monotone" if (dt <= 0).any() else "non-uniform"
            raise TimestampError(
                f"{label}: {kind} timestamps (expected step {expected} s) at rows {_rows(np.r_[False, bad])}"
            )
    run = Run(arr[:, 1:], sample_rate_hz, label)
    return run.validate() if validate else run


def _fmt(x):
    # repr round-trips float64 exactly
    return repr(float(x))


def write_run(run, dest):
    """Write a run as telemetry CSV (``t`` restarts at 0)."""
    own = isinstance(dest, (str, Path))
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for n, rec in enumerate(run.records):
            w.writerow([_fmt(n / run.sample_rate_hz)] + [_fmt(v) for v in rec])
    finally:
        if own:
            fh.close()


def run_to_csv(run):
    buf = io.StringIO()
    write_run(run, buf)
    return buf.getvalue()


def concat_runs(runs):
    """Join standstill-bounded runs end to end."""
    runs = list(runs)
    if not runs:
        raise ValueError("concat_runs needs at least one run")
    rates = {r.sample_rate_hz for r in runs}
    if len(rates) != 1:
        raise ValidationError(f"mismatched sample rates {sorted(rates)}")
    for r in runs:
        validate_standstill(r)
    if len(runs) == 1:
        return runs[0]
    return Run(
        np.concatenate([r.records for r in runs], axis=0),
        runs[0].sample_rate_hz,
        "+".join(r.label for r in runs),
    )


def filter_run(run, cutoff_hz, order=FILTER_ORDER):
    """Zero-phase Butterworth lowpass of all eight channels."""
    filt = design_butterworth_lowpass(order, cutoff_hz, run.sample_rate_hz)
    return replace(run, records=apply_zero_phase(filt, run.records), filtered_hz=float(cutoff_hz))


@dataclass(frozen=True)
class WindowedDataset:
    """``X[n]`` holds scaled records ``n .. n+k-1``; ``Y[n]`` the scaled state at ``n+k``."""

    X: np.ndarray
    Y: np.ndarray
    k: int
    scaling: ScalingTable = field(default_factory=ScalingTable.default)
    labels: tuple = ()
    cutoff_hz: float = None

    def __post_init__(self):
        if self.X.ndim != 3 or self.X.shape[1:] != (self.k, N_CHANNELS):
            raise ValueError(f"X must be (N, {self.k}, {N_CHANNELS}), got {self.X.shape}")
        if self.Y.shape != (self.X.shape[0], len(STATE_CHANNELS)):
            raise ValueError(f"Y must be ({self.X.shape[0]}, {len(STATE_CHANNELS)}), got {self.Y.shape}")

    def __len__(self):
        return self.X.shape[0]

    def subset(self, sl):
        return replace(self, X=self.X[sl], Y=self.Y[sl])


def make_windows(run, k=WINDOW, scaling=None):
    scaling = scaling or ScalingTable.default()
    T = len(run)
    if T <= k:
        raise InsufficientDataError(f"{run.label}: run of {T} samples cannot fill a window of {k}")
    z = scale(run.records, scaling)
    X = np.lib.stride_tricks.sliding_window_view(z[:-1], k, axis=0).transpose(0, 2, 1)
    Y = z[k:, STATE_SLICE]
    return WindowedDataset(
        np.ascontiguousarray(X), np.ascontiguousarray(Y), k, scaling, (run.label,), run.filtered_hz
    )


def split_dataset(ds, fraction=(0.8, 0.2)):
    """Contiguous train/validation split.

    The first ``k`` validation windows share samples with the training tail
    and are dropped.
    """
    f_train, f_val = (float(f) for f in fraction)
    if f_train <= 0 or f_val <= 0 or abs(f_train + f_val - 1.0) > 1e-9:
        raise ValueError(f"fractions must be positive and sum to 1, got {fraction}")
    n = len(ds)
    n_train = int(round(n * f_train))
    n_val = n - n_train - ds.k
    if n_train < 1 or n_val < 1:
        raise InsufficientDataError(
            f"split of {n} windows leaves train={n_train}, val={max(n_val, 0)} after excising {ds.k}"
        )
    return ds.subset(slice(0, n_train)), ds.subset(slice(n_train + ds.k, n))


def save_dataset(ds, path):
    header = {
        "format": "vemo-dataset",
        "version": 1,
        "k": ds.k,
        "scaling": ds.scaling.to_dict(),
        "labels": list(ds.labels),
        "cutoff_hz": ds.cutoff_hz,
    }
    write_container(path, DATASET_MAGIC, header, {"X": ds.X, "Y": ds.Y})


def load_dataset(path):
    header, arrays = read_container(path, DATASET_MAGIC)
    if header.get("format") != "vemo-dataset" or set(arrays) != {"X", "Y"}:
        raise StructureError(f"{path}: not a vemo dataset cache")
    try:
        return WindowedDataset(
            arrays["X"],
            arrays["Y"],
            int(header["k"]),
            ScalingTable.from_dict(header["scaling"]),
            tuple(header.get("labels", ())),
            header.get("cutoff_hz"),
        )
    except (KeyError, ValueError) as exc:
        raise StructureError(f"{path}: {exc}") from None
