"""Butterworth lowpass design, zero-phase filtering, Welch PSD and channel scaling."""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import signal as sps

from .channels import ALL_CHANNELS, N_CHANNELS, N_STATES, STATE_SLICE
from .errors import LengthError, ShapeError

GRAVITY = 9.81

DEFAULT_PSD_SEGMENT = 1024
DEFAULT_PSD_OVERLAP = 0.5


@dataclass(frozen=True)
class SosFilter:
    """Digital filter stored as cascaded biquads.

    ``sections`` has one row ``(b0, b1, b2, 1, a1, a2)`` per biquad, the same
    row layout ``scipy.signal`` uses for second-order sections.
    """

    sections: np.ndarray
    order: int
    cutoff_hz: float
    sample_rate_hz: float

    def __post_init__(self):
        sos = np.array(self.sections, dtype=np.float64)
        sos.setflags(write=False)
        object.__setattr__(self, "sections", sos)
        if sos.ndim != 2 or sos.shape[1] != 6:
            raise ShapeError("sections must be an (n, 6) array")
        if self.order != 2 * sos.shape[0]:
            raise ValueError("order must equal twice the number of sections")

    @property
    def padlen(self):
        return 3 * self.order

    def response(self, freqs_hz):
        """Complex frequency response at ``freqs_hz``."""
        w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / self.sample_rate_hz
        zi = np.exp(-1j * w)
        h = np.ones_like(zi)
        for b0, b1, b2, _, a1, a2 in self.sections:
            h = h * (b0 + b1 * zi + b2 * zi * zi) / (1.0 + a1 * zi + a2 * zi * zi)
        return h

    def gain_db(self, freqs_hz):
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.response(freqs_hz)))


def design_butterworth_lowpass(order, cutoff_hz, sample_rate_hz):
    """Digital Butterworth lowpass via the prewarped bilinear transform.

    The analog prototype poles ``wa * exp(j*pi*(2m + N - 1) / (2N))`` are
    mapped with ``z = (2fs + s) / (2fs - s)``; every conjugate pair becomes a
    biquad with its double zero at ``z = -1`` and unit DC gain.
    """
    if int(order) != order or order < 2 or order % 2:
        raise ValueError(f"order must be an even integer >= 2, got {order!r}")
    order = int(order)
    fs = float(sample_rate_hz)
    fc = float(cutoff_hz)
    if not fs > 0:
        raise ValueError("sample rate must be positive")
    if not 0.0 < fc < fs / 2.0:
        raise ValueError(f"cutoff {fc} Hz outside (0, {fs / 2} Hz) for sampling at {fs} Hz")

    wa = 2.0 * fs * math.tan(math.pi * fc / fs)
    sections = []
    # upper half-plane poles only; their conjugates complete each section
    for m in range(1, order // 2 + 1):
        s = wa * np.exp(1j * math.pi * (2 * m + order - 1) / (2 * order))
        zp = (2.0 * fs + s) / (2.0 * fs - s)
        a1 = -2.0 * zp.real
        a2 = abs(zp) ** 2
        g = (1.0 + a1 + a2) / 4.0
        sections.append((abs(zp), [g, 2.0 * g, g, 1.0, a1, a2]))
    # least resonant section first
    sections.sort(key=lambda item: item[0])
    return SosFilter(np.array([row for _, row in sections]), order, fc, fs)


def _odd_extend(x, n):
    left = 2.0 * x[:1] - x[n:0:-1]
    right = 2.0 * x[-1:] - x[-2:-n - 2:-1]
    return np.concatenate([left, x, right], axis=0)


def apply_zero_phase(filt, series):
    """Forward-backward filtering along axis 0 with odd-reflection padding.

    ``series`` may be 1-D or ``(T, channels)``. Padding is ``3 * order``
    samples (capped at ``T - 1``); both passes start from the steady state of
    the first padded sample so constants pass through unchanged.
    """
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[0] if x.ndim else 0
    if n < filt.padlen:
        raise LengthError(f"series of length {n} shorter than {filt.padlen} samples ({3}x filter order)")
    pad = min(filt.padlen, n - 1)
    ext = _odd_extend(x, pad)
    sos = np.array(filt.sections)
    zi = sps.sosfilt_zi(sos)
    shape = (zi.shape[0], 2) + (1,) * (x.ndim - 1)
    zi = zi.reshape(shape)
    y, _ = sps.sosfilt(sos, ext, axis=0, zi=zi * ext[:1])
    y = y[::-1]
    y, _ = sps.sosfilt(sos, y, axis=0, zi=zi * y[:1])
    y = y[::-1]
    return np.ascontiguousarray(y[pad:pad + n])


@dataclass(frozen=True)
class PsdEstimate:
    frequencies: np.ndarray
    power: np.ndarray
    segment_len: int
    overlap: float

    def integrate(self):
        """Total power (variance of the detrended signal)."""
        df = self.frequencies[1] - self.frequencies[0] if len(self.frequencies) > 1 else 0.0
        return float(np.sum(self.power) * df)


def welch_psd(series, sample_rate_hz, segment_len=DEFAULT_PSD_SEGMENT, overlap=DEFAULT_PSD_OVERLAP):
    """One-sided, density-scaled Welch estimate with a Hann window."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("welch_psd expects a 1-D series")
    segment_len = int(segment_len)
    if segment_len < 2:
        raise LengthError("segment_len must be >= 2")
    if segment_len > x.size:
        raise LengthError(f"segment of {segment_len} samples longer than series ({x.size})")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must be in [0, 1)")
    freqs, power = sps.welch(
        x,
        fs=sample_rate_hz,
        window="hann",
        nperseg=segment_len,
        noverlap=int(round(overlap * segment_len)),
        scaling="density",
        return_onesided=True,
        detrend="constant",
    )
    return PsdEstimate(freqs, np.maximum(power, 0.0), segment_len, float(overlap))


def _default_factors(g=GRAVITY):
    return {
        "u_t": 100.0,
        "u_b": 100.0,
        "u_s": 250.0,
        "u_g": 6.0,
        "a_x": 2.0 * g,
        "a_y": 2.0 * g,
        "yaw_rate": 60.0,
        "v_x": 280.0,
    }


@dataclass(frozen=True)
class ScalingTable:
    """Per-channel divisors that make every record order one."""

    factors: dict = field(default_factory=_default_factors)
    g: float = GRAVITY

    def __post_init__(self):
        if set(self.factors) != set(ALL_CHANNELS):
            raise ValueError(f"scaling table needs exactly the channels {ALL_CHANNELS}")
        if any(not (float(v) > 0 and math.isfinite(float(v))) for v in self.factors.values()):
            raise ValueError("scaling factors must be finite and strictly positive")
        object.__setattr__(self, "factors", {c: float(self.factors[c]) for c in ALL_CHANNELS})

    @classmethod
    def default(cls, g=GRAVITY):
        return cls(_default_factors(g), g)

    def with_overrides(self, **overrides):
        return ScalingTable({**self.factors, **overrides}, self.g)

    @property
    def vector(self):
        return np.array([self.factors[c] for c in ALL_CHANNELS])

    @property
    def state_vector(self):
        return self.vector[STATE_SLICE]

    def to_dict(self):
        return {"factors": dict(self.factors), "g": self.g}

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["factors"]), float(d.get("g", GRAVITY)))


def _factors_for(record, table):
    x = np.asarray(record, dtype=np.float64)
    last = x.shape[-1] if x.ndim else 0
    if last == N_CHANNELS:
        return x, table.vector
    if last == N_STATES:
        return x, table.state_vector
    raise ShapeError(f"expected a trailing dimension of {N_CHANNELS} (record) or {N_STATES} (state), got {x.shape}")


def scale(record, table):
    """Divide by the scaling factors. Works on ``(..., 8)`` records or ``(..., 4)`` states."""
    x, f = _factors_for(record, table)
    return x / f


def unscale(record, table):
    x, f = _factors_for(record, table)
    return x * f
