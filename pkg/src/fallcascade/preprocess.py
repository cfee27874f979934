"""Impact-centered windowing, normalization, and the 54 time-domain features.

Channels are the three raw axes plus three derived norms:
ax, ay, az, a_norm = |(ax,ay,az)|, a_verti = |(ax,ay)|, a_hori = |(ay,az)|.
The device x axis is taken as vertical by default (configurable).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Trace

N_FEATURES = 54

FEATURE_NAMES = tuple(
    f"{stat}_{ch}"
    for stat in ("mean", "std", "var", "max", "min", "range", "kurtosis", "skewness")
    for ch in ("ax", "ay", "az", "a_norm", "a_verti", "a_hori")
) + (
    "corr_ax_ay", "corr_ax_az", "corr_ay_az",
    "corr_norm_verti", "corr_norm_hori", "corr_verti_hori",
)


@dataclass(frozen=True)
class WindowSpec:
    """Sub-window durations after (ws_f_s) and before (ws_b_s) the impact."""

    ws_f_s: float = 1.0
    ws_b_s: float = 0.8

    def __post_init__(self):
        if self.ws_f_s <= 0 or self.ws_b_s <= 0:
            raise ValueError("sub-window durations must be positive")

    def length(self, rate_hz: int) -> int:
        return int(round(self.ws_b_s * rate_hz)) + 1 + int(round(self.ws_f_s * rate_hz))


@dataclass(frozen=True)
class Window:
    """Fixed-size impact-centered segment of one trace."""

    samples: np.ndarray  # (length, 3)
    impact_index: int
    label: str
    subject_id: str
    trial_id: str
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)


def norm_xyz(s) -> float:
    """Spatial acceleration norm sqrt(ax^2 + ay^2 + az^2)."""
    s = np.asarray(s, dtype=np.float64)
    return float(np.sqrt(np.sum(s * s)))


def norm_hori(s) -> float:
    """Horizontal-plane norm sqrt(ay^2 + az^2)."""
    s = np.asarray(s, dtype=np.float64)
    return float(np.sqrt(s[1] * s[1] + s[2] * s[2]))


def _norms_xyz(samples: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(samples * samples, axis=1))


def _norms_hori(samples: np.ndarray) -> np.ndarray:
    return np.sqrt(samples[:, 1] ** 2 + samples[:, 2] ** 2)


def find_impact(trace_or_samples) -> int:
    """Index of the sample maximizing norm_xyz; ties break to the earliest."""
    samples = getattr(trace_or_samples, "samples", trace_or_samples)
    samples = np.asarray(samples, dtype=np.float64)
    return int(np.argmax(_norms_xyz(samples)))


def extract_window(trace: Trace, spec: WindowSpec) -> Window:
    """Cut the fixed-size window around the impact point, zero-padding
    positions that fall outside the trace."""
    rate = trace.sample_rate_hz
    wb = int(round(spec.ws_b_s * rate))
    wf = int(round(spec.ws_f_s * rate))
    impact = find_impact(trace)
    length = wb + 1 + wf
    out = np.zeros((length, 3))
    lo = impact - wb
    hi = impact + wf + 1
    src_lo = max(lo, 0)
    src_hi = min(hi, len(trace.samples))
    out[src_lo - lo: src_hi - lo] = trace.samples[src_lo:src_hi]
    return Window(out, wb, trace.label, trace.subject_id, trace.trial_id, rate)


def minmax_normalize(seq) -> np.ndarray:
    """Map a sequence affinely onto [0, 1]; constant input maps to zeros."""
    x = np.asarray(seq, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty sequence")
    lo, hi = x.min(), x.max()
    if hi - lo == 0:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def zscore_standardize(seq) -> np.ndarray:
    """Center to mean 0 and scale to population SD 1; constant input -> zeros."""
    x = np.asarray(seq, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least 2 values")
    mu = x.mean()
    sd = x.std()
    if sd == 0:
        return np.zeros_like(x)
    return (x - mu) / sd


def _skewness(x: np.ndarray) -> float:
    m2 = np.mean((x - x.mean()) ** 2)
    if m2 == 0:
        return 0.0
    m3 = np.mean((x - x.mean()) ** 3)
    return float(m3 / m2 ** 1.5)


def _kurtosis_excess(x: np.ndarray) -> float:
    m2 = np.mean((x - x.mean()) ** 2)
    if m2 == 0:
        return 0.0
    m4 = np.mean((x - x.mean()) ** 4)
    return float(m4 / m2 ** 2 - 3.0)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denom == 0:
        return 0.0
    return float(np.sum(da * db) / denom)


def channel_matrix(samples: np.ndarray, vertical_axis: str = "x") -> np.ndarray:
    """Stack the six analysis channels as columns."""
    samples = np.asarray(samples, dtype=np.float64)
    ax, ay, az = samples[:, 0], samples[:, 1], samples[:, 2]
    a_norm = _norms_xyz(samples)
    if vertical_axis == "x":
        a_verti = np.sqrt(ax * ax + ay * ay)
        a_hori = np.sqrt(ay * ay + az * az)
    elif vertical_axis == "y":
        a_verti = np.sqrt(ay * ay + az * az)
        a_hori = np.sqrt(ax * ax + az * az)
    elif vertical_axis == "z":
        a_verti = np.sqrt(az * az + ax * ax)
        a_hori = np.sqrt(ax * ax + ay * ay)
    else:
        raise ValueError(f"vertical_axis must be x/y/z, got {vertical_axis!r}")
    return np.column_stack([ax, ay, az, a_norm, a_verti, a_hori])


def extract_features(window: Window, vertical_axis: str = "x") -> np.ndarray:
    """54 time-domain statistics over the raw (unnormalized) window.

    Ordering: 8 stats x 6 channels (mean, SD, variance, max, min, range,
    excess kurtosis, skewness), then Pearson correlations for the axis
    pairs (x,y), (x,z), (y,z) and the norm pairs (norm,verti), (norm,hori),
    (verti,hori). Zero-variance channels yield 0 for the shape statistics.
    """
    ch = channel_matrix(window.samples, vertical_axis)
    f = np.empty(N_FEATURES)
    f[0:6] = ch.mean(axis=0)
    f[6:12] = ch.std(axis=0)
    f[12:18] = ch.var(axis=0)
    f[18:24] = ch.max(axis=0)
    f[24:30] = ch.min(axis=0)
    f[30:36] = ch.max(axis=0) - ch.min(axis=0)
    for j in range(6):
        f[36 + j] = _kurtosis_excess(ch[:, j])
        f[42 + j] = _skewness(ch[:, j])
    f[48] = _pearson(ch[:, 0], ch[:, 1])
    f[49] = _pearson(ch[:, 0], ch[:, 2])
    f[50] = _pearson(ch[:, 1], ch[:, 2])
    f[51] = _pearson(ch[:, 3], ch[:, 4])
    f[52] = _pearson(ch[:, 3], ch[:, 5])
    f[53] = _pearson(ch[:, 4], ch[:, 5])
    return f


def feature_matrix(windows, vertical_axis: str = "x"):
    """(X, y) with X shape (n, 54) and y in {0 = ADL, 1 = Fall}."""
    X = np.stack([extract_features(w, vertical_axis) for w in windows])
    y = np.array([1 if w.label == "FALL" else 0 for w in windows], dtype=np.int64)
    return X, y
