"""Edge-device threshold gate: absolute-fall / absolute-ADL band classification
on the per-window maxima of the spatial and horizontal acceleration norms."""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .dataset import FALL
from .preprocess import Window, _norms_hori, _norms_xyz


class MissingClass(Exception):
    pass


class TriDecision(enum.Enum):
    FALL = "FALL"
    ADL = "ADL"
    UNCERTAIN = "UNCERTAIN"


@dataclass(frozen=True)
class EdgeThresholds:
    """t_fall_* = max norm over training ADL windows (absolute-fall bound);
    t_adl_* = min norm over training fall windows (absolute-ADL bound)."""

    t_fall_xyz: float
    t_fall_hori: float
    t_adl_xyz: float
    t_adl_hori: float


def window_peaks(window: Window):
    """(max norm_xyz, max norm_hori) of the window."""
    return (float(_norms_xyz(window.samples).max()),
            float(_norms_hori(window.samples).max()))


def fit_thresholds(train_windows) -> EdgeThresholds:
    fall_v, fall_w, adl_v, adl_w = [], [], [], []
    for win in train_windows:
        v, w = window_peaks(win)
        if win.label == FALL:
            fall_v.append(v)
            fall_w.append(w)
        else:
            adl_v.append(v)
            adl_w.append(w)
    if not fall_v or not adl_v:
        raise MissingClass("training windows must contain both falls and ADLs")
    return EdgeThresholds(
        t_fall_xyz=max(adl_v),
        t_fall_hori=max(adl_w),
        t_adl_xyz=min(fall_v),
        t_adl_hori=min(fall_w),
    )


def classify_tc(v: float, w: float, th: EdgeThresholds,
                strict_paper: bool = False) -> TriDecision:
    """Three-way band classification of the peak pair (v, w).

    Fall requires both peaks above the absolute-fall bounds, ADL both
    below the absolute-ADL bounds (strict_paper compares the ADL branch
    against t_fall_* instead). A pair satisfying both branches at once —
    possible when the training classes are separable, so the fall bounds
    sit below the ADL bounds — is ambiguous and stays Uncertain, as does
    boundary equality.
    """
    is_fall = v > th.t_fall_xyz and w > th.t_fall_hori
    if strict_paper:
        is_adl = v < th.t_fall_xyz and w < th.t_fall_hori
    else:
        is_adl = v < th.t_adl_xyz and w < th.t_adl_hori
    if is_fall and not is_adl:
        return TriDecision.FALL
    if is_adl and not is_fall:
        return TriDecision.ADL
    return TriDecision.UNCERTAIN
