"""AU activation values from filtered clips."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data_model import AU4_COLUMN, AU_IDS
from .errors import DataError, FeatureUndefinedError
from .frame_filter import FilteredClip

RELIABILITY_PERCENTILE = 80.0
RELIABILITY_LIMIT = 0.5
WINDOW_SECONDS = 0.1


def window_length(fps: int) -> int:
    """Frames per 0.1 s window, rounded half up (3 at 30 FPS)."""
    if fps <= 0:
        raise DataError(f"fps must be positive, got {fps}")
    return max(1, int(np.floor(WINDOW_SECONDS * fps + 0.5)))


def moving_window_mean(series, window_len: int, valid=None) -> np.ndarray:
    """Mean of each run of ``window_len`` frames; NaN where the run is not fully valid.

    ``series`` is one AU's per-frame values, or an (n_frames, n_aus) array.
    Frames flagged false in ``valid`` or holding NaN break every window they
    touch, as do the trailing indices with fewer than ``window_len`` frames left.
    """
    series = np.asarray(series, dtype=np.float64)
    if valid is None:
        valid = np.ones(series.shape[0], dtype=bool)
    return kernels.window_means(series, valid, window_len)


@dataclass(frozen=True, eq=False)
class ClipFeatures:
    activation: np.ndarray = field(repr=False)
    first_window_mean: np.ndarray = field(repr=False)
    max_window_mean: np.ndarray = field(repr=False)
    window_len: int

    def __getitem__(self, au: int) -> float:
        return float(self.activation[AU_IDS.index(au)])

    @property
    def alpha4(self) -> float:
        return float(self.activation[AU4_COLUMN])


def activation_from_means(means: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(activation, first mean, max mean) per column of a window-mean matrix."""
    defined = ~np.isnan(means)
    has_any = defined.any(axis=0)
    if not has_any.all():
        missing = [AU_IDS[j] if means.shape[1] == len(AU_IDS) else j for j in np.flatnonzero(~has_any)]
        raise FeatureUndefinedError(f"no defined window for AU column(s) {missing}")
    first_idx = defined.argmax(axis=0)
    cols = np.arange(means.shape[1])
    first = means[first_idx, cols]
    # every defined window lies at or after the first defined one
    peak = np.nanmax(means, axis=0)
    return peak - first, first, peak


def activation_value(clip: FilteredClip) -> ClipFeatures:
    if not clip.retained:
        raise DataError(f"clip {clip.trace.key} is excluded; no activation is computed")
    w = window_length(clip.trace.fps)
    means = kernels.window_means(clip.trace.intensities, clip.valid_mask, w)
    try:
        alpha, first, peak = activation_from_means(means)
    except FeatureUndefinedError as exc:
        raise FeatureUndefinedError(f"{clip.trace.key}: {exc}") from None
    return ClipFeatures(alpha, first, peak, w)


def participant_reliability(baseline_alpha4) -> str:
    """'excluded' when the 80th percentile of baseline AU4 activations exceeds 0.5."""
    values = np.asarray(baseline_alpha4, dtype=np.float64)
    if values.size == 0:
        raise DataError("participant has no baseline clips to judge AU4 reliability")
    p80 = float(np.percentile(values, RELIABILITY_PERCENTILE, method="linear"))
    return "excluded" if p80 > RELIABILITY_LIMIT else "included"
