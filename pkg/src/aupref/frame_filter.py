"""Frame exclusion rules and the clip-level exclusion rule.

A frame is kept when the face detector is confident enough and the head is
roughly frontal, judged by two landmark-distance ratios. A clip is dropped
when more than a set fraction of its frames fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigError, DataError, GeometryError

if TYPE_CHECKING:
    from .data_model import AUTrace, FrameRecord

RETAINED = "retained"
EXCLUDED = "excluded"


@dataclass(frozen=True)
class FilterThresholds:
    fdcs_min: float = 0.9
    yir_range: tuple[float, float] = (0.3, 0.7)
    pir_range: tuple[float, float] = (0.55, 0.85)
    clip_exclusion_fraction: float = 0.20
    # "either": drop an image when its baseline or reaction clip is excluded
    # "reaction": only the reaction clip decides
    pair_policy: str = "either"

    def __post_init__(self):
        object.__setattr__(self, "yir_range", tuple(float(v) for v in self.yir_range))
        object.__setattr__(self, "pir_range", tuple(float(v) for v in self.pir_range))
        if not 0.0 <= self.fdcs_min <= 1.0:
            raise ConfigError(f"fdcs_min must lie in [0, 1], got {self.fdcs_min}")
        for name in ("yir_range", "pir_range"):
            rng = getattr(self, name)
            if len(rng) != 2 or not 0.0 <= rng[0] < rng[1]:
                raise ConfigError(f"{name} must satisfy 0 <= lo < hi, got {rng}")
        if not 0.0 < self.clip_exclusion_fraction < 1.0:
            raise ConfigError(
                f"clip_exclusion_fraction must lie in (0, 1), got {self.clip_exclusion_fraction}"
            )
        if self.pair_policy not in ("either", "reaction"):
            raise ConfigError(f"pair_policy must be 'either' or 'reaction', got {self.pair_policy!r}")

    def to_dict(self) -> dict:
        return {
            "fdcs_min": self.fdcs_min,
            "yir_range": list(self.yir_range),
            "pir_range": list(self.pir_range),
            "clip_exclusion_fraction": self.clip_exclusion_fraction,
            "pair_policy": self.pair_policy,
        }


def yaw_indicative_ratio(d_left: float, d_right: float) -> float:
    """Left eye-to-edge distance over the sum of both; 0.5 for a frontal face."""
    if d_left < 0 or d_right < 0:
        raise GeometryError(f"negative eye-edge distance ({d_left}, {d_right})")
    total = d_left + d_right
    if not total > 0:
        raise GeometryError("eye-edge distances sum to zero")
    return d_left / total


def pitch_indicative_ratio(d_nostrils_eyes: float, d_eyes: float) -> float:
    if not d_eyes > 0:
        raise GeometryError(f"inter-eye distance must be positive, got {d_eyes}")
    if d_nostrils_eyes < 0:
        raise GeometryError(f"negative nostrils-eyes distance {d_nostrils_eyes}")
    return d_nostrils_eyes / d_eyes


def _missing(x) -> bool:
    return x is None or (isinstance(x, float) and math.isnan(x))


def frame_valid(frame: FrameRecord, t: FilterThresholds) -> bool:
    """Apply the three exclusion rules to one frame. Range ends count as inside."""
    fields = (frame.fdcs, frame.d_eye_edge_left, frame.d_eye_edge_right,
              frame.d_nostrils_eyes, frame.d_eyes)
    if any(_missing(x) for x in fields):
        return False
    if any(_missing(v) for v in frame.au_intensities.values()):
        return False
    if not frame.fdcs >= t.fdcs_min:
        return False
    try:
        yir = yaw_indicative_ratio(frame.d_eye_edge_left, frame.d_eye_edge_right)
        pir = pitch_indicative_ratio(frame.d_nostrils_eyes, frame.d_eyes)
    except GeometryError:
        return False
    return t.yir_range[0] <= yir <= t.yir_range[1] and t.pir_range[0] <= pir <= t.pir_range[1]


def valid_mask(trace: AUTrace, t: FilterThresholds) -> np.ndarray:
    """Vectorised ``frame_valid`` over every frame of a trace."""
    left, right = trace.d_eye_edge_left, trace.d_eye_edge_right
    nostrils, eyes = trace.d_nostrils_eyes, trace.d_eyes
    complete = ~(np.isnan(trace.fdcs) | np.isnan(left) | np.isnan(right)
                 | np.isnan(nostrils) | np.isnan(eyes)
                 | np.isnan(trace.intensities).any(axis=1))
    total = left + right
    geometry_ok = (left >= 0) & (right >= 0) & (total > 0) & (eyes > 0) & (nostrils >= 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        yir = left / total
        pir = nostrils / eyes
    return (complete & geometry_ok
            & (trace.fdcs >= t.fdcs_min)
            & (yir >= t.yir_range[0]) & (yir <= t.yir_range[1])
            & (pir >= t.pir_range[0]) & (pir <= t.pir_range[1]))


@dataclass(frozen=True, eq=False)
class FilteredClip:
    trace: AUTrace
    valid_mask: np.ndarray = field(repr=False)
    excluded_fraction: float
    status: str

    @property
    def retained(self) -> bool:
        return self.status == RETAINED


def filter_clip(trace: AUTrace, t: FilterThresholds) -> FilteredClip:
    n = trace.n_frames
    if n == 0:
        raise DataError(f"empty trace for {trace.key}")
    mask = valid_mask(trace, t)
    n_bad = n - int(np.count_nonzero(mask))
    fraction = n_bad / n
    # strictly "more than": a clip sitting exactly on the fraction is retained
    status = EXCLUDED if fraction > t.clip_exclusion_fraction else RETAINED
    return FilteredClip(trace, mask, fraction, status)
