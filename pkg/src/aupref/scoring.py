"""AU4 valence score, score standardisation, ensemble and integrated scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

ENSEMBLE_MODELS = ("imagereward_score", "pickscore", "hpsv2_score")


def au4_valence(alpha4, k: float):
    """Negative exponential decay of AU4 activation: ``-(1 - exp(-k * alpha4))``.

    Lies in (-1, 0]; 0 for no activation. Accepts scalars or arrays; NaN
    passes through.
    """
    if not k > 0:
        raise ValueError(f"decay coefficient k must be positive, got {k}")
    a = np.asarray(alpha4, dtype=np.float64)
    if np.any(a < 0):
        raise DataError("AU4 activation must be non-negative")
    out = -(1.0 - np.exp(-k * a))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Standardizer:
    """Mean/std pair fitted on a training set and applied to any set."""

    mean: float
    std: float

    @classmethod
    def fit(cls, values) -> "Standardizer":
        v = np.asarray(values, dtype=np.float64)
        v = v[~np.isnan(v)]
        if v.size < 2:
            raise DataError("need at least two values to estimate a standard deviation")
        std = float(np.std(v, ddof=1))
        if not std > 0:
            raise DataError("degenerate distribution: standard deviation is zero")
        return cls(float(np.mean(v)), std)

    def __call__(self, values):
        return standardize(values, self.mean, self.std)


def standardize(values, mean: float, std: float) -> np.ndarray:
    if not std > 0:
        raise DataError("degenerate distribution: standard deviation must be positive")
    return (np.asarray(values, dtype=np.float64) - mean) / std


@dataclass(frozen=True)
class EnsembleWeights:
    w_ir: float
    w_pick: float
    w_hpsv2: float

    def __post_init__(self):
        ws = (self.w_ir, self.w_pick, self.w_hpsv2)
        if min(ws) < 0:
            raise ValueError(f"ensemble weights must be non-negative, got {ws}")
        if abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError(f"ensemble weights must sum to 1, got {ws}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w_ir, self.w_pick, self.w_hpsv2)


def ensemble_score(w: EnsembleWeights, s_ir, s_pick, s_hpsv2):
    """Weighted sum of the three standardised preference-model scores."""
    s_ir, s_pick, s_hpsv2 = (np.asarray(s, dtype=np.float64) for s in (s_ir, s_pick, s_hpsv2))
    if np.isnan(s_ir).any() or np.isnan(s_pick).any() or np.isnan(s_hpsv2).any():
        raise DataError("missing component score for ensemble")
    out = w.w_ir * s_ir + w.w_pick * s_pick + w.w_hpsv2 * s_hpsv2
    return float(out) if out.ndim == 0 else out


def integrated_score(s_m, a_m: float, s_au4):
    out = np.asarray(s_m, dtype=np.float64) + a_m * np.asarray(s_au4, dtype=np.float64)
    return float(out) if out.ndim == 0 else out
