"""Training objective for an AU intensity estimator, as plain numpy math.

Labels are integer intensities 0..5 per (sample, AU). Predictions carry one
regression value per AU plus five ordinal logits, logit ``j`` (1..5) scoring
the event "intensity >= j". Batch reduction is a sum unless ``reduction="mean"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DataError

N_LEVELS = 6
N_SPLITS = 5
EPS = 1e-12

_CE_MAX = -math.log(EPS)
_CE_MIN = -math.log1p(-EPS)


@dataclass(frozen=True)
class AULabelBatch:
    y: np.ndarray  # (n_samples, n_aus) ints in 0..5

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim == 1:
            y = y[None, :]
        if y.ndim != 2:
            raise DataError(f"labels must be (samples, aus), got shape {y.shape}")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.asarray(y, dtype=np.float64) == np.round(y)):
                raise DataError("labels must be integers")
            y = y.astype(np.int64)
        if y.size and (y.min() < 0 or y.max() > 5):
            raise DataError("labels must lie in 0..5")
        object.__setattr__(self, "y", y.astype(np.int64))

    @property
    def counts(self) -> np.ndarray:
        """n[i, j]: occurrences of AU i at intensity j, shape (n_aus, 6)."""
        return np.stack([np.bincount(col, minlength=N_LEVELS) for col in self.y.T])

    def targets(self) -> np.ndarray:
        """Ordinal targets chi(y >= j) for j = 1..5, shape (samples, aus, 5)."""
        return (self.y[:, :, None] >= np.arange(1, N_SPLITS + 1)).astype(np.float64)


@dataclass(frozen=True)
class AUPredictionBatch:
    y_reg: np.ndarray  # (n_samples, n_aus)
    logits: np.ndarray  # (n_samples, n_aus, 5)

    def __post_init__(self):
        reg = np.asarray(self.y_reg, dtype=np.float64)
        lg = np.asarray(self.logits, dtype=np.float64)
        if reg.ndim == 1:
            reg = reg[None, :]
        if lg.ndim == 2:
            lg = lg[None, :, :]
        if lg.shape != reg.shape + (N_SPLITS,):
            raise DataError(f"logits shape {lg.shape} does not match regression shape {reg.shape} + (5,)")
        object.__setattr__(self, "y_reg", reg)
        object.__setattr__(self, "logits", lg)


@dataclass(frozen=True)
class LossWeights:
    reg: np.ndarray  # (n_aus, 6)
    cls: np.ndarray  # (n_aus, 5, 2), last axis indexed by class c


def _exact_counts(counts) -> np.ndarray:
    n = np.asarray(counts)
    if n.ndim == 1:
        n = n[None, :]
    if not np.all(np.asarray(n, dtype=np.float64) == np.round(np.asarray(n, dtype=np.float64))):
        raise DataError("exact weights need integer counts")
    return np.vectorize(lambda v: Fraction(int(v)), otypes=[object])(n)


def mse_weights(counts, exact: bool = False) -> np.ndarray:
    """Inverse-frequency weights over the merged intensity groups {0,1} and {2..5}.

    With ``exact=True`` the weights are ``Fraction`` objects, so the
    normalisation identity holds without rounding.
    """
    n = _exact_counts(counts) if exact else np.asarray(counts, dtype=np.float64)
    if n.ndim == 1:
        n = n[None, :]
    if n.shape[-1] != N_LEVELS:
        raise DataError(f"counts need 6 intensity columns, got {n.shape[-1]}")
    low = n[:, :2].sum(axis=1)
    high = n[:, 2:].sum(axis=1)
    if np.any(low <= 0) or np.any(high <= 0):
        raise DataError("empty intensity group: every AU needs counts in both {0,1} and {2..5}")
    a = 2 / low
    b = 4 / high
    w_low = a / (a + b)
    w_high = b / (a + b)
    return np.column_stack([w_low, w_low, w_high, w_high, w_high, w_high])


def class_weights(counts, exact: bool = False) -> np.ndarray:
    """Inverse-frequency weights for the five ordinal splits; ``[:, j-1, c]`` is w_{i,j,c}."""
    n = _exact_counts(counts) if exact else np.asarray(counts, dtype=np.float64)
    if n.ndim == 1:
        n = n[None, :]
    if n.shape[-1] != N_LEVELS:
        raise DataError(f"counts need 6 intensity columns, got {n.shape[-1]}")
    csum = np.cumsum(n, axis=1)
    below = csum[:, :N_SPLITS]  # sum_{0..j-1}, j = 1..5
    above = csum[:, -1:] - below  # sum_{j..5}
    if np.any(below <= 0) or np.any(above <= 0):
        raise DataError("a split has an empty side: counts need mass at intensity 0 and 5")
    inv_lo, inv_hi = 1 / below, 1 / above
    denom = (inv_lo + inv_hi).sum(axis=1, keepdims=True)
    return np.stack([inv_lo / denom, inv_hi / denom], axis=-1)


def make_weights(counts) -> LossWeights:
    return LossWeights(mse_weights(counts), class_weights(counts))


def _reduce(per_sample: np.ndarray, reduction: str) -> float:
    if reduction == "sum":
        return float(per_sample.sum())
    if reduction == "mean":
        return float(per_sample.mean())
    raise ValueError(f"unknown reduction {reduction!r}")


def _check(batch: AULabelBatch, preds: AUPredictionBatch, weights: LossWeights | None = None):
    if batch.y.shape != preds.y_reg.shape:
        raise DataError(f"label shape {batch.y.shape} does not match prediction shape {preds.y_reg.shape}")
    if weights is not None and weights.reg.shape[0] != batch.y.shape[1]:
        raise DataError("weights and labels disagree on the number of AUs")


def loss_reg_mse(batch: AULabelBatch, preds: AUPredictionBatch, weights: LossWeights,
                 reduction: str = "sum") -> float:
    _check(batch, preds, weights)
    w = weights.reg[np.arange(batch.y.shape[1])[None, :], batch.y]
    resid = batch.y - preds.y_reg
    return _reduce((w * resid * resid).sum(axis=1), reduction)


def cosine_loss(y, y_hat, mode: str = "corrected") -> float:
    """One minus cosine similarity of two vectors.

    ``mode="as_printed"`` divides by the product of squared norms instead of norms.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise DataError("vectors differ in shape")
    yy, hh = float(y @ y), float(y_hat @ y_hat)
    if yy == 0 or hh == 0:
        raise DataError("cosine loss is undefined for a zero vector")
    if mode == "corrected":
        return 1.0 - float(y @ y_hat) / math.sqrt(yy * hh)
    if mode == "as_printed":
        return 1.0 - float(y @ y_hat) / (yy * hh)
    raise ValueError(f"unknown cosine mode {mode!r}")


def loss_reg_cos(batch: AULabelBatch, preds: AUPredictionBatch, mode: str = "corrected",
                 reduction: str = "sum") -> float:
    """Cosine loss across AUs, one term per sample."""
    _check(batch, preds)
    per = np.array([cosine_loss(y, h, mode) for y, h in zip(batch.y.astype(np.float64), preds.y_reg)])
    return _reduce(per, reduction)


def _ce_terms(targets: np.ndarray, logits: np.ndarray):
    # -log(clip(sigmoid(z))) and -log(clip(1 - sigmoid(z))) via softplus, clamped to the
    # range implied by probabilities in [EPS, 1 - EPS]
    pos = np.logaddexp(0.0, -logits)
    neg = np.logaddexp(0.0, logits)
    ce = np.where(targets > 0, pos, neg)
    clamped = (ce > _CE_MAX) | (ce < _CE_MIN)
    return np.clip(ce, _CE_MIN, _CE_MAX), clamped


def loss_class(batch: AULabelBatch, preds: AUPredictionBatch, weights: LossWeights,
               reduction: str = "sum") -> float:
    _check(batch, preds, weights)
    t = batch.targets()
    ce, _ = _ce_terms(t, preds.logits)
    w = np.where(t > 0, weights.cls[None, :, :, 1], weights.cls[None, :, :, 0])
    return _reduce((w * ce).sum(axis=(1, 2)), reduction)


def total_loss(batch: AULabelBatch, preds: AUPredictionBatch, weights: LossWeights,
               cos_mode: str = "corrected", reduction: str = "sum") -> float:
    return (loss_reg_mse(batch, preds, weights, reduction)
            + loss_reg_cos(batch, preds, cos_mode, reduction)
            + loss_class(batch, preds, weights, reduction))


@dataclass(frozen=True)
class LossGradient:
    d_reg: np.ndarray
    d_logits: np.ndarray
    n_clamped: int  # terms whose probability hit the clamp; the gradient there is zero

    @property
    def clamped(self) -> bool:
        return self.n_clamped > 0


def mse_gradient(batch, preds, weights) -> np.ndarray:
    w = weights.reg[np.arange(batch.y.shape[1])[None, :], batch.y]
    return -2.0 * w * (batch.y - preds.y_reg)


def cos_gradient(batch, preds, mode: str = "corrected") -> np.ndarray:
    y = batch.y.astype(np.float64)
    h = preds.y_reg
    yy = (y * y).sum(axis=1, keepdims=True)
    hh = (h * h).sum(axis=1, keepdims=True)
    if np.any(yy == 0) or np.any(hh == 0):
        raise DataError("cosine loss is undefined for a zero vector")
    dot = (y * h).sum(axis=1, keepdims=True)
    if mode == "corrected":
        norm = np.sqrt(yy * hh)
        return -(y / norm - dot * h / (norm * hh))
    if mode == "as_printed":
        return -(y / (yy * hh) - 2.0 * dot * h / (yy * hh * hh))
    raise ValueError(f"unknown cosine mode {mode!r}")


def class_gradient(batch, preds, weights):
    t = batch.targets()
    z = preds.logits
    _, clamped = _ce_terms(t, z)
    p = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    w = np.where(t > 0, weights.cls[None, :, :, 1], weights.cls[None, :, :, 0])
    g = w * (p - t)
    g[clamped] = 0.0
    return g, int(clamped.sum())


def loss_gradient(batch: AULabelBatch, preds: AUPredictionBatch, weights: LossWeights,
                  cos_mode: str = "corrected", reduction: str = "sum") -> LossGradient:
    """Analytic gradient of ``total_loss`` with respect to the regression outputs and logits."""
    _check(batch, preds, weights)
    d_reg = mse_gradient(batch, preds, weights) + cos_gradient(batch, preds, cos_mode)
    d_log, n_clamped = class_gradient(batch, preds, weights)
    if reduction == "mean":
        n = batch.y.shape[0]
        d_reg, d_log = d_reg / n, d_log / n
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return LossGradient(d_reg, d_log, n_clamped)


def numeric_gradient(batch, preds, weights, h: float = 1e-5, cos_mode: str = "corrected",
                     reduction: str = "sum") -> LossGradient:
    """Central finite differences of ``total_loss``."""
    reg = preds.y_reg.copy()
    lg = preds.logits.copy()

    def f(r, l_):
        return total_loss(batch, AUPredictionBatch(r, l_), weights, cos_mode, reduction)

    d_reg = np.empty_like(reg)
    for idx in np.ndindex(reg.shape):
        old = reg[idx]
        reg[idx] = old + h
        up = f(reg, lg)
        reg[idx] = old - h
        down = f(reg, lg)
        reg[idx] = old
        d_reg[idx] = (up - down) / (2 * h)
    d_log = np.empty_like(lg)
    for idx in np.ndindex(lg.shape):
        old = lg[idx]
        lg[idx] = old + h
        up = f(reg, lg)
        lg[idx] = old - h
        down = f(reg, lg)
        lg[idx] = old
        d_log[idx] = (up - down) / (2 * h)
    return LossGradient(d_reg, d_log, 0)


def relative_error(a: LossGradient, b: LossGradient) -> float:
    va = np.concatenate([a.d_reg.ravel(), a.d_logits.ravel()])
    vb = np.concatenate([b.d_reg.ravel(), b.d_logits.ravel()])
    scale = max(np.linalg.norm(va), np.linalg.norm(vb), 1e-300)
    return float(np.linalg.norm(va - vb) / scale)


def random_batch(rng: np.random.Generator, n_samples: int = 6, n_aus: int = 3):
    """Labels covering every intensity per AU, with moderate predictions."""
    while True:
        y = rng.integers(0, N_LEVELS, size=(n_samples, n_aus))
        y[0, :] = 0
        y[1, :] = 5
        for i in range(n_aus):
            rng.shuffle(y[:, i])
        if np.all(y.any(axis=1)):
            break
    batch = AULabelBatch(y)
    reg = y + rng.normal(0.0, 0.8, size=y.shape)
    logits = rng.normal(0.0, 2.0, size=y.shape + (N_SPLITS,))
    return batch, AUPredictionBatch(reg, logits)


def selfcheck(n_batches: int = 100, seed: int = 0, tol: float = 1e-6) -> list[tuple[str, bool, str]]:
    """Weight identities, cosine reference values and gradient agreement.

    Returns ``(name, passed, detail)`` rows.
    """
    rng = np.random.default_rng(seed)
    rows = []

    w = mse_weights([[50, 50, 50, 50, 50, 50]])
    rows.append(("mse weights 100/200 split", bool(w[0, 0] == 0.5 and w[0, 2] == 0.5), f"{float(w[0, 0])!r}, {float(w[0, 2])!r}"))
    w = mse_weights([[50, 50, 25, 25, 25, 25]])
    ok = abs(w[0, 0] - 1 / 3) < 1e-15 and abs(w[0, 2] - 2 / 3) < 1e-15
    rows.append(("mse weights 100/100 split", bool(ok), f"{float(w[0, 0])!r}, {float(w[0, 2])!r}"))

    exact_ok = True
    worst = 0.0
    for _ in range(n_batches):
        counts = rng.integers(1, 500, size=(4, N_LEVELS))
        reg = mse_weights(counts, exact=True)
        cls = class_weights(counts, exact=True)
        exact_ok &= all(reg[i, 0] + reg[i, 2] == 1 for i in range(4))
        exact_ok &= all(sum(cls[i].ravel()) == 1 for i in range(4))
        fl = class_weights(counts)
        worst = max(worst, float(np.max(np.abs(fl - cls.astype(np.float64)))))
    rows.append(("weight identities hold exactly", bool(exact_ok), "rational evaluation"))
    rows.append(("float weights match rational weights", worst <= 1e-15, f"max deviation {worst:.3g}"))

    v = np.array([1.0, 2.0])
    c0 = cosine_loss(v, v)
    rows.append(("corrected cosine zero at y = y_hat", abs(c0) < 1e-15, repr(c0)))
    cp = cosine_loss(v, v, mode="as_printed")
    rows.append(("as-printed cosine at (1,2)", cp == 0.8, repr(cp)))

    worst = 0.0
    for _ in range(n_batches):
        batch, preds = random_batch(rng)
        weights = make_weights(batch.counts)
        err = relative_error(loss_gradient(batch, preds, weights), numeric_gradient(batch, preds, weights))
        worst = max(worst, err)
    rows.append((f"gradient check on {n_batches} batches", worst < tol, f"max relative error {worst:.3g}"))
    return rows
