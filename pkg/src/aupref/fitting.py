"""Leave-one-participant-out grid-search fitting and evaluation.

Every fit is an exhaustive sweep over a fixed lattice. Flat objectives are
resolved deterministically: the valence fit prefers smaller d, then smaller
k; the ensemble fit prefers the lexicographically smallest (w_ir, w_pick);
the integration fit prefers the smallest weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dataset import Dataset
from .errors import ConfigError, DataError
from .preference import DEFAULT_PENALTY, PredictionOutcome, outcome_from_diff
from .scoring import ENSEMBLE_MODELS, EnsembleWeights, Standardizer, au4_valence, ensemble_score, integrated_score


def lattice(lo: float, hi: float, step: float) -> np.ndarray:
    """Points ``lo, lo+step, ..., hi`` built as integer multiples of ``step``."""
    if not step > 0:
        raise ConfigError(f"grid step must be positive, got {step}")
    i0, i1 = round(lo / step), round(hi / step)
    if abs(lo / step - i0) > 1e-9 or abs(hi / step - i1) > 1e-9:
        raise ConfigError(f"range [{lo}, {hi}] is not on the {step} lattice")
    if i1 < i0:
        raise ConfigError(f"empty grid range [{lo}, {hi}]")
    return np.round(np.arange(i0, i1 + 1) * step, 12)


@dataclass(frozen=True)
class GridSpec:
    k_range: tuple[float, float] = (0.1, 2.0)
    k_step: float = 0.1
    d_range: tuple[float, float] = (0.0, 1.0)
    d_step: float = 0.02
    w_step: float = 0.1
    a_range: tuple[float, float] = (0.0, 3.0)
    a_step: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "k_range", tuple(float(v) for v in self.k_range))
        object.__setattr__(self, "d_range", tuple(float(v) for v in self.d_range))
        object.__setattr__(self, "a_range", tuple(float(v) for v in self.a_range))
        if self.k_range[0] <= 0:
            raise ConfigError("k grid must be strictly positive")
        if self.d_range[0] < 0 or self.a_range[0] < 0:
            raise ConfigError("d and a grids must be non-negative")
        for name in ("k", "d", "a"):
            lattice(*getattr(self, f"{name}_range"), getattr(self, f"{name}_step"))
        m = round(1 / self.w_step)
        if not self.w_step > 0 or abs(1 / self.w_step - m) > 1e-9:
            raise ConfigError(f"w_step must divide 1 exactly, got {self.w_step}")

    @property
    def k_values(self) -> np.ndarray:
        return lattice(*self.k_range, self.k_step)

    @property
    def d_values(self) -> np.ndarray:
        return lattice(*self.d_range, self.d_step)

    @property
    def a_values(self) -> np.ndarray:
        return lattice(*self.a_range, self.a_step)

    def simplex(self) -> list[EnsembleWeights]:
        """Weight triples on the step lattice, ordered by (w_ir, w_pick) ascending."""
        m = round(1 / self.w_step)
        return [EnsembleWeights(i / m, j / m, (m - i - j) / m)
                for i in range(m + 1) for j in range(m + 1 - i)]

    def to_dict(self) -> dict:
        return {"k_range": list(self.k_range), "k_step": self.k_step,
                "d_range": list(self.d_range), "d_step": self.d_step,
                "w_step": self.w_step,
                "a_range": list(self.a_range), "a_step": self.a_step}


# ---------------------------------------------------------------- grid fits


def _pair_diff(image_scores: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return image_scores[pairs[:, 0]] - image_scores[pairs[:, 1]]


def _check_pairs(pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] == 0:
        raise DataError("no training pairs to fit on")
    return pairs


@dataclass(frozen=True)
class ValenceFit:
    k: float
    d: float
    objective: int
    n_correct: int
    n_incorrect: int


def valence_objective_table(pairs, alpha4, grid: GridSpec, penalty: int = DEFAULT_PENALTY):
    """(correct, incorrect) counts for every (k, d) lattice cell, shape (n_k, n_d)."""
    pairs = _check_pairs(pairs)
    alpha4 = np.asarray(alpha4, dtype=np.float64)
    ks, ds = grid.k_values, grid.d_values
    correct = np.zeros((ks.size, ds.size), dtype=np.int64)
    incorrect = np.zeros_like(correct)
    for i, k in enumerate(ks):
        diff = _pair_diff(au4_valence(alpha4, float(k)), pairs)
        correct[i], incorrect[i] = kernels.threshold_counts(diff, ds)
    return correct, incorrect


def grid_fit_valence(pairs, alpha4, grid: GridSpec | None = None,
                     penalty: int = DEFAULT_PENALTY) -> ValenceFit:
    """Fit decay coefficient k and difference threshold d by maximising
    ``n_correct - penalty * n_incorrect`` over the training pairs."""
    grid = grid or GridSpec()
    correct, incorrect = valence_objective_table(pairs, alpha4, grid, penalty)
    objective = correct - penalty * incorrect
    # d-major order so argmax's first hit is the smallest d, then smallest k
    flat = int(np.argmax(objective.T))
    di, ki = divmod(flat, objective.shape[0])
    return ValenceFit(float(grid.k_values[ki]), float(grid.d_values[di]),
                      int(objective[ki, di]), int(correct[ki, di]), int(incorrect[ki, di]))


def _better(c: int, n: int, best_c: int, best_n: int) -> bool:
    # exact comparison of c/n > best_c/best_n, with 0/0 read as accuracy 0
    if n == 0:
        return False
    if best_n == 0:
        return c > 0
    return c * best_n > best_c * n


def _best_accuracy(correct: np.ndarray, incorrect: np.ndarray) -> int:
    best, best_c, best_n = 0, 0, 0
    for g in range(correct.size):
        c, n = int(correct[g]), int(correct[g] + incorrect[g])
        if _better(c, n, best_c, best_n):
            best, best_c, best_n = g, c, n
    return best


@dataclass(frozen=True)
class EnsembleFit:
    weights: EnsembleWeights
    n_correct: int
    n_decided: int

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_decided if self.n_decided else 0.0


def grid_fit_ensemble(pairs, standardized: np.ndarray, grid: GridSpec | None = None) -> EnsembleFit:
    """Fit simplex weights over three standardised score columns
    (ImageReward, PickScore, HPSv2) for best forced-choice accuracy."""
    grid = grid or GridSpec()
    pairs = _check_pairs(pairs)
    s = np.asarray(standardized, dtype=np.float64)
    used = np.unique(pairs)
    if np.isnan(s[used]).any():
        raise DataError("missing scores for training images")
    # rows outside the training pairs never enter a difference
    s = np.where(np.isnan(s), 0.0, s)
    candidates = grid.simplex()
    diffs = np.empty((len(candidates), pairs.shape[0]))
    for g, w in enumerate(candidates):
        diffs[g] = _pair_diff(ensemble_score(w, s[:, 0], s[:, 1], s[:, 2]), pairs)
    correct, incorrect = kernels.sign_counts(diffs)
    best = _best_accuracy(correct, incorrect)
    return EnsembleFit(candidates[best], int(correct[best]), int(correct[best] + incorrect[best]))


@dataclass(frozen=True)
class IntegrationFit:
    a: float
    n_correct: int
    n_decided: int

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_decided if self.n_decided else 0.0


def grid_fit_integration(pairs, s_m, s_au4, grid: GridSpec | None = None) -> IntegrationFit:
    """Fit the weight a in ``s_m + a * s_au4`` for best forced-choice accuracy."""
    grid = grid or GridSpec()
    pairs = _check_pairs(pairs)
    s_m = np.asarray(s_m, dtype=np.float64)
    s_au4 = np.asarray(s_au4, dtype=np.float64)
    used = np.unique(pairs)
    if np.isnan(s_m[used]).any() or np.isnan(s_au4[used]).any():
        raise DataError("missing scores for training images")
    a_values = grid.a_values
    diffs = np.empty((a_values.size, pairs.shape[0]))
    for g, a in enumerate(a_values):
        diffs[g] = _pair_diff(integrated_score(s_m, float(a), s_au4), pairs)
    correct, incorrect = kernels.sign_counts(diffs)
    best = _best_accuracy(correct, incorrect)
    return IntegrationFit(float(a_values[best]), int(correct[best]), int(correct[best] + incorrect[best]))


# --------------------------------------------------------------------- LOPO


def lopo_folds(participants) -> list[tuple[list[str], str]]:
    participants = list(participants)
    if len(participants) < 2:
        raise DataError(f"leave-one-participant-out needs at least 2 participants, got {len(participants)}")
    return [([p for p in participants if p != held], held) for held in participants]


PROTOCOLS = ("valence_only", "ensemble", "baseline:<model>", "integrated:<model>")


def parse_protocol(protocol: str) -> tuple[str, str | None]:
    kind, _, model = protocol.partition(":")
    if kind in ("valence_only", "ensemble") and not model:
        return kind, None
    if kind in ("baseline", "integrated") and model:
        return kind, model
    raise ConfigError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")


@dataclass
class FoldResult:
    held_out: str
    params: dict
    train_pairs: int
    train_objective: float
    outcome: PredictionOutcome
    forced: PredictionOutcome | None = None

    def to_dict(self) -> dict:
        out = {"held_out": self.held_out, "params": self.params, "train_pairs": self.train_pairs,
               "train_objective": self.train_objective, "outcome": self.outcome.to_dict()}
        if self.forced is not None:
            out["forced"] = self.forced.to_dict()
        return out


@dataclass
class FitResult:
    protocol: str
    folds: list[FoldResult]
    grid: GridSpec
    penalty: int
    decisions: list[dict] = field(default_factory=list, repr=False)

    @property
    def pooled(self) -> PredictionOutcome:
        total = PredictionOutcome(0, 0, 0, self.penalty)
        for f in self.folds:
            total = total + f.outcome
        return total

    @property
    def pooled_forced(self) -> PredictionOutcome | None:
        if any(f.forced is None for f in self.folds):
            return None
        total = PredictionOutcome(0, 0, 0, self.penalty)
        for f in self.folds:
            total = total + f.forced
        return total

    def to_dict(self) -> dict:
        out = {"protocol": self.protocol, "penalty": self.penalty,
               "folds": [f.to_dict() for f in self.folds],
               "pooled": self.pooled.to_dict(), "grid": self.grid.to_dict()}
        forced = self.pooled_forced
        if forced is not None:
            out["pooled_forced"] = forced.to_dict()
        return out


def _standardized(ds: Dataset, model: str, train_images: np.ndarray) -> np.ndarray:
    col = ds.scores.get(model)
    if col is None:
        raise DataError(f"no score column {model!r} in the cohort")
    return Standardizer.fit(col[train_images])(col)


def _complete_pairs(pairs: np.ndarray, *columns: np.ndarray) -> np.ndarray:
    ok = np.ones(pairs.shape[0], dtype=bool)
    for c in columns:
        ok &= ~np.isnan(c[pairs[:, 0]]) & ~np.isnan(c[pairs[:, 1]])
    return ok


def _model_score(ds: Dataset, model: str, train_images: np.ndarray, train_pairs: np.ndarray, grid: GridSpec):
    """Standardised score column for ``model`` (or a freshly fitted ensemble)."""
    if model != "ensemble":
        return _standardized(ds, model, train_images), {}
    cols = np.column_stack([_standardized(ds, m, train_images) for m in ENSEMBLE_MODELS])
    ok = _complete_pairs(train_pairs, *cols.T)
    fit = grid_fit_ensemble(train_pairs[ok], cols, grid)
    w = fit.weights
    score = np.full(cols.shape[0], np.nan)
    rows = ~np.isnan(cols).any(axis=1)
    score[rows] = ensemble_score(w, cols[rows, 0], cols[rows, 1], cols[rows, 2])
    return score, {"w_ir": w.w_ir, "w_pick": w.w_pick, "w_hpsv2": w.w_hpsv2,
                   "ensemble_train_accuracy": fit.accuracy}


def lopo_evaluate(ds: Dataset, protocol: str = "valence_only", grid: GridSpec | None = None,
                  penalty: int = DEFAULT_PENALTY, participants=None,
                  standardize_valence: bool = False) -> FitResult:
    """Fit on all-but-one participant, evaluate on the held-out one, for every participant.

    Held-out outcomes are pooled by summing counts. Standardisation statistics
    and every fitted parameter come from the training participants only.
    ``standardize_valence`` rescales the AU4 valence score with training
    statistics before it enters an integrated score.
    """
    grid = grid or GridSpec()
    kind, model = parse_protocol(protocol)
    participants = list(ds.included if participants is None else participants)
    folds = []
    decisions = []
    for train, held in lopo_folds(participants):
        train_mask = ds.pairs_for(train)
        test_mask = ds.pairs_for([held])
        train_pairs, test_pairs = ds.pairs[train_mask], ds.pairs[test_mask]
        train_images = ds.images_for(train)
        forced = None
        if kind == "valence_only":
            fit = grid_fit_valence(train_pairs, ds.alpha4, grid, penalty)
            score = au4_valence(ds.alpha4, fit.k)
            d = fit.d
            params = {"k": fit.k, "d": fit.d}
            train_obj = fit.objective
            eval_pairs = test_pairs
            forced = outcome_from_diff(_pair_diff(score, eval_pairs), 0.0, penalty)
        elif kind == "ensemble" or (kind == "baseline" and model == "ensemble"):
            score, params = _model_score(ds, "ensemble", train_images, train_pairs, grid)
            d = 0.0
            train_obj = params["ensemble_train_accuracy"]
            eval_pairs = test_pairs[_complete_pairs(test_pairs, score)]
        elif kind == "baseline":
            score, params = _model_score(ds, model, train_images, train_pairs, grid)
            d = 0.0
            ok = _complete_pairs(train_pairs, score)
            train_obj = outcome_from_diff(_pair_diff(score, train_pairs[ok]), 0.0, penalty).accuracy
            eval_pairs = test_pairs[_complete_pairs(test_pairs, score)]
        else:
            vfit = grid_fit_valence(train_pairs, ds.alpha4, grid, penalty)
            s_au4 = au4_valence(ds.alpha4, vfit.k)
            if standardize_valence:
                s_au4 = Standardizer.fit(s_au4[train_images])(s_au4)
            s_m, params = _model_score(ds, model, train_images, train_pairs, grid)
            ok = _complete_pairs(train_pairs, s_m)
            ifit = grid_fit_integration(train_pairs[ok], s_m, s_au4, grid)
            score = integrated_score(s_m, ifit.a, s_au4)
            d = 0.0
            params = {**params, "k": vfit.k, "a": ifit.a}
            train_obj = ifit.accuracy
            eval_pairs = test_pairs[_complete_pairs(test_pairs, s_m)]
        diff = _pair_diff(score, eval_pairs)
        outcome = outcome_from_diff(diff, d, penalty)
        folds.append(FoldResult(held, params, int(train_pairs.shape[0]), train_obj, outcome, forced))
        for (a, b), x in zip(eval_pairs.tolist(), diff.tolist()):
            if x > 0 and x >= d:
                decision = "correct"
            elif x < 0 and -x >= d:
                decision = "incorrect"
            else:
                decision = "abstain"
            decisions.append({"participant_id": held, "preferred": ds.image_ids[a],
                              "other": ds.image_ids[b], "score_preferred": float(score[a]),
                              "score_other": float(score[b]), "decision": decision})
    return FitResult(protocol, folds, grid, penalty, decisions)


def subset_outcome(result: FitResult, keys: set[tuple[str, str]]) -> PredictionOutcome:
    """Pool a result's per-pair decisions over the (preferred, other) pairs in ``keys``."""
    c = i = a = 0
    for row in result.decisions:
        if (row["preferred"], row["other"]) not in keys:
            continue
        c += row["decision"] == "correct"
        i += row["decision"] == "incorrect"
        a += row["decision"] == "abstain"
    return PredictionOutcome(c, i, a, result.penalty)


def decided_pairs(result: FitResult) -> set[tuple[str, str]]:
    return {(r["preferred"], r["other"]) for r in result.decisions if r["decision"] != "abstain"}
