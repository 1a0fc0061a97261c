"""Ground-truth preference pairs and thresholded pairwise prediction."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Callable, Iterable, Mapping

import numpy as np

from . import kernels
from .errors import DataError

PREFER_FIRST = "prefer_first"
PREFER_SECOND = "prefer_second"
ABSTAIN = "abstain"

DEFAULT_PENALTY = 2


@dataclass(frozen=True)
class PreferencePair:
    session_id: str
    preferred: str
    other: str

    def __post_init__(self):
        if self.preferred == self.other:
            raise DataError(f"pair compares image {self.preferred!r} with itself")


def pairs_from_ranking(session_id: str, ranked: Iterable[tuple[str, int]]) -> list[PreferencePair]:
    """All unordered pairs of a session, better-ranked image first.

    ``ranked`` yields ``(image_id, rank)`` with rank 1 the best.
    """
    items = list(ranked)
    ranks = [r for _, r in items]
    if len(set(ranks)) != len(ranks):
        raise DataError(f"duplicate rank in session {session_id}")
    items.sort(key=lambda x: x[1])
    return [PreferencePair(session_id, a, b) for (a, _), (b, _) in combinations(items, 2)]


def predict_pair(s1: float, s2: float, d: float) -> str:
    """Predict a preference only when the score gap reaches ``d``; ties always abstain."""
    if s1 - s2 >= d and s1 > s2:
        return PREFER_FIRST
    if s2 - s1 >= d and s2 > s1:
        return PREFER_SECOND
    return ABSTAIN


@dataclass(frozen=True)
class PredictionOutcome:
    n_correct: int
    n_incorrect: int
    n_abstain: int
    penalty: int = DEFAULT_PENALTY

    @property
    def total(self) -> int:
        return self.n_correct + self.n_incorrect + self.n_abstain

    @property
    def decided(self) -> int:
        return self.n_correct + self.n_incorrect

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.decided if self.decided else 0.0

    @property
    def selection_rate(self) -> float:
        return self.decided / self.total if self.total else 0.0

    @property
    def objective(self) -> int:
        return self.n_correct - self.penalty * self.n_incorrect

    def __add__(self, other: "PredictionOutcome") -> "PredictionOutcome":
        if self.penalty != other.penalty:
            raise ValueError("cannot pool outcomes computed with different penalties")
        return PredictionOutcome(self.n_correct + other.n_correct,
                                 self.n_incorrect + other.n_incorrect,
                                 self.n_abstain + other.n_abstain, self.penalty)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(total=self.total, accuracy=self.accuracy,
                   selection_rate=self.selection_rate, objective=self.objective)
        return out


def outcome_from_diff(diff, d: float, penalty: int = DEFAULT_PENALTY) -> PredictionOutcome:
    """Outcome from ``score(preferred) - score(other)`` per pair; NaN abstains."""
    diff = np.asarray(diff, dtype=np.float64)
    correct, incorrect = kernels.threshold_counts(diff, np.array([d], dtype=np.float64))
    c, i = int(correct[0]), int(incorrect[0])
    return PredictionOutcome(c, i, diff.size - c - i, penalty)


def evaluate(pairs: Iterable[PreferencePair], score_of: Mapping[str, float] | Callable[[str], float],
             d: float, penalty: int = DEFAULT_PENALTY) -> PredictionOutcome:
    """Score every pair against its ground-truth orientation.

    Pairs where either image has no score (missing key or NaN) abstain.
    """
    lookup = score_of if callable(score_of) else (lambda i: score_of.get(i, np.nan))
    c = i = a = 0
    for p in pairs:
        s1, s2 = lookup(p.preferred), lookup(p.other)
        if s1 is None or s2 is None or np.isnan(s1) or np.isnan(s2):
            a += 1
            continue
        decision = predict_pair(s1, s2, d)
        if decision == PREFER_FIRST:
            c += 1
        elif decision == PREFER_SECOND:
            i += 1
        else:
            a += 1
    return PredictionOutcome(c, i, a, penalty)
