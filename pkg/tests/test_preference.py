import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aupref.errors import DataError
from aupref.preference import (ABSTAIN, PREFER_FIRST, PREFER_SECOND, PredictionOutcome,
                               PreferencePair, evaluate, outcome_from_diff, pairs_from_ranking,
                               predict_pair)


def test_pairs_from_ranking():
    pairs = pairs_from_ranking("S", [("C", 3), ("A", 1), ("B", 2)])
    assert [(p.preferred, p.other) for p in pairs] == [("A", "B"), ("A", "C"), ("B", "C")]
    assert len(pairs_from_ranking("S", [(str(i), i) for i in range(1, 6)])) == 10
    assert pairs_from_ranking("S", [("A", 1)]) == []
    with pytest.raises(DataError):
        pairs_from_ranking("S", [("A", 1), ("B", 1)])
    with pytest.raises(DataError):
        PreferencePair("S", "A", "A")


def test_predict_pair_examples():
    assert predict_pair(-0.1, -0.5, 0.42) == ABSTAIN
    assert predict_pair(-0.05, -0.6, 0.42) == PREFER_FIRST
    assert predict_pair(0.3, 0.3, 0.0) == ABSTAIN
    assert predict_pair(-0.6, -0.05, 0.42) == PREFER_SECOND


def test_evaluate_examples():
    pairs = [PreferencePair("S", f"a{i}", f"b{i}") for i in range(4)]
    scores = {"a0": 1, "b0": 0, "a1": 1, "b1": 0, "a2": 1, "b2": 0, "a3": 0, "b3": 1}
    out = evaluate(pairs, scores, 0.0)
    assert (out.n_correct, out.n_incorrect, out.n_abstain) == (3, 1, 0)
    assert out.accuracy == 0.75 and out.objective == 1
    big = evaluate(pairs, scores, 10.0)
    assert big.selection_rate == 0 and big.objective == 0 and big.accuracy == 0.0


def test_missing_score_abstains():
    pairs = [PreferencePair("S", "a", "b"), PreferencePair("S", "a", "c")]
    out = evaluate(pairs, {"a": 1.0, "b": np.nan}, 0.0)
    assert out.n_abstain == 2


def test_oracle_scores_are_perfect():
    rng = np.random.default_rng(0)
    truth = rng.permutation(8)
    pairs = pairs_from_ranking("S", [(str(i), int(r) + 1) for i, r in enumerate(truth)])
    out = evaluate(pairs, {str(i): -float(r) for i, r in enumerate(truth)}, 0.0)
    assert out.accuracy == 1.0 and out.n_abstain == 0


def test_pooling():
    a, b = PredictionOutcome(3, 1, 2), PredictionOutcome(1, 0, 4)
    assert a + b == PredictionOutcome(4, 1, 6)
    with pytest.raises(ValueError):
        a + PredictionOutcome(0, 0, 0, penalty=3)


diffs = st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=50)


@given(diff=diffs, d1=st.floats(0, 2), d2=st.floats(0, 2))
def test_raising_d_is_monotone(diff, d1, d2):
    lo, hi = sorted((d1, d2))
    a, b = outcome_from_diff(diff, lo), outcome_from_diff(diff, hi)
    assert b.n_incorrect <= a.n_incorrect
    assert b.selection_rate <= a.selection_rate
    assert b.objective <= b.n_correct


@given(s=st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=20),
       d=st.floats(0, 2))
def test_antisymmetry(s, d):
    scores = {}
    fwd, rev = [], []
    for i, (x, y) in enumerate(s):
        scores[f"x{i}"], scores[f"y{i}"] = x, y
        fwd.append(PreferencePair("S", f"x{i}", f"y{i}"))
        rev.append(PreferencePair("S", f"y{i}", f"x{i}"))
    a = evaluate(fwd, scores, d)
    b = evaluate(rev, {k: -v for k, v in scores.items()}, d)
    assert a == b


@given(diff=diffs, d=st.floats(0, 2))
def test_vector_and_scalar_paths_agree(diff, d):
    pairs = [PreferencePair("S", f"a{i}", f"b{i}") for i in range(len(diff))]
    scores = {}
    for i, x in enumerate(diff):
        scores[f"a{i}"], scores[f"b{i}"] = x, 0.0
    assert evaluate(pairs, scores, d) == outcome_from_diff(diff, d)
