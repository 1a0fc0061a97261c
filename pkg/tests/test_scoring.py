import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aupref.errors import DataError
from aupref.scoring import (EnsembleWeights, Standardizer, au4_valence, ensemble_score,
                            integrated_score, standardize)


def test_valence_examples():
    assert au4_valence(0.0, 0.7) == 0.0
    with mpmath.workdps(30):
        ref = float(-(1 - mpmath.exp(-mpmath.mpf("0.4"))))
    assert au4_valence(1.0, 0.4) == pytest.approx(ref, rel=1e-15)
    assert au4_valence(1.0, 0.4) == pytest.approx(-0.329679953, abs=1e-9)
    assert -1 < au4_valence(30.0, 0.4) < -0.99999


def test_valence_errors():
    with pytest.raises(DataError):
        au4_valence(-0.1, 0.4)
    with pytest.raises(ValueError):
        au4_valence(1.0, 0.0)


@given(a=st.floats(0, 50), b=st.floats(0, 50), k=st.floats(0.01, 5))
def test_valence_bounded_and_monotone(a, b, k):
    va, vb = au4_valence(a, k), au4_valence(b, k)
    assert -1 <= va <= 0
    if a < b:
        assert va >= vb


def test_standardize():
    assert standardize([1, 2, 3], 2, 1).tolist() == [-1, 0, 1]
    with pytest.raises(DataError):
        Standardizer.fit([4, 4, 4])
    with pytest.raises(DataError):
        standardize([1], 0, 0)
    z = Standardizer.fit([1.0, 5.0, 2.0, 8.0])([1.0, 5.0, 2.0, 8.0])
    assert np.mean(z) == pytest.approx(0, abs=1e-15)
    assert np.std(z, ddof=1) == pytest.approx(1, abs=1e-15)


def test_standardizer_ignores_nan():
    s = Standardizer.fit([1.0, np.nan, 3.0])
    assert (s.mean, s.std) == (2.0, pytest.approx(2 ** 0.5))


def test_ensemble_examples():
    w = EnsembleWeights(0.1, 0.6, 0.3)
    assert ensemble_score(w, 1, 1, 1) == pytest.approx(1.0)
    assert ensemble_score(EnsembleWeights(1, 0, 0), 0.37, 5, 9) == 0.37
    assert ensemble_score(w, 0, 1, -1) == pytest.approx(0.3)
    with pytest.raises(DataError):
        ensemble_score(w, np.nan, 1, 1)
    with pytest.raises(ValueError):
        EnsembleWeights(0.5, 0.6, 0.1)


@given(s=st.tuples(*[st.floats(-10, 10)] * 3), i=st.integers(0, 10), j=st.integers(0, 10))
def test_ensemble_permutation_invariance(s, i, j):
    if i + j > 10:
        return
    w = (i / 10, j / 10, (10 - i - j) / 10)
    a = ensemble_score(EnsembleWeights(*w), *s)
    b = ensemble_score(EnsembleWeights(w[2], w[0], w[1]), s[2], s[0], s[1])
    assert a == pytest.approx(b, abs=1e-12)


def test_integrated_examples():
    assert integrated_score(0.5, 0.0, -0.9) == 0.5
    assert integrated_score(0.5, 1.0, -0.33) == pytest.approx(0.17)


@given(s=st.floats(-5, 5), a=st.floats(0.01, 3), v1=st.floats(-1, 0), v2=st.floats(-1, 0))
def test_integration_follows_valence_when_model_ties(s, a, v1, v2):
    x, y = integrated_score(s, a, v1), integrated_score(s, a, v2)
    if v1 > v2:
        assert x >= y
