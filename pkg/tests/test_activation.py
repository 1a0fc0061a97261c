import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aupref.activation import (activation_value, moving_window_mean, participant_reliability,
                               window_length)
from aupref.errors import DataError, FeatureUndefinedError
from aupref.frame_filter import FilterThresholds, filter_clip

import oracles
from helpers import make_trace

T = FilterThresholds()


def _clip(au4, **geometry):
    return filter_clip(make_trace(np.asarray(au4, dtype=float), **geometry), T)


def test_window_length_rounds_half_up():
    assert window_length(30) == 3
    assert window_length(25) == 3
    assert window_length(24) == 2
    assert window_length(15) == 2
    assert window_length(5) == 1
    with pytest.raises(DataError):
        window_length(0)


def test_constant_series():
    m = moving_window_mean(np.full(10, 2.0), 3)
    assert np.all(m[:8] == 2.0)
    assert np.isnan(m[8:]).all()


def test_step_series():
    # windows 1..7 counted from one are positions 0..6 here
    m = moving_window_mean([0, 0, 0, 0, 0, 0, 3, 3, 3], 3)
    assert m[:7].tolist() == [0, 0, 0, 0, 1, 2, 3]
    assert np.isnan(m[7:]).all()
    assert activation_value(_clip([0, 0, 0, 0, 0, 0, 3, 3, 3])).alpha4 == 3


def test_invalid_frame_breaks_windows():
    ok = np.ones(12, dtype=bool)
    ok[5] = False
    m = moving_window_mean(np.arange(12.0), 3, ok)
    assert np.isnan(m[3:6]).all()
    assert not np.isnan(m[[0, 1, 2, 6, 7, 8, 9]]).any()


def test_constant_and_decreasing_give_zero():
    assert activation_value(_clip(np.full(30, 1.7))).alpha4 == 0.0
    assert activation_value(_clip(np.linspace(3, 0, 30))).alpha4 == 0.0


def test_first_window_falls_back():
    au4 = np.array([9.0, 9.0, 0.5, 0.5, 0.5, 0.5, 2.0, 2.0, 2.0, 2.0])
    fdcs = np.full(10, 0.95)
    fdcs[0] = 0.1
    f = activation_value(_clip(au4, fdcs=fdcs))
    assert f.first_window_mean[2] == pytest.approx((9 + 0.5 + 0.5) / 3)
    assert f.alpha4 == pytest.approx(0.0)


def test_no_defined_window():
    with pytest.raises(FeatureUndefinedError):
        activation_value(_clip([1.0, 2.0]))


def test_excluded_clip_refused():
    with pytest.raises(DataError):
        activation_value(_clip(np.zeros(10), fdcs=0.1))


def test_getitem_by_au_number():
    f = activation_value(_clip([0, 0, 0, 0, 0, 0, 3, 3, 3]))
    assert f[4] == 3 and f[12] == 0


@pytest.mark.parametrize("value,verdict", [(0.74, "excluded"), (0.36, "included"), (0.0, "included")])
def test_reliability_examples(value, verdict):
    assert participant_reliability([value] * 10) == verdict


def test_reliability_strict_and_linear():
    assert participant_reliability([0.5] * 5) == "included"
    vals = [0.0, 0.0, 0.0, 0.6, 1.0]
    assert participant_reliability(vals) == ("excluded" if oracles.percentile80(vals) > 0.5 else "included")
    with pytest.raises(DataError):
        participant_reliability([])


series = st.lists(st.floats(-5, 5, allow_nan=False, width=32), min_size=1, max_size=40)


@settings(max_examples=200, deadline=None)
@given(values=series, w=st.integers(1, 5), data=st.data())
def test_window_mean_matches_naive_bitwise(values, w, data):
    ok = data.draw(st.lists(st.booleans(), min_size=len(values), max_size=len(values)))
    got = moving_window_mean(np.array(values), w, np.array(ok))
    want = oracles.window_means(values, ok, w)
    for g, e in zip(got, want):
        assert (math.isnan(g) and e is None) or g == e


@settings(max_examples=150, deadline=None)
@given(values=st.lists(st.floats(0, 5, allow_nan=False), min_size=3, max_size=40),
       shift=st.floats(-3, 3, allow_nan=False))
def test_alpha_nonnegative_and_shift_invariant(values, shift):
    a = activation_value(_clip(values)).alpha4
    assert a >= 0
    assert a == oracles.activation(values, [True] * len(values), 3)
    b = activation_value(_clip(np.array(values) + shift)).alpha4
    assert b == pytest.approx(a, abs=1e-9)
