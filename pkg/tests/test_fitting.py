import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aupref.dataset import build_dataset
from aupref.errors import ConfigError, DataError
from aupref.fitting import (GridSpec, decided_pairs, grid_fit_ensemble, grid_fit_integration,
                            grid_fit_valence, lattice, lopo_evaluate, lopo_folds, parse_protocol,
                            subset_outcome)
from aupref.synth import SynthSpec, generate_synthetic_cohort

import oracles
from helpers import tiny_cohort

GRID = GridSpec()


def chain_pairs(n):
    return np.array([(i, j) for i in range(n) for j in range(i + 1, n)])


def test_default_lattices():
    assert GRID.k_values.size == 20 and GRID.k_values[0] == 0.1 and GRID.k_values[-1] == 2.0
    assert GRID.d_values.size == 51 and GRID.d_values[21] == 0.42
    assert GRID.a_values.size == 31
    simplex = GRID.simplex()
    assert len(simplex) == 66
    assert all(sum(w.as_tuple()) == pytest.approx(1.0, abs=1e-15) for w in simplex)
    assert simplex[0].as_tuple() == (0.0, 0.0, 1.0)


def test_lattice_errors():
    with pytest.raises(ConfigError):
        lattice(0, 1, 0)
    with pytest.raises(ConfigError):
        lattice(0, 0.15, 0.1)
    with pytest.raises(ConfigError):
        GridSpec(k_range=(0.0, 1.0))
    with pytest.raises(ConfigError):
        GridSpec(w_step=0.3)


def test_flat_objective_tiebreak():
    fit = grid_fit_valence(chain_pairs(4), np.full(4, 0.8))
    assert (fit.k, fit.d, fit.objective) == (0.1, 0.0, 0)


def test_zero_noise_fits_smallest_point():
    alpha4 = np.linspace(0, 3, 5)  # rank 1 has the lowest AU4
    fit = grid_fit_valence(chain_pairs(5), alpha4)
    assert (fit.k, fit.d) == (0.1, 0.0)
    assert fit.n_correct == 10 and fit.n_incorrect == 0


def test_adversarial_set_saturates_to_abstain():
    alpha4 = np.linspace(3, 0, 5)  # every decision points the wrong way
    fit = grid_fit_valence(chain_pairs(5), alpha4)
    assert fit.n_correct == 0 and fit.n_incorrect == 0
    obj, k, d = oracles.sweep_valence(chain_pairs(5).tolist(), alpha4.tolist(), GRID.k_values, GRID.d_values)
    assert (fit.objective, fit.k, fit.d) == (obj, k, d)


def test_empty_training_set():
    with pytest.raises(DataError):
        grid_fit_valence(np.zeros((0, 2)), np.zeros(3))


@settings(max_examples=25)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(3, 8), penalty=st.integers(1, 3))
def test_valence_fit_matches_sweep(seed, n, penalty):
    rng = np.random.default_rng(seed)
    alpha4 = np.round(rng.gamma(1.0, 1.0, n), 3)
    pairs = chain_pairs(n)
    pairs = pairs[rng.random(len(pairs)) < 0.8] if len(pairs) > 3 else pairs
    grid = GridSpec(d_range=(0.0, 0.5), d_step=0.05)
    fit = grid_fit_valence(pairs, alpha4, grid, penalty)
    obj, k, d = oracles.sweep_valence(pairs.tolist(), alpha4.tolist(), grid.k_values, grid.d_values, penalty)
    assert (fit.objective, fit.k, fit.d) == (obj, k, d)


def test_ensemble_dominant_and_identical_columns():
    pairs = chain_pairs(6)
    truth = -np.arange(6.0)
    # the other two columns are large and reversed, so any weight on them costs pairs
    cols = np.column_stack([-100 * truth, truth, -100 * truth])
    assert grid_fit_ensemble(pairs, cols).weights.as_tuple() == (0.0, 1.0, 0.0)
    same = np.column_stack([truth] * 3)
    assert grid_fit_ensemble(pairs, same).weights.as_tuple() == (0.0, 0.0, 1.0)
    cols[2, 0] = np.nan
    with pytest.raises(DataError):
        grid_fit_ensemble(pairs, cols)


@settings(max_examples=25)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(3, 8))
def test_ensemble_matches_sweep(seed, n):
    rng = np.random.default_rng(seed)
    cols = np.round(rng.normal(size=(n, 3)), 2)
    pairs = chain_pairs(n)
    fit = grid_fit_ensemble(pairs, cols)
    acc, w = oracles.sweep_ensemble(pairs.tolist(), cols.tolist())
    assert fit.weights.as_tuple() == pytest.approx(w, abs=1e-12)
    assert fit.n_correct * acc.denominator == acc.numerator * fit.n_decided or acc == 0


def test_integration_examples():
    pairs = chain_pairs(5)
    truth = -np.arange(5.0)
    assert grid_fit_integration(pairs, truth, np.full(5, -0.4)).a == 0.0
    assert grid_fit_integration(pairs, np.zeros(5), truth).a == 0.1


@settings(max_examples=25)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(3, 8))
def test_integration_matches_sweep(seed, n):
    rng = np.random.default_rng(seed)
    s_m = np.round(rng.normal(size=n), 2)
    s_au4 = -np.round(rng.random(n), 2)
    pairs = chain_pairs(n)
    fit = grid_fit_integration(pairs, s_m, s_au4)
    _, a = oracles.sweep_integration(pairs.tolist(), s_m.tolist(), s_au4.tolist(), GRID.a_values)
    assert fit.a == a


def test_lopo_folds():
    folds = lopo_folds(["P1", "P2", "P3"])
    assert [h for _, h in folds] == ["P1", "P2", "P3"]
    assert all(set(t) | {h} == {"P1", "P2", "P3"} and h not in t for t, h in folds)
    assert len(lopo_folds([f"P{i}" for i in range(30)])) == 30
    with pytest.raises(DataError):
        lopo_folds(["P1"])


def test_parse_protocol():
    assert parse_protocol("valence_only") == ("valence_only", None)
    assert parse_protocol("integrated:pickscore") == ("integrated", "pickscore")
    for bad in ("integrated", "valence_only:x", "oracle"):
        with pytest.raises(ConfigError):
            parse_protocol(bad)


@pytest.fixture(scope="module")
def synth_ds():
    spec = SynthSpec(n_participants=5, sessions_per_participant=4)
    return build_dataset(generate_synthetic_cohort(spec, 11))


def test_lopo_pools_by_summing(synth_ds):
    res = lopo_evaluate(synth_ds)
    assert len(res.folds) == len(synth_ds.included)
    pooled = res.pooled
    assert pooled.total == synth_ds.pairs_for(synth_ds.included).sum()
    assert pooled.n_correct == sum(f.outcome.n_correct for f in res.folds)
    assert len(res.decisions) == pooled.total
    assert subset_outcome(res, decided_pairs(res)).n_abstain == 0
    for f in res.folds:
        assert f.params["k"] in GRID.k_values and f.params["d"] in GRID.d_values


def test_lopo_is_deterministic(synth_ds):
    a = lopo_evaluate(synth_ds, "integrated:ensemble").to_dict()
    b = lopo_evaluate(synth_ds, "integrated:ensemble").to_dict()
    assert a == b


@pytest.mark.parametrize("protocol", ["valence_only", "ensemble", "integrated:pickscore",
                                      "integrated:ensemble", "baseline:clip_score"])
def test_held_out_data_never_leaks(synth_ds, protocol):
    base = lopo_evaluate(synth_ds, protocol)
    held = synth_ds.included[0]
    rows = synth_ds.images_for([held])
    ds = copy.copy(synth_ds)
    rng = np.random.default_rng(0)
    ds.alpha = synth_ds.alpha.copy()
    ds.alpha[rows] = rng.gamma(2.0, 2.0, size=(rows.sum(), ds.alpha.shape[1]))
    ds.scores = {m: v.copy() for m, v in synth_ds.scores.items()}
    for v in ds.scores.values():
        v[rows] = rng.normal(50, 30, rows.sum())
    pert = lopo_evaluate(ds, protocol)
    assert base.folds[0].params == pert.folds[0].params
    assert base.folds[0].train_objective == pert.folds[0].train_objective


def test_zero_noise_lopo_is_perfect():
    spec = SynthSpec(n_participants=4, sessions_per_participant=3, noise=0.0)
    res = lopo_evaluate(build_dataset(generate_synthetic_cohort(spec, 5)))
    assert res.pooled.accuracy == 1.0
    assert res.pooled.n_incorrect == 0


def test_tiny_cohort_lopo():
    cohort = tiny_cohort({"P1": [0.0, 1.0, 2.0], "P2": [0.1, 0.6, 1.4], "P3": [0.0, 0.2, 3.0]})
    res = lopo_evaluate(build_dataset(cohort))
    assert res.pooled.n_correct == 9 and res.pooled.n_incorrect == 0


def test_unknown_model(synth_ds):
    with pytest.raises(DataError):
        lopo_evaluate(synth_ds, "baseline:nope")
