import itertools
import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from aupref.data_model import EMOTIONS, AnnotationRecord
from aupref.dataset import build_dataset
from aupref.errors import DataError
from aupref.stats import (aspects_regression, betainc, bonferroni_threshold, correlation_report,
                          extremity, multiple_linear_regression, normal_cdf, rankdata, spearman,
                          t_cdf, t_two_sided_p, wilcoxon_rank_sum)
from aupref.synth import SynthSpec, generate_synthetic_cohort

import oracles

# ------------------------------------------------------------ distributions


def test_normal_cdf_reference():
    assert abs(normal_cdf(1.96) - 0.975002) < 1e-6
    for x in (-8.0, -3.0, -0.5, 0.0, 0.7, 2.5, 6.0):
        assert normal_cdf(x) == pytest.approx(scipy.stats.norm.cdf(x), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("df", [1, 2, 3, 7, 30, 250])
def test_t_distribution(df):
    for t in (-12.0, -2.1, -0.3, 0.0, 0.9, 3.3, 40.0):
        assert t_cdf(t, df) == pytest.approx(scipy.stats.t.cdf(t, df), rel=1e-9, abs=1e-14)
        assert t_two_sided_p(t, df) == pytest.approx(2 * scipy.stats.t.sf(abs(t), df), rel=1e-9, abs=1e-14)
    assert t_two_sided_p(math.inf, df) == 0.0
    assert math.isnan(t_two_sided_p(math.nan, df))


@settings(max_examples=100)
@given(a=st.floats(0.05, 200), b=st.floats(0.05, 200), x=st.floats(0, 1))
def test_betainc_matches_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(scipy.special.betainc(a, b, x), rel=1e-8, abs=1e-12)


# --------------------------------------------------------------- spearman


def test_rankdata_averages_ties():
    assert rankdata([10, 20, 10, 30]).tolist() == [1.5, 3.0, 1.5, 4.0]
    assert rankdata([3, 1, 2]).tolist() == oracles.avg_ranks([3, 1, 2])


def test_spearman_examples():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]).rho == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [40, 30, 20, 10]).rho == pytest.approx(-1.0)
    # one swap in each half: sum of squared rank gaps is 4, so rho = 1 - 24/120
    rho, p = oracles.spearman_exact([1, 2, 3, 4, 5], [2, 1, 4, 3, 5])
    assert rho == pytest.approx(0.8)
    r = spearman([1, 2, 3, 4, 5], [2, 1, 4, 3, 5])
    assert r.rho == pytest.approx(rho, abs=1e-15)
    assert r.method == "exact" and abs(r.p_value - p) < 1e-12


def test_spearman_errors():
    with pytest.raises(DataError):
        spearman([1, 2, 3], [1, 2])
    with pytest.raises(DataError):
        spearman([1, 2], [1, 2])
    with pytest.raises(DataError):
        spearman([1, 1, 1], [1, 2, 3])


def test_spearman_large_n_uses_t():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=40), rng.normal(size=40)
    r = spearman(x, y)
    ref = scipy.stats.spearmanr(x, y)
    assert r.method == "t"
    assert r.rho == pytest.approx(ref.statistic, abs=1e-12)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-8)


small = st.lists(st.integers(0, 6), min_size=3, max_size=7)


@settings(max_examples=60)
@given(data=st.data(), n=st.integers(3, 7))
def test_spearman_p_matches_permutation_oracle(data, n):
    x = data.draw(st.lists(st.integers(0, 5), min_size=n, max_size=n))
    y = data.draw(st.lists(st.integers(0, 5), min_size=n, max_size=n))
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    rho, p = oracles.spearman_exact(x, y)
    r = spearman(x, y)
    assert r.rho == pytest.approx(rho, abs=1e-12)
    assert abs(r.p_value - p) <= 0.02


@settings(max_examples=100)
@given(xs=st.lists(st.integers(-1000, 1000), min_size=3, max_size=12, unique=True), seed=st.integers(0, 999))
def test_spearman_symmetry_and_monotone_invariance(xs, seed):
    y = np.random.default_rng(seed).normal(size=len(xs))
    a = spearman(xs, y, method="t")
    assert spearman(y, xs, method="t").rho == pytest.approx(a.rho, abs=1e-12)
    x = np.array(xs, dtype=float)
    assert spearman(x ** 3 + 7 * x, y, method="t").rho == pytest.approx(a.rho, abs=1e-12)


# --------------------------------------------------------------- rank sum


def test_ranksum_examples():
    r = wilcoxon_rank_sum([4, 7, 1], [7, 1, 4])
    assert (r.z, r.p_value) == (0.0, 1.0)
    r = wilcoxon_rank_sum([1, 2, 3], [10, 11, 12])
    assert r.p_value == pytest.approx(0.1, abs=1e-15) and r.method == "exact"
    assert oracles.ranksum_exact([1, 2, 3], [10, 11, 12]) == pytest.approx(0.1)
    s = wilcoxon_rank_sum([10, 11, 12], [1, 2, 3])
    assert s.z == -r.z and s.p_value == r.p_value
    with pytest.raises(DataError):
        wilcoxon_rank_sum([], [1])


@settings(max_examples=60)
@given(a=st.lists(st.integers(0, 8), min_size=1, max_size=6), b=st.lists(st.integers(0, 8), min_size=1, max_size=7))
def test_ranksum_exact_matches_enumeration(a, b):
    assert wilcoxon_rank_sum(a, b, method="exact").p_value == pytest.approx(oracles.ranksum_exact(a, b), abs=1e-12)


@settings(max_examples=60)
@given(a=st.lists(st.floats(-5, 5), min_size=2, max_size=30), b=st.lists(st.floats(-5, 5), min_size=2, max_size=30))
def test_ranksum_normal_matches_scipy(a, b):
    r = wilcoxon_rank_sum(a, b, method="normal")
    if len(set(a + b)) < 2:
        assert r.p_value == 1.0
        return
    ref = scipy.stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("n1,n2", [(n1, n2) for n1 in (4, 5, 6) for n2 in (4, 5, 6) if n1 <= n2])
def test_normal_approximation_close_to_exact_without_ties(n1, n2):
    # every split of the ranks 1..n1+n2 gives one rank sum; check each observable value once
    worst = 0.0
    seen = set()
    for combo in itertools.combinations(range(1, n1 + n2 + 1), n1):
        if sum(combo) in seen:
            continue
        seen.add(sum(combo))
        a = list(combo)
        b = [v for v in range(1, n1 + n2 + 1) if v not in combo]
        worst = max(worst, abs(wilcoxon_rank_sum(a, b, method="normal").p_value
                               - wilcoxon_rank_sum(a, b, method="exact").p_value))
    assert worst <= 0.02, f"max |normal - exact| = {worst:.4f}"


# ------------------------------------------------------------- regression


def test_ols_exact_fit():
    rng = np.random.default_rng(2)
    X = rng.integers(1, 8, size=(12, 2)).astype(float)
    res = multiple_linear_regression(X, 2 * X[:, 0] + 3, names=("alignment", "fidelity"))
    assert res.coef == pytest.approx([3, 2, 0], abs=1e-12)
    assert np.abs(res.residuals).max() < 1e-12
    assert res.df == 9
    flat = multiple_linear_regression(X, np.full(12, 1.5))
    assert flat.coef[1:] == pytest.approx([0, 0], abs=1e-12)


def test_ols_errors():
    with pytest.raises(DataError):
        multiple_linear_regression([[1, 2], [2, 3], [3, 4]], [1, 2, 3])
    with pytest.raises(DataError):
        multiple_linear_regression([[1, 2], [2, 4], [3, 6], [4, 8], [5, 10]], [1, 2, 3, 4, 6])


@settings(max_examples=30)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(5, 40))
def test_ols_matches_normal_equations_and_orthogonality(seed, n):
    rng = np.random.default_rng(seed)
    X = rng.integers(1, 8, size=(n, 2)).astype(float)
    y = rng.normal(size=n)
    try:
        res = multiple_linear_regression(X, y)
    except DataError:
        return
    ref = oracles.ols_normal_equations(X.tolist(), y.tolist())
    for got, want in zip(res.coef, ref):
        assert abs(got - want) <= 1e-9 * max(1.0, abs(want))
    design = np.column_stack([np.ones(n), X])
    scale = np.linalg.norm(design, axis=0) * max(np.linalg.norm(y), 1.0)
    assert np.all(np.abs(design.T @ res.residuals) <= 1e-9 * scale)


def test_ols_p_values_against_scipy():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(30, 2))
    y = 0.4 * X[:, 0] + rng.normal(size=30)
    res = multiple_linear_regression(X, y)
    design = np.column_stack([np.ones(30), X])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    cov = resid @ resid / 27 * np.linalg.inv(design.T @ design)
    t = coef / np.sqrt(np.diag(cov))
    assert res.p == pytest.approx(2 * scipy.stats.t.sf(np.abs(t), 27), rel=1e-8)


# ---------------------------------------------------------------- report


def test_extremity_and_bonferroni():
    assert [extremity(r) for r in (4, 1, 7)] == [0, 3, 3]
    with pytest.raises(DataError):
        extremity(8)
    assert bonferroni_threshold(0.05, 96) == pytest.approx(0.000520833333, abs=1e-12)
    assert bonferroni_threshold(0.05, 1) == 0.05
    assert bonferroni_threshold(0.01, 2) == 0.005


def _noise(seed, n=150):
    rng = np.random.default_rng(seed)
    alpha = rng.gamma(1.0, 0.5, size=(n, 12))
    ann = [AnnotationRecord(f"i{i}", int(rng.integers(1, 8)), 4, 4,
                            frozenset(e for e in EMOTIONS if rng.random() < 0.25), 1) for i in range(n)]
    return alpha, ann


def test_report_always_has_96_rows():
    alpha, ann = _noise(0)
    assert len(correlation_report(alpha, ann)) == 96
    # one image only: every cell is reported as insufficient, none fail the run
    rows = correlation_report(alpha[:1], ann[:1])
    assert len(rows) == 96
    assert all(math.isnan(r.p_value) and r.note.startswith("insufficient data") for r in rows)


@pytest.fixture(scope="module")
def noise_reports():
    return [correlation_report(*_noise(seed)) for seed in range(300)]


def test_pure_noise_pass_rate(noise_reports):
    # Monte Carlo estimate of the expected pass count, judged with a 3-sigma one-sided bound
    passes = np.array([sum(r.passes_bonferroni for r in rep) for rep in noise_reports], dtype=float)
    budget = 96 * bonferroni_threshold(0.05, 96)
    assert passes.mean() <= budget + 3 * math.sqrt(budget / passes.size)


def test_pure_noise_p_values_are_calibrated(noise_reports):
    p = np.array([r.p_value for rep in noise_reports for r in rep])
    rate = np.mean(p < 0.05)
    assert abs(rate - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / p.size)


@pytest.mark.parametrize("seed", range(5))
def test_planted_signal_only_au4_passes(seed):
    ds = build_dataset(generate_synthetic_cohort(SynthSpec(n_participants=15), seed))
    rows = correlation_report(ds.alpha, ds.annotations)
    rating = {r.au: r for r in rows if r.test == "rating_spearman"}
    assert rating[4].passes_bonferroni and rating[4].statistic < 0
    assert not any(r.passes_bonferroni for r in rows if r.au != 4)


def test_aspects_regression_rows():
    rng = np.random.default_rng(1)
    al = rng.integers(1, 8, 60)
    fi = rng.integers(1, 8, 60)
    scores = {"m": 0.8 * al + rng.normal(size=60), "flat": np.ones(60)}
    rows = {r["model"]: r for r in aspects_regression(al, fi, scores)}
    assert rows["m"]["p_alignment"] < 1e-6 < rows["m"]["p_fidelity"]
    assert rows["flat"]["note"] == "degenerate scores"
