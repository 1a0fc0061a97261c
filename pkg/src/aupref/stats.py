"""Rank statistics, rank-sum tests, OLS with t-tests, and the AU association report.

Distribution functions are computed here rather than pulled from a statistics
package: the normal CDF via ``math.erfc`` and the Student t CDF via a
continued-fraction evaluation of the regularised incomplete beta function.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .data_model import AU_IDS, EMOTIONS, AnnotationRecord
from .errors import DataError

_CF_MAX_ITER = 500
_CF_EPS = 1e-16
_CF_TINY = 1e-300

EXACT_SPEARMAN_MAX_N = 8
EXACT_RANKSUM_MAX_SMALL = 6
# cap on (smaller sample) * N * (sum of doubled ranks) for the exact rank-sum table
EXACT_RANKSUM_MAX_WORK = 5e7


# ------------------------------------------------------------ distributions


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_two_sided_p(z: float) -> float:
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


def _beta_cf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError("betainc needs a > 0 and b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t * t)))


def t_cdf(t: float, df: float) -> float:
    tail = 0.5 * t_two_sided_p(t, df)
    return 1.0 - tail if t > 0 else tail


# -------------------------------------------------------------------- ranks


def rankdata(x) -> np.ndarray:
    """1-based ranks with ties given their average rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(x.size)
    i = 0
    while i < x.size:
        j = i + 1
        while j < x.size and xs[j] == xs[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)
        i = j
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    return float(np.dot(da, db) / math.sqrt(np.dot(da, da) * np.dot(db, db)))


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    p_value: float
    n: int
    method: str


def spearman(x, y, method: str = "auto") -> SpearmanResult:
    """Spearman rank correlation with a two-sided p-value.

    ``method="t"`` uses the Student t approximation with n-2 degrees of
    freedom; ``method="exact"`` enumerates every permutation (n <= 8);
    ``"auto"`` is exact up to that size and t beyond it.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"spearman needs two 1-d samples of equal length, got {x.shape} and {y.shape}")
    n = x.size
    if n < 3:
        raise DataError(f"spearman needs at least 3 observations, got {n}")
    rx, ry = rankdata(x), rankdata(y)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise DataError("zero rank variance")
    rho = max(-1.0, min(1.0, _pearson(rx, ry)))
    if method == "auto":
        method = "exact" if n <= EXACT_SPEARMAN_MAX_N else "t"
    if method == "t":
        if abs(rho) == 1.0:
            p = 0.0
        else:
            t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
            p = t_two_sided_p(t, n - 2)
    elif method == "exact":
        if n > EXACT_SPEARMAN_MAX_N:
            raise ValueError(f"exact spearman is limited to n <= {EXACT_SPEARMAN_MAX_N}")
        perms = np.array(list(itertools.permutations(range(n))))
        ys = ry[perms]
        dx = rx - rx.mean()
        dy = ys - ys.mean(axis=1, keepdims=True)
        rhos = (dy @ dx) / np.sqrt(np.dot(dx, dx) * np.einsum("ij,ij->i", dy, dy))
        p = float(np.count_nonzero(np.abs(rhos) >= abs(rho) - 1e-12)) / len(perms)
    else:
        raise ValueError(f"unknown spearman method {method!r}")
    return SpearmanResult(rho, p, n, method)


@dataclass(frozen=True)
class RankSumResult:
    z: float
    p_value: float
    rank_sum: float
    n1: int
    n2: int
    method: str


def _exact_rank_sum_p(ranks: np.ndarray, pick: np.ndarray) -> float:
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    n_pick = int(pick.sum())
    counts = kernels.rank_sum_counts(doubled, n_pick)
    centre = n_pick * (ranks.size + 1)  # twice the expected rank sum
    observed = abs(int(doubled[pick].sum()) - centre)
    sums = np.arange(counts.size)
    extreme = np.abs(sums - centre) >= observed
    return min(1.0, float(counts[extreme].sum() / counts.sum()))


def wilcoxon_rank_sum(a, b, method: str = "auto") -> RankSumResult:
    """Two-sample Wilcoxon rank-sum test.

    ``z`` comes from the tie-corrected normal approximation with continuity
    correction, positive when ``a`` tends to rank higher. The p-value is
    two-sided: from that approximation (``"normal"``), from exact
    enumeration of rank assignments (``"exact"``), or exact when the smaller
    sample has at most 6 members and the table stays small (``"auto"``).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise DataError("rank-sum test needs two non-empty samples")
    n = n1 + n2
    ranks = rankdata(np.concatenate([a, b]))
    w = float(ranks[:n1].sum())
    expected = n1 * (n + 1) / 2.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts.astype(np.float64) ** 3 - tie_counts))
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    dev = w - expected
    if var <= 0 or dev == 0:
        z = 0.0
    else:
        z = math.copysign(max(abs(dev) - 0.5, 0.0), dev) / math.sqrt(var)

    if method == "auto":
        small = min(n1, n2)
        work = small * n * float(np.rint(2 * ranks).sum())
        method_used = "exact" if small <= EXACT_RANKSUM_MAX_SMALL and work <= EXACT_RANKSUM_MAX_WORK else "normal"
    elif method in ("normal", "exact"):
        method_used = method
    else:
        raise ValueError(f"unknown rank-sum method {method!r}")

    if method_used == "normal":
        p = 1.0 if var <= 0 else normal_two_sided_p(z)
    else:
        # enumerate over the smaller group; the two-sided tail is symmetric
        pick = np.zeros(n, dtype=bool)
        if n1 <= n2:
            pick[:n1] = True
        else:
            pick[n1:] = True
        p = _exact_rank_sum_p(ranks, pick)
    return RankSumResult(z, p, w, n1, n2, method_used)


# ----------------------------------------------------------- regression


@dataclass(frozen=True)
class RegressionResult:
    names: tuple[str, ...]
    coef: np.ndarray
    stderr: np.ndarray
    t: np.ndarray
    p: np.ndarray
    df: int
    residuals: np.ndarray

    def row(self, name: str) -> dict:
        i = self.names.index(name)
        return {"coef": float(self.coef[i]), "stderr": float(self.stderr[i]),
                "t": float(self.t[i]), "p": float(self.p[i])}


def multiple_linear_regression(X, y, names=None) -> RegressionResult:
    """Ordinary least squares with an intercept and two-sided t-tests per coefficient.

    Coefficients are returned intercept first.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    n, k = X.shape
    if y.shape != (n,):
        raise DataError(f"y must have {n} entries, got shape {y.shape}")
    p = k + 1
    if n <= p:
        raise DataError(f"need more than {p} observations for {k} predictors, got {n}")
    design = np.column_stack([np.ones(n), X])
    if np.linalg.matrix_rank(design) < p:
        raise DataError("rank-deficient design matrix")
    q, r = np.linalg.qr(design)
    coef = np.linalg.solve(r, q.T @ y)
    resid = y - design @ coef
    df = n - p
    sigma2 = float(resid @ resid) / df
    r_inv = np.linalg.inv(r)
    se = np.sqrt(sigma2 * np.sum(r_inv * r_inv, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    pvals = np.array([t_two_sided_p(float(v), df) for v in t])
    if names is None:
        names = tuple(f"x{i}" for i in range(1, k + 1))
    return RegressionResult(("intercept",) + tuple(names), coef, se, t, pvals, df, resid)


# ------------------------------------------------------------- the report


def extremity(rating: int) -> int:
    if isinstance(rating, bool) or int(rating) != rating or not 1 <= rating <= 7:
        raise DataError(f"rating must be an integer in 1..7, got {rating!r}")
    return abs(int(rating) - 4)


def bonferroni_threshold(alpha: float, n_tests: int) -> float:
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n_tests < 1:
        raise ValueError(f"n_tests must be >= 1, got {n_tests}")
    return alpha / n_tests


@dataclass(frozen=True)
class TestReport:
    au: int
    test: str
    statistic: float
    p_value: float
    n: int
    n2: int | None
    passes_bonferroni: bool
    note: str = ""

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return asdict(self)


REPORT_TESTS = ("rating_spearman", "extremity_spearman") + tuple(f"emotion:{e}" for e in EMOTIONS)


def correlation_report(alpha: np.ndarray, annotations: list[AnnotationRecord],
                       family_alpha: float = 0.05) -> list[TestReport]:
    """Every AU against overall rating, rating extremity and each reported emotion.

    Returns 12 x 8 = 96 rows, each flagged against the Bonferroni threshold
    for the whole family. Cells without enough data get NaN statistics and a note.
    """
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1, len(AU_IDS))
    if alpha.shape[0] != len(annotations):
        raise DataError("one annotation per activation row is required")
    threshold = bonferroni_threshold(family_alpha, len(AU_IDS) * len(REPORT_TESTS))
    overall = np.array([a.overall for a in annotations], dtype=np.float64)
    extreme = np.array([extremity(a.overall) for a in annotations], dtype=np.float64)
    flags = {e: np.array([e in a.emotions for a in annotations], dtype=bool) for e in EMOTIONS}
    rows = []
    for j, au in enumerate(AU_IDS):
        x = alpha[:, j]
        for test in REPORT_TESTS:
            try:
                if test == "rating_spearman":
                    r = spearman(overall, x)
                    stat, p, n, n2 = r.rho, r.p_value, r.n, None
                elif test == "extremity_spearman":
                    r = spearman(extreme, x)
                    stat, p, n, n2 = r.rho, r.p_value, r.n, None
                else:
                    mask = flags[test.split(":", 1)[1]]
                    r = wilcoxon_rank_sum(x[mask], x[~mask], method="normal")
                    stat, p, n, n2 = r.z, r.p_value, r.n1, r.n2
                rows.append(TestReport(au, test, stat, p, n, n2, bool(p < threshold)))
            except DataError as exc:
                rows.append(TestReport(au, test, math.nan, math.nan, int(x.size), None, False,
                                       f"insufficient data: {exc}"))
    return rows


def aspects_regression(alignment, fidelity, scores: dict[str, np.ndarray]) -> list[dict]:
    """Regress each standardised score on alignment and fidelity ratings."""
    X = np.column_stack([np.asarray(alignment, dtype=np.float64),
                         np.asarray(fidelity, dtype=np.float64)])
    out = []
    for name, col in scores.items():
        col = np.asarray(col, dtype=np.float64)
        ok = ~np.isnan(col)
        y = col[ok]
        std = float(np.std(y, ddof=1)) if y.size > 1 else 0.0
        if not std > 0:
            out.append({"model": name, "n": int(ok.sum()), "note": "degenerate scores"})
            continue
        try:
            res = multiple_linear_regression(X[ok], (y - y.mean()) / std, names=("alignment", "fidelity"))
        except DataError as exc:
            out.append({"model": name, "n": int(ok.sum()), "note": str(exc)})
            continue
        a, f = res.row("alignment"), res.row("fidelity")
        out.append({"model": name, "n": int(ok.sum()),
                    "coef_alignment": a["coef"], "p_alignment": a["p"],
                    "coef_fidelity": f["coef"], "p_fidelity": f["p"], "note": ""})
    return out
