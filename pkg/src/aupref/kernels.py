"""Hot numeric loops, each in a compiled-loop and a vectorised-numpy form.

The public names (``window_means``, ``threshold_counts``, ``sign_counts``,
``rank_sum_counts``) point at the numba versions unless ``AUPREF_NUMBA=0``.
Both forms do the same floating point operations in the same order, so their
outputs are bitwise identical; the test suite checks this.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, njit

__all__ = [
    "BACKEND",
    "window_means",
    "threshold_counts",
    "sign_counts",
    "rank_sum_counts",
    "numba_impl",
    "numpy_impl",
]


# ---------------------------------------------------------------- loop form


@njit
def _window_means_loop(values, ok, window):
    n, m = values.shape
    out = np.full((n, m), np.nan)
    for j in range(m):
        for k in range(n - window + 1):
            acc = 0.0
            good = True
            for t in range(window):
                v = values[k + t, j]
                if not ok[k + t] or v != v:
                    good = False
                    break
                acc += v
            if good:
                out[k, j] = acc / window
    return out


@njit
def _threshold_counts_loop(diff, thresholds):
    nd = thresholds.shape[0]
    correct = np.zeros(nd, dtype=np.int64)
    incorrect = np.zeros(nd, dtype=np.int64)
    for i in range(diff.shape[0]):
        x = diff[i]
        if x > 0.0:
            for t in range(nd):
                if x >= thresholds[t]:
                    correct[t] += 1
        elif x < 0.0:
            y = -x
            for t in range(nd):
                if y >= thresholds[t]:
                    incorrect[t] += 1
    return correct, incorrect


@njit
def _sign_counts_loop(diffs):
    g, p = diffs.shape
    correct = np.zeros(g, dtype=np.int64)
    incorrect = np.zeros(g, dtype=np.int64)
    for r in range(g):
        c = 0
        n = 0
        for i in range(p):
            x = diffs[r, i]
            c += x > 0.0
            n += x < 0.0
        correct[r] = c
        incorrect[r] = n
    return correct, incorrect


@njit
def _rank_sum_counts_loop(doubled_ranks, n_pick):
    # counts[s] = number of size-n_pick subsets whose doubled ranks sum to s
    total = 0
    for r in doubled_ranks:
        total += r
    table = np.zeros((n_pick + 1, total + 1))
    table[0, 0] = 1.0
    seen = 0
    for r in doubled_ranks:
        seen += r
        for size in range(n_pick, 0, -1):
            for s in range(seen, r - 1, -1):
                table[size, s] += table[size - 1, s - r]
    return table[n_pick].copy()


# -------------------------------------------------------------- numpy form


def _window_means_vec(values, ok, window):
    values = np.asarray(values, dtype=np.float64)
    n, m = values.shape
    out = np.full((n, m), np.nan)
    n_win = n - window + 1
    if n_win <= 0:
        return out
    usable = ok[:, None] & ~np.isnan(values)
    vals = np.where(usable, values, 0.0)
    acc = np.zeros((n_win, m))
    for t in range(window):
        acc = acc + vals[t:t + n_win]
    bad = np.concatenate([np.zeros((1, m), dtype=np.int64),
                          np.cumsum(~usable, axis=0, dtype=np.int64)])
    good = (bad[window:window + n_win] - bad[:n_win]) == 0
    out[:n_win] = np.where(good, acc / window, np.nan)
    return out


def _threshold_counts_vec(diff, thresholds):
    diff = np.asarray(diff, dtype=np.float64)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    pos = diff > 0.0
    neg = diff < 0.0
    ge = diff[None, :] >= thresholds[:, None]
    le = (-diff)[None, :] >= thresholds[:, None]
    correct = np.count_nonzero(ge & pos[None, :], axis=1).astype(np.int64)
    incorrect = np.count_nonzero(le & neg[None, :], axis=1).astype(np.int64)
    return correct, incorrect


def _sign_counts_vec(diffs):
    diffs = np.asarray(diffs, dtype=np.float64)
    correct = np.count_nonzero(diffs > 0.0, axis=1).astype(np.int64)
    incorrect = np.count_nonzero(diffs < 0.0, axis=1).astype(np.int64)
    return correct, incorrect


def _rank_sum_counts_vec(doubled_ranks, n_pick):
    doubled_ranks = np.asarray(doubled_ranks, dtype=np.int64)
    total = int(doubled_ranks.sum())
    table = np.zeros((n_pick + 1, total + 1))
    table[0, 0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        # rows are updated from the previous row as it was before this item
        table[1:, r:] += table[:-1, :-r].copy()
    return table[n_pick].copy()


class _Backend:
    def __init__(self, name, window_means, threshold_counts, sign_counts, rank_sum_counts):
        self.name = name
        self.window_means = window_means
        self.threshold_counts = threshold_counts
        self.sign_counts = sign_counts
        self.rank_sum_counts = rank_sum_counts


def _wrap_window_means(fn):
    def window_means(values, ok, window):
        """Trailing-window means per column; NaN where any frame in the window is unusable.

        ``values`` is (n_frames, n_columns); ``ok`` flags valid frames. A frame
        is also unusable for a column whose value is NaN. Row ``k`` holds the
        mean of rows ``k .. k+window-1`` summed in ascending order.
        """
        if window < 1:
            raise ValueError(f"window length must be >= 1, got {window}")
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.ndim == 1:
            return fn(values[:, None], np.asarray(ok, dtype=np.bool_), int(window))[:, 0]
        return fn(values, np.ascontiguousarray(ok, dtype=np.bool_), int(window))
    return window_means


def _wrap_threshold_counts(fn):
    def threshold_counts(diff, thresholds):
        """Count correct/incorrect thresholded predictions for each threshold.

        ``diff`` holds ``score(preferred) - score(other)`` per pair. A pair is
        correct at threshold d when ``diff >= d`` and ``diff > 0``, incorrect
        when ``-diff >= d`` and ``diff < 0``; NaN and exact ties abstain.
        """
        return fn(np.ascontiguousarray(diff, dtype=np.float64),
                  np.ascontiguousarray(thresholds, dtype=np.float64))
    return threshold_counts


def _wrap_sign_counts(fn):
    def sign_counts(diffs):
        """Forced-choice counts per row of a (candidates, pairs) difference matrix."""
        diffs = np.ascontiguousarray(diffs, dtype=np.float64)
        if diffs.ndim == 1:
            diffs = diffs[None, :]
        return fn(diffs)
    return sign_counts


def _wrap_rank_sum_counts(fn):
    def rank_sum_counts(doubled_ranks, n_pick):
        """Number of ways to draw ``n_pick`` items with each total of doubled ranks."""
        return fn(np.ascontiguousarray(doubled_ranks, dtype=np.int64), int(n_pick))
    return rank_sum_counts


numba_impl = _Backend(
    "numba" if NUMBA_ENABLED else "python-loop",
    _wrap_window_means(_window_means_loop),
    _wrap_threshold_counts(_threshold_counts_loop),
    _wrap_sign_counts(_sign_counts_loop),
    _wrap_rank_sum_counts(_rank_sum_counts_loop),
)

numpy_impl = _Backend(
    "numpy",
    _wrap_window_means(_window_means_vec),
    _wrap_threshold_counts(_threshold_counts_vec),
    _wrap_sign_counts(_sign_counts_vec),
    _wrap_rank_sum_counts(_rank_sum_counts_vec),
)

_active = numba_impl if NUMBA_ENABLED else numpy_impl

BACKEND = _active.name
window_means = _active.window_means
threshold_counts = _active.threshold_counts
sign_counts = _active.sign_counts
rank_sum_counts = _active.rank_sum_counts
