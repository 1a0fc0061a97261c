"""Backend switch for the compiled kernels.

Set ``AUPREF_NUMBA=0`` before import to force the pure-numpy path. Numba is
also skipped silently when it cannot be imported.
"""

import os

_flag = os.environ.get("AUPREF_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    if not _requested:
        raise ImportError("numba disabled by AUPREF_NUMBA")
    from numba import njit as _njit

    NUMBA_ENABLED = True
except ImportError:
    _njit = None
    NUMBA_ENABLED = False


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it unchanged."""
    if _njit is None:
        return func
    return _njit(cache=True, nogil=True)(func)
