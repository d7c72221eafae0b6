"""Numba switch for the hot kernels.

Set ``SYNCLOC_DISABLE_NUMBA=1`` to run every kernel as plain numpy/Python.
The flag is read once at import time.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("SYNCLOC_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_ENABLED = numba is not None and not DISABLED_BY_ENV


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is active, else return it unchanged."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn
