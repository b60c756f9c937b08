"""Backend selection for the simulation kernels.

Set ``CITYLIGHT_NUMBA=0`` to force the pure numpy path (useful when numba is
unavailable or when debugging). Any other value, or leaving it unset, uses
numba when it can be imported.
"""
from __future__ import annotations

import os

USE_NUMBA = os.environ.get("CITYLIGHT_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - depends on environment
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


BACKEND = "numba" if USE_NUMBA else "numpy"
