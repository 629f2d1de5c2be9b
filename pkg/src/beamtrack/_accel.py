"""Optional numba acceleration.

Hot kernels are written once as plain Python loops and compiled with
``numba.njit`` when numba is importable and ``BEAMTRACK_DISABLE_NUMBA`` is
unset (or ``0``).  Every kernel also ships a vectorized numpy twin; the
dispatcher in :mod:`beamtrack.kernels` picks one of the two at import time.
"""

import os

try:
    import numba
except ModuleNotFoundError:  # pragma: no cover
    numba = None

_flag = os.environ.get("BEAMTRACK_DISABLE_NUMBA", "0").strip().lower()
USE_NUMBA = numba is not None and _flag in ("", "0", "false", "no")


def njit(f=None, **options):
    """``numba.njit`` if available, identity otherwise."""
    options.setdefault("cache", True)
    if numba is None:
        if f is None:
            return lambda g: g
        return f
    if f is None:
        return lambda g: numba.njit(g, **options)
    return numba.njit(f, **options)
