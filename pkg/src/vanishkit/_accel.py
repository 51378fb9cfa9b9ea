"""Backend selection for the hot kernels.

Every kernel in :mod:`vanishkit.kernels` exists twice: a numba ``@njit`` loop
version and a vectorized numpy version. ``VANISHKIT_NUMBA=0`` in the
environment forces the numpy path; the numba path is also skipped when numba
cannot be imported.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_enabled():
    value = os.environ.get("VANISHKIT_NUMBA", "1").strip().lower()
    return value not in ("0", "false", "no", "off")


USE_NUMBA = HAVE_NUMBA and _env_enabled()


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def set_backend(name):
    """Switch the process-wide backend to ``"numba"`` or ``"numpy"``."""
    global USE_NUMBA
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not installed")
        USE_NUMBA = True
    elif name == "numpy":
        USE_NUMBA = False
    else:
        raise ValueError(f"unknown backend {name!r}")


def backend():
    return "numba" if USE_NUMBA else "numpy"
