"""Backend selection for the hot kernels.

Set ``SEMICLASSICA_NUMBA=0`` to force the pure-numpy path. Numba is used
by default whenever it can be imported.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SEMICLASSICA_NUMBA", "1").lower() not in (
    "0",
    "false",
    "no",
    "off",
)


def njit(func):
    """Compile ``func`` in nopython mode, releasing the GIL.

    Without numba the plain function is returned, so callers can always
    invoke the decorated name.
    """
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True, error_model="numpy")(func)


def backend_name(use_numba=None):
    if use_numba is None:
        use_numba = USE_NUMBA
    return "numba" if (use_numba and HAVE_NUMBA) else "numpy"
