"""Kernel backend selection.

The hot inner loops (Siddon ray tracing, Poisson inversion sampling) exist in
two implementations: numba ``@njit`` kernels and a pure-numpy fallback.  The
active backend is resolved once at import time from the ``SPARSECT_BACKEND``
environment variable:

* ``auto`` (default): numba when importable, else numpy
* ``numba``: require numba, raise if missing
* ``numpy``: force the pure-numpy path

``benchmarks/bench_backends.py`` compares the two.
"""

import os
import warnings

_requested = os.environ.get("SPARSECT_BACKEND", "auto").lower()
if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"SPARSECT_BACKEND must be one of auto/numba/numpy, got {_requested!r}"
    )

if _requested == "numpy":
    HAVE_NUMBA = False
else:
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:
        if _requested == "numba":
            raise RuntimeError("SPARSECT_BACKEND=numba but numba is not importable")
        HAVE_NUMBA = False
        warnings.warn(
            "numba not available; falling back to pure-numpy kernels "
            "(set SPARSECT_BACKEND=numpy to silence)",
            stacklevel=2,
        )

BACKEND = "numba" if HAVE_NUMBA else "numpy"

if HAVE_NUMBA:
    from . import _kernels_numba as kernels
else:
    from . import _kernels_numpy as kernels

__all__ = ["BACKEND", "HAVE_NUMBA", "kernels"]
