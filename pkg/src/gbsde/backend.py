"""Kernel backend selection.

Hot numerical loops (the finite-difference march, the lattice backward
recursion, path generation) exist in two variants: numba ``@njit``
kernels and pure-numpy vectorised fallbacks.  The active variant is
chosen once at import time from the ``GBSDE_BACKEND`` environment
variable:

    GBSDE_BACKEND=auto    use numba when importable (default)
    GBSDE_BACKEND=numba   require numba, fail otherwise
    GBSDE_BACKEND=numpy   force the pure-numpy fallback

Both variants implement the same arithmetic; results agree to rounding
differences from summation order only.
"""

import os

_choice = os.environ.get("GBSDE_BACKEND", "auto").strip().lower()

if _choice in ("", "auto"):
    try:
        import numba  # noqa: F401

        USE_NUMBA = True
    except ImportError:
        USE_NUMBA = False
elif _choice == "numba":
    import numba  # noqa: F401

    USE_NUMBA = True
elif _choice in ("numpy", "python"):
    USE_NUMBA = False
else:
    raise RuntimeError(
        f"GBSDE_BACKEND={_choice!r} not understood (use auto, numba, or numpy)"
    )


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n: int) -> None:
    """Cap the numba thread pool; a no-op on the numpy backend.

    Kernels in this package are single-threaded by design (deterministic
    reductions), so this only bounds incidental numba parallelism.
    """
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if USE_NUMBA:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
