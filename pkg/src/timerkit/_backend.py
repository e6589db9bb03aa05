"""Backend selection: compiled extension core with pure-python fallback.

The hot kernels (complex special functions, propagator integrand grids and
the Monte Carlo steppers) exist twice: as a Cython extension
(``timerkit._core``) and as a numpy implementation (``timerkit._purepy``).
The compiled core is used when importable; set ``TIMERKIT_BACKEND=python``
to force the fallback or ``TIMERKIT_BACKEND=compiled`` to require the
extension.  ``benchmarks/bench_backends.py`` compares the two.
"""

import os

_requested = os.environ.get("TIMERKIT_BACKEND", "").strip().lower()

if _requested in ("python", "py", "pure"):
    from . import _purepy as impl
elif _requested in ("c", "compiled", "core"):
    from . import _core as impl  # noqa: F401  (ImportError is intentional here)
else:
    try:
        from . import _core as impl  # type: ignore[no-redef]
    except ImportError:
        from . import _purepy as impl  # type: ignore[no-redef]

BACKEND = impl.NAME


def backend_name():
    """Name of the active numerical backend ("compiled" or "python")."""
    return BACKEND
