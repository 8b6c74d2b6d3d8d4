"""Kernel backend selection.

``ELASTOWAVE_BACKEND=numpy`` forces the pure numpy/scipy path even when numba
is importable; ``ELASTOWAVE_THREADS`` caps the numba worker count.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

_requested = os.environ.get("ELASTOWAVE_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"ELASTOWAVE_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

HAVE_NUMBA = numba is not None
DEFAULT_BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def worker_count():
    """Worker count from ``ELASTOWAVE_THREADS`` (positive integer), else None."""
    raw = os.environ.get("ELASTOWAVE_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"ELASTOWAVE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"ELASTOWAVE_THREADS must be a positive integer, got {raw!r}")
    return n


def configure_threads():
    n = worker_count()
    if n is not None and HAVE_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n
