"""Kernel backend selection.

Set ``LPPCOAL_BACKEND=numpy`` to force the vectorized numpy kernels. The
default is ``numba`` when it imports cleanly.
"""

from __future__ import annotations

import os

ENV_FLAG = "LPPCOAL_BACKEND"


def requested_backend() -> str:
    value = os.environ.get(ENV_FLAG, "numba").strip().lower()
    if value not in ("numba", "numpy"):
        raise ValueError(f"{ENV_FLAG} must be 'numba' or 'numpy', got {value!r}")
    return value


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def active_backend() -> str:
    want = requested_backend()
    if want == "numba" and not numba_available():
        return "numpy"
    return want
