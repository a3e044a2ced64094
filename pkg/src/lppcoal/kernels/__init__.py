"""Hot kernels with a backend chosen once at import (see ``_backend``)."""

from __future__ import annotations

import importlib

from .._backend import active_backend

BACKEND = active_backend()

_impl = importlib.import_module(f"{__name__}.{BACKEND}_impl")

E1, E2, START, NONE = _impl.E1, _impl.E2, _impl.START, _impl.NONE

uniform_seq = _impl.uniform_seq
uniform_block = _impl.uniform_block
fill_lpp = _impl.fill_lpp
fill_lpp_labeled = _impl.fill_lpp_labeled
backtrack = _impl.backtrack
propagate_labels = _impl.propagate_labels
propagate_any = _impl.propagate_any
coalescence_levels = _impl.coalescence_levels
order_violations = _impl.order_violations
lindley = _impl.lindley
lindley_final = _impl.lindley_final
running_sup = _impl.running_sup


def load(name: str):
    """Return the kernel module for ``name`` ('numba' or 'numpy')."""
    return importlib.import_module(f"{__name__}.{name}_impl")
