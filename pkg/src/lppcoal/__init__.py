"""Exponential last-passage percolation with stationary boundaries, queueing
couplings and Monte Carlo coalescence experiments."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
