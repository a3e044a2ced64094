"""Stationary last-passage models, exit points and the comparison check.

Boundary weights come from per-index uniforms shared by all densities of a
trial: ``I = -ln(U)/(1-rho)`` and ``J = -ln(V)/rho``. This monotone coupling
keeps each model's marginal law exact while making ``I`` increase and ``J``
decrease in ``rho`` on every realization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .environment import DomainError, ParameterError, RngStream, Site, WeightField
from .lpp import (E1, E2, START, GeodesicPath, InitialCondition, PassageTable,
                  fill_table, passage_time)

_H0_OFFSET = 2**32  # counter of index l is l + offset, so negative l are fine


def check_density(rho: float) -> float:
    rho = float(rho)
    if not 0.0 < rho < 1.0:
        raise ParameterError(f"density must lie in (0, 1), got {rho}")
    return rho


def characteristic_direction(rho: float) -> tuple[float, float]:
    rho = check_density(rho)
    a, b = (1.0 - rho) ** 2, rho ** 2
    return (a / (a + b), b / (a + b))


def density_of(xi: tuple[float, float]) -> float:
    x1, x2 = float(xi[0]), float(xi[1])
    if not (x1 > 0 and x2 > 0):
        raise ParameterError(f"direction components must be positive, got {xi}")
    return math.sqrt(x2) / (math.sqrt(x1) + math.sqrt(x2))


@dataclass(frozen=True)
class ExitPoint:
    value: int

    def __int__(self) -> int:
        return self.value


@dataclass(frozen=True)
class AxisBoundary:
    base: Site
    rho: float
    I: np.ndarray  # I[k-1] sits at base + k e1
    J: np.ndarray  # J[k-1] sits at base + k e2

    @property
    def extent(self) -> int:
        return len(self.I)


@dataclass(frozen=True)
class BackwardBoundary:
    apex: Site
    rho: float
    I: np.ndarray  # at apex - k e1
    J: np.ndarray  # at apex - k e2

    @property
    def extent(self) -> int:
        return len(self.I)


def _boundary_weights(stream: RngStream, rho: float, extent: int, tags: tuple[str, str]):
    rho = check_density(rho)
    if extent < 1:
        raise ParameterError("boundary extent must be >= 1")
    u = stream.derive(tags[0]).uniforms(1, extent)
    v = stream.derive(tags[1]).uniforms(1, extent)
    return -np.log(u) / (1.0 - rho), -np.log(v) / rho


def build_axis_boundary(stream: RngStream, rho: float, o: Site, extent: int) -> AxisBoundary:
    I, J = _boundary_weights(stream, rho, extent, ("I", "J"))
    return AxisBoundary((int(o[0]), int(o[1])), float(rho), I, J)


def build_backward_boundary(stream: RngStream, rho: float, o: Site, extent: int) -> BackwardBoundary:
    I, J = _boundary_weights(stream, rho, extent, ("I-hat", "J-hat"))
    return BackwardBoundary((int(o[0]), int(o[1])), float(rho), I, J)


def _stationary_arrays(w: np.ndarray, I: np.ndarray, J: np.ndarray):
    """Prescribe the corner and both axes of a quadrant block ``w``."""
    n1, n2 = w.shape
    if len(I) < n1 - 1 or len(J) < n2 - 1:
        raise DomainError("boundary extent too short for the requested region")
    values = np.empty(w.shape, dtype=np.float64)
    dirs = np.empty(w.shape, dtype=np.uint8)
    fixed = np.zeros(w.shape, dtype=np.bool_)
    exits = np.zeros(w.shape, dtype=np.int64)
    values[0, 0] = 0.0
    dirs[0, 0] = START
    values[1:, 0] = np.cumsum(I[: n1 - 1])
    dirs[1:, 0] = E1
    exits[1:, 0] = np.arange(1, n1)
    values[0, 1:] = np.cumsum(J[: n2 - 1])
    dirs[0, 1:] = E2
    exits[0, 1:] = -np.arange(1, n2)
    fixed[0, :] = True
    fixed[:, 0] = True
    return values, dirs, fixed, exits


def stationary_table(boundary: AxisBoundary, field: WeightField, hi: Site) -> PassageTable:
    """Stationary values on the quadrant block ``[base, hi]``."""
    o = boundary.base
    if hi[0] < o[0] or hi[1] < o[1]:
        raise DomainError(f"{hi} is not in the quadrant of {o}")
    w = field.block(o, hi)
    values, dirs, fixed, exits = _stationary_arrays(w, boundary.I, boundary.J)
    return fill_table("stationary", o, w, values, dirs, fixed, origin=o, exit_labels=exits)


def stationary_passage(boundary: AxisBoundary, field: WeightField, target: Site):
    """Return ``(table, ExitPoint)`` for the geodesic from the base to ``target``."""
    o = boundary.base
    if target[0] < o[0] or target[1] < o[1] or tuple(target) == tuple(o):
        raise DomainError(f"target {target} must lie in {o} + Z^2_{{>=0}} minus the base")
    table = stationary_table(boundary, field, target)
    return table, ExitPoint(table.exit(target))


def backward_stationary_passage(boundary: BackwardBoundary, field: WeightField, target: Site):
    """Down-left stationary LPP from the apex, solved on the point-reflected block."""
    o = boundary.apex
    if target[0] > o[0] or target[1] > o[1] or tuple(target) == tuple(o):
        raise DomainError(f"target {target} is not south-west of the apex {o}")
    w = np.ascontiguousarray(field.block(target, o)[::-1, ::-1])
    values, dirs, fixed, exits = _stationary_arrays(w, boundary.I, boundary.J)
    table = fill_table("stationary", (0, 0), w, values, dirs, fixed, exit_labels=exits)
    rel = (o[0] - target[0], o[1] - target[1])
    return table.value(rel), ExitPoint(table.exit(rel))


def build_antidiagonal_h0(stream: RngStream, rho: float, K: int,
                          sigma: Optional[float] = None) -> InitialCondition:
    """Random-walk profile on the line ``x1 + x2 = 0``.

    Without ``sigma``: X ~ Exp(1-rho), Y ~ Exp(rho), giving the stationary
    density-``rho`` profile. With ``sigma``: X, Y ~ Exp(1/2) scaled by
    ``sigma`` (``rho`` must then be 1/2). Both read the same uniforms, so
    ``sigma = 1`` reproduces the density-1/2 profile bit for bit.
    """
    rho = check_density(rho)
    if K < 1:
        raise ParameterError("range must be >= 1")
    if sigma is not None:
        if sigma < 0:
            raise ParameterError("sigma must be >= 0")
        if rho != 0.5:
            raise ParameterError("the sigma family is built on density 1/2")
    ls = np.arange(-K, K + 1)
    u = stream.derive("h0-X").uniforms(_H0_OFFSET - K, 2 * K + 1)
    v = stream.derive("h0-Y").uniforms(_H0_OFFSET - K, 2 * K + 1)
    inc = -np.log(u) / (1.0 - rho) + np.log(v) / rho
    if sigma is not None:
        inc = sigma * inc
    inc[ls == -K] = 0.0  # X_{-K} is never used
    return InitialCondition.from_increments(inc, K, sigma)


@dataclass(frozen=True)
class ComparisonReport:
    exit_p1: int
    exit_p2: int
    point_diff: float
    stationary_diff: float
    upper_precondition: bool  # Z(p1) >= 0
    upper_holds: Optional[bool]
    lower_precondition: bool  # Z(p2) <= 0
    lower_holds: Optional[bool]

    @property
    def precondition_held(self) -> bool:
        return self.upper_precondition or self.lower_precondition

    @property
    def inequality_held(self) -> bool:
        return self.upper_holds is not False and self.lower_holds is not False


def check_comparison(field: WeightField, boundary: AxisBoundary, p1: Site, p2: Site,
                     tol: float = 1e-9) -> ComparisonReport:
    """Evaluate both branches of the point-to-point vs stationary comparison.

    ``p1 ⪯ p2`` means p2 lies weakly below and to the right of p1. The
    inequality check allows ``tol`` times the passage-time scale for rounding.
    """
    if not (p1[0] <= p2[0] and p1[1] >= p2[1]):
        raise DomainError(f"{p1} does not precede {p2} in the down-right order")
    o = boundary.base
    hi = (max(p1[0], p2[0]), max(p1[1], p2[1]))
    point = passage_time(field, o, hi)
    stat = stationary_table(boundary, field, hi)
    d_pt = point.value(p2) - point.value(p1)
    d_st = stat.value(p2) - stat.value(p1)
    slack = tol * max(1.0, abs(point.value(p2)), abs(stat.value(p2)))
    z1, z2 = stat.exit(p1), stat.exit(p2)
    up = z1 >= 0
    low = z2 <= 0
    return ComparisonReport(
        z1, z2, d_pt, d_st, up, (d_pt <= d_st + slack) if up else None,
        low, (d_pt >= d_st - slack) if low else None)


def stationary_geodesic_split(path: GeodesicPath) -> tuple[np.ndarray, np.ndarray]:
    """Axis segment (from the base to the exit) and the bulk remainder."""
    return path.sites[: path.bulk_start], path.sites[path.bulk_start:]


def horizontal_exit(path: GeodesicPath, row: int, reference_x: Optional[int] = None) -> int:
    """Rightmost offset at which ``path`` visits the horizontal line ``x2 = row``.

    Offsets are measured from ``(reference_x, row)``; the default reference is
    the diagonal point ``(row, row)``.
    """
    ref = row if reference_x is None else reference_x
    on_row = path.sites[path.sites[:, 1] == row]
    if len(on_row) == 0:
        raise DomainError(f"path does not reach the line x2 = {row}")
    return int(on_row[:, 0].max()) - int(ref)
