"""Regions, path orders, coalescence points and event indicators.

Regions written as ``i*e4 + j*e3`` use integer ``i`` and ``j``, so the lattice
site is ``(i + j, i - j)``. Real thresholds such as ``sigma * N^{2/3} / 2``
are floored after a tiny tolerance for representation error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .environment import DomainError, ParameterError, Site
from .lpp import GeodesicPath, level

_EPS = 1e-9

KINDS = ("cylinder", "rset", "segment", "horizon")


class EmptyRegionWarning(UserWarning):
    pass


def _floor(x: float) -> int:
    return int(math.floor(x + _EPS))


def _ceil(x: float) -> int:
    return int(math.ceil(x - _EPS))


@dataclass(frozen=True)
class Region:
    kind: str
    sigma: float
    tau: float
    N: int

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ParameterError(f"unknown region kind {self.kind!r}")
        if self.sigma < 0 or self.N < 1:
            raise ParameterError("need sigma >= 0 and N >= 1")
        if not 0.0 <= self.tau <= 1.0:
            raise ParameterError("tau must lie in [0, 1]")

    @property
    def half_width(self) -> int:
        """Largest admissible ``|j|``."""
        return _floor(self.sigma * self.N ** (2.0 / 3.0) / 2.0)

    @property
    def level(self) -> int:
        """Antidiagonal level of a segment or horizon."""
        if self.kind == "segment":
            return 2 * _floor((1.0 - self.tau) * self.N)
        if self.kind == "horizon":
            return _floor(2.0 * self.tau * self.N)
        raise ParameterError(f"{self.kind} has no single level")


def cylinder(sigma: float, tau: float, N: int) -> Region:
    return Region("cylinder", sigma, tau, N)


def rset(sigma: float, tau: float, N: int) -> Region:
    return Region("rset", sigma, tau, N)


def segment(sigma: float, tau: float, N: int) -> Region:
    return Region("segment", sigma, tau, N)


def horizon(tau: float, N: int, sigma: float = 0.0) -> Region:
    """Level ``2 tau N``; ``sigma`` windows the enumeration to ``|x1 - x2| <= sigma N^{2/3}``."""
    return Region("horizon", sigma, tau, N)


def _e34(i: np.ndarray, j: np.ndarray) -> np.ndarray:
    return np.stack([i + j, i - j], axis=1).astype(np.int64)


def region_sites(region: Region) -> np.ndarray:
    """Every lattice site of the region, as an ``(n, 2)`` array."""
    N, J = region.N, region.half_width
    js = np.arange(-J, J + 1)
    if region.kind == "cylinder":
        ii = np.arange(_ceil((1.0 - region.tau) * N), N + 1)
        I, Jg = np.meshgrid(ii, js, indexing="ij")
        out = _e34(I.ravel(), Jg.ravel())
    elif region.kind == "rset":
        ii = np.arange(0, _floor(region.tau * N) + 1)
        I, Jg = np.meshgrid(ii, js, indexing="ij")
        keep = np.abs(Jg) < I
        out = _e34(I[keep], Jg[keep])
    elif region.kind == "segment":
        T = region.level // 2
        out = _e34(np.full(js.shape, T), js)
    else:
        lev = region.level
        w = _floor(region.sigma * N ** (2.0 / 3.0))
        x1 = np.arange(_ceil((lev - w) / 2), _floor((lev + w) / 2) + 1)
        out = np.stack([x1, lev - x1], axis=1).astype(np.int64)
    if len(out) == 0:
        warnings.warn(f"{region} contains no lattice sites", EmptyRegionWarning, stacklevel=2)
    return out


def region_count(region: Region) -> int:
    """Closed-form cardinality of :func:`region_sites`."""
    N, J = region.N, region.half_width
    if region.kind == "cylinder":
        return max(0, N - _ceil((1.0 - region.tau) * N) + 1) * (2 * J + 1)
    if region.kind == "rset":
        top = _floor(region.tau * N)
        low = min(top, J)
        return low * low + max(top - J, 0) * (2 * J + 1)
    if region.kind == "segment":
        return 2 * J + 1
    lev = region.level
    w = _floor(region.sigma * N ** (2.0 / 3.0))
    return max(0, _floor((lev + w) / 2) - _ceil((lev - w) / 2) + 1)


def rset_corners(region: Region, which: str = "top") -> np.ndarray:
    """Extreme start points of an R-set.

    ``top``: the two ends of the highest row, ``(I-J, I+J)`` and ``(I+J, I-J)``.
    ``bottom``: the two lowest sites with the widest offsets.
    ``four``: both pairs. ``edges``: the outermost site on each side of every row.
    """
    if region.kind != "rset":
        raise ParameterError("corners are defined for R-sets")
    top = _floor(region.tau * region.N)
    J = region.half_width
    if top < 1:
        return np.zeros((0, 2), dtype=np.int64)
    rows = np.arange(1, top + 1)
    reach = np.minimum(rows - 1, J)
    if which == "top":
        i, j = np.array([top, top]), np.array([-reach[-1], reach[-1]])
    elif which == "bottom":
        k = min(J, top - 1)
        i, j = np.array([k + 1, k + 1]), np.array([-k, k])
    elif which == "four":
        k = min(J, top - 1)
        i = np.array([k + 1, k + 1, top, top])
        j = np.array([-k, k, -reach[-1], reach[-1]])
    elif which == "edges":
        i = np.concatenate([rows, rows])
        j = np.concatenate([-reach, reach])
    else:
        raise ParameterError(f"unknown corner selection {which!r}")
    out = np.unique(_e34(i, j), axis=0)
    return out


# --- orders and coalescence -----------------------------------------------

def _sites(path) -> np.ndarray:
    if isinstance(path, GeodesicPath):
        return path.sites
    return np.asarray(path, dtype=np.int64).reshape(-1, 2)


def precedes(path1, path2) -> bool:
    """``path1 ⪯ path2``: on every antidiagonal both paths visit, path2's site
    lies weakly down-right of path1's (x1 no smaller).

    Up-right paths meet each antidiagonal once, so this is the ordering of
    their intersections with down-right paths, with shared stretches allowed.
    """
    A, B = _sites(path1), _sites(path2)
    if len(A) == 0 or len(B) == 0:
        return True
    la, lb = int(A[0].sum()), int(B[0].sum())
    lo, hi = max(la, lb), min(la + len(A), lb + len(B))
    if lo >= hi:
        return True
    return bool((B[lo - lb: hi - lb, 0] >= A[lo - la: hi - la, 0]).all())


@dataclass(frozen=True)
class CoalescencePoint:
    site: Optional[Site]
    trimmed: bool = False  # the raw suffix reached into a boundary portion

    @property
    def present(self) -> bool:
        return self.site is not None


def coalescence_point(path1, path2) -> CoalescencePoint:
    """Lowest site of the common suffix of two paths with a shared endpoint.

    Boundary portions (axis segments of stationary paths, the line start of
    line-to-point paths) are excluded: the point returned is the first common
    site carrying a bulk weight in both paths.
    """
    A, B = _sites(path1), _sites(path2)
    if tuple(A[-1]) != tuple(B[-1]):
        raise DomainError(f"paths end at {tuple(A[-1])} and {tuple(B[-1])}")
    n = min(len(A), len(B))
    eq = (A[::-1][:n] == B[::-1][:n]).all(axis=1)
    k = n if eq.all() else int(np.argmin(eq))
    ia, ib = len(A) - k, len(B) - k
    bulk_a = path1.bulk_start if isinstance(path1, GeodesicPath) else 0
    bulk_b = path2.bulk_start if isinstance(path2, GeodesicPath) else 0
    shift = max(bulk_a - ia, bulk_b - ib, 0)
    ia, ib = ia + shift, ib + shift
    if ia >= len(A):
        return CoalescencePoint(None, True)
    if not np.array_equal(A[ia:], B[ib:]):
        raise AssertionError("suffix property violated")
    return CoalescencePoint((int(A[ia, 0]), int(A[ia, 1])), shift > 0)


def event_before_horizon(cp: CoalescencePoint, tau: float, N: float) -> bool:
    """``level(cp) <= 2 (1 - tau) N``; an absent point gives False."""
    if not cp.present:
        return False
    return level(cp.site) <= 2.0 * (1.0 - tau) * N + _EPS


# --- indicators ----------------------------------------------------------

def indicator_exit_window(exits: Mapping[str, int], windows: Mapping[str, tuple[float, float]]) -> bool:
    """Each named exit point lies in its closed window ``[lo, hi]``."""
    ok = True
    for name, (lo, hi) in windows.items():
        if name not in exits:
            raise DomainError(f"no exit point recorded for {name!r}")
        ok &= lo <= exits[name] <= hi
    return bool(ok)


def indicator_sandwich(lower, middle, upper) -> bool:
    ends = {tuple(_sites(p)[-1]) for p in (lower, middle, upper)}
    if len(ends) != 1:
        raise DomainError(f"paths end at different sites: {sorted(ends)}")
    return precedes(lower, middle) and precedes(middle, upper)


def indicator_crossing(path, sites) -> bool:
    """The path visits at least one of ``sites`` (a Region or an array)."""
    if isinstance(sites, Region):
        sites = region_sites(sites)
    S = np.asarray(sites, dtype=np.int64).reshape(-1, 2)
    P = _sites(path)
    rel = S.sum(axis=1) - level(tuple(P[0]))
    ok = (rel >= 0) & (rel < len(P))
    return bool(((P[rel[ok]] == S[ok]).all(axis=1)).any())


def corner_point(N: int, s_r: float, t_r: float) -> tuple[Site, int]:
    """``v^c`` below the segment at level ``2T`` with half-width ``a``."""
    T = _floor((1.0 - t_r) * N)
    a = _floor(s_r / 2.0 * N ** (2.0 / 3.0))
    return (T - a, T - a), a


def corner_set(vc: Site, a: int, legs: str = "full") -> np.ndarray:
    """Horizontal and vertical legs of the triangle under the segment.

    ``full`` uses ``vc + k e1`` and ``vc + k e2`` for ``0 <= k <= 2a``; with
    these, reaching the legs and crossing the segment are the same event.
    ``printed`` keeps only the half-legs ``k = a .. 2a-1`` next to the segment
    ends, which misses paths entering the triangle near ``vc``.
    """
    ks = np.arange(0, 2 * a + 1) if legs == "full" else np.arange(a, 2 * a)
    if legs not in ("full", "printed"):
        raise ParameterError(f"unknown legs {legs!r}")
    h = np.stack([vc[0] + ks, np.full(ks.shape, vc[1])], axis=1)
    v = np.stack([np.full(ks.shape, vc[0]), vc[1] + ks], axis=1)
    return np.unique(np.concatenate([h, v]).astype(np.int64), axis=0)


def exit_wrt(path, v: Site) -> Site:
    """Last site of the path on the row ``x2 = v2`` or the column ``x1 = v1``."""
    P = _sites(path)
    on = (P[:, 0] == v[0]) | (P[:, 1] == v[1])
    if not on.any():
        raise DomainError(f"path never meets the lines through {v}")
    idx = int(np.nonzero(on)[0][-1])
    return (int(P[idx, 0]), int(P[idx, 1]))


def indicator_E1(path, vc: Site, a: int, legs: str = "full") -> bool:
    z = exit_wrt(path, vc)
    legs_set = corner_set(vc, a, legs)
    return bool(((legs_set[:, 0] == z[0]) & (legs_set[:, 1] == z[1])).any())


def to_mask(sites: Sequence[Site] | np.ndarray, lo: Site, shape: tuple[int, int]) -> np.ndarray:
    """Boolean grid marking ``sites`` inside the rectangle starting at ``lo``."""
    mask = np.zeros(shape, dtype=np.bool_)
    S = np.asarray(sites, dtype=np.int64).reshape(-1, 2) - np.asarray(lo, dtype=np.int64)
    ok = (S[:, 0] >= 0) & (S[:, 0] < shape[0]) & (S[:, 1] >= 0) & (S[:, 1] < shape[1])
    mask[S[ok, 0], S[ok, 1]] = True
    return mask
