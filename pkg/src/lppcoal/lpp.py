"""Last-passage dynamic programs, geodesic backtracking and deviation profiles.

Conventions
-----------
* ``G_{o,y}`` includes the weight of every visited site, both endpoints too.
* Ties on exact float equality go to the ``-e2`` predecessor.
* Line-to-point values count ``h0(k)`` at the line site plus the weights of
  every site strictly above the line ``x1 + x2 = 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .environment import BoundsError, DomainError, ParameterError, Site, WeightField

E1, E2, START, NONE = (int(c) for c in (kernels.E1, kernels.E2, kernels.START, kernels.NONE))
_DIR_NAMES = {E1: "e1", E2: "e2", START: "boundary", NONE: "none"}


def e34_to_lattice(i: float, j: float) -> tuple[float, float]:
    """Coordinates of ``i*e4 + j*e3`` with e4 = (1, 1), e3 = (1, -1)."""
    return (i + j, i - j)


def lattice_to_e34(x1: float, x2: float) -> tuple[float, float]:
    """Inverse of :func:`e34_to_lattice`."""
    return ((x1 + x2) / 2, (x1 - x2) / 2)


def level(site: Site) -> int:
    return int(site[0]) + int(site[1])


@dataclass(frozen=True)
class GeodesicPath:
    """Up-right path. ``sites[:bulk_start]`` is boundary (axis or line start)
    whose accumulated value is ``offset``; the rest carry bulk weights."""

    sites: np.ndarray
    total_weight: float
    offset: float = 0.0
    bulk_start: int = 0

    def __post_init__(self) -> None:
        steps = np.diff(self.sites, axis=0)
        ok = ((steps[:, 0] == 1) & (steps[:, 1] == 0)) | ((steps[:, 0] == 0) & (steps[:, 1] == 1))
        if not ok.all():
            raise DomainError("consecutive sites must differ by e1 or e2")

    @classmethod
    def from_sites(cls, sites, weights: Optional[WeightField] = None) -> "GeodesicPath":
        arr = np.asarray(sites, dtype=np.int64).reshape(-1, 2)
        total = 0.0
        if weights is not None:
            for s in arr:
                total += weights.weights[s[0] - weights.lo[0], s[1] - weights.lo[1]]
        return cls(arr, total)

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def start(self) -> Site:
        return (int(self.sites[0, 0]), int(self.sites[0, 1]))

    @property
    def end(self) -> Site:
        return (int(self.sites[-1, 0]), int(self.sites[-1, 1]))

    @property
    def steps(self) -> np.ndarray:
        """0 for an e1 step, 1 for an e2 step."""
        return np.diff(self.sites, axis=0)[:, 1].astype(np.uint8)

    @property
    def bulk_sites(self) -> np.ndarray:
        return self.sites[self.bulk_start:]

    def contains(self, site: Site) -> bool:
        lev = level(site) - level(self.start)
        return 0 <= lev < len(self.sites) and tuple(self.sites[lev]) == tuple(site)

    def bulk_weight(self, field: WeightField) -> float:
        s = self.bulk_sites
        return float(np.sum(field.weights[s[:, 0] - field.lo[0], s[:, 1] - field.lo[1]]))


@dataclass
class PassageTable:
    """Values, predecessor codes and (optionally) exit labels on ``[lo, hi]``.

    ``fixed`` marks cells whose value was prescribed rather than computed: the
    start cell of a point-to-point table, the axes of a stationary table, the
    line cells of a line-to-point table.
    """

    kind: str
    lo: Site
    values: np.ndarray
    dirs: np.ndarray
    fixed: np.ndarray
    origin: Optional[Site] = None
    exits: Optional[np.ndarray] = None

    @property
    def hi(self) -> Site:
        return (self.lo[0] + self.values.shape[0] - 1, self.lo[1] + self.values.shape[1] - 1)

    def contains(self, site: Site) -> bool:
        return self.lo[0] <= site[0] <= self.hi[0] and self.lo[1] <= site[1] <= self.hi[1]

    def index(self, site: Site) -> tuple[int, int]:
        if not self.contains(site):
            raise BoundsError(f"site {site} outside table {self.lo}..{self.hi}")
        return (int(site[0]) - self.lo[0], int(site[1]) - self.lo[1])

    def value(self, site: Site) -> float:
        return float(self.values[self.index(site)])

    def direction(self, site: Site) -> int:
        return int(self.dirs[self.index(site)])

    def exit(self, site: Site) -> int:
        if self.exits is None:
            raise DomainError(f"{self.kind} table carries no exit labels")
        return int(self.exits[self.index(site)])

    def reachable(self, site: Site) -> bool:
        return self.contains(site) and self.dirs[self.index(site)] != NONE

    def to_csv(self, path, lo: Optional[Site] = None, hi: Optional[Site] = None) -> None:
        """Dump ``i, j, G, direction`` rows for the sub-rectangle ``[lo, hi]``."""
        lo = self.lo if lo is None else lo
        hi = self.hi if hi is None else hi
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["i", "j", "G", "direction"])
            for i in range(lo[0], hi[0] + 1):
                for j in range(lo[1], hi[1] + 1):
                    a, b = self.index((i, j))
                    out.writerow([i, j, repr(float(self.values[a, b])), _DIR_NAMES[int(self.dirs[a, b])]])


def fill_table(kind: str, lo: Site, w: np.ndarray, values: np.ndarray, dirs: np.ndarray,
               fixed: np.ndarray, origin: Optional[Site] = None,
               exit_labels: Optional[np.ndarray] = None) -> PassageTable:
    """Run the DP over prescribed cells and wrap the result."""
    kernels.fill_lpp(w, values, dirs, fixed)
    exits = None
    if exit_labels is not None:
        exits = exit_labels
        kernels.propagate_labels(dirs, exits, fixed, np.int64(0))
    return PassageTable(kind, lo, values, dirs, fixed, origin, exits)


def passage_time(field: WeightField, origin: Site, target: Site) -> PassageTable:
    origin = (int(origin[0]), int(origin[1]))
    target = (int(target[0]), int(target[1]))
    if origin[0] > target[0] or origin[1] > target[1]:
        raise DomainError(f"origin {origin} is not below-left of target {target}")
    w = field.block(origin, target)
    values = np.empty(w.shape, dtype=np.float64)
    dirs = np.empty(w.shape, dtype=np.uint8)
    fixed = np.zeros(w.shape, dtype=np.bool_)
    values[0, 0] = w[0, 0]
    dirs[0, 0] = START
    fixed[0, 0] = True
    return fill_table("point", origin, w, values, dirs, fixed, origin=origin)


def backtrack_geodesic(table: PassageTable, endpoint: Site) -> GeodesicPath:
    a, b = table.index(endpoint)
    if table.dirs[a, b] == NONE:
        raise DomainError(f"endpoint {endpoint} is unreachable in this table")
    local = kernels.backtrack(table.dirs, a, b)
    sites = local + np.array(table.lo, dtype=np.int64)
    total = float(table.values[a, b])
    if table.kind == "point":
        return GeodesicPath(sites, total)
    prescribed = table.fixed[local[:, 0], local[:, 1]]
    bulk_start = int(np.argmin(prescribed)) if not prescribed.all() else len(prescribed)
    last = local[bulk_start - 1]
    return GeodesicPath(sites, total, float(table.values[last[0], last[1]]), bulk_start)


# --- line-to-point -------------------------------------------------------

def default_truncation(N: int) -> int:
    """K = 3 N^{2/3} ln N, at least 1."""
    return max(1, math.ceil(3.0 * N ** (2.0 / 3.0) * math.log(max(N, 2))))


@dataclass(frozen=True)
class InitialCondition:
    """Profile ``h0(k, -k)`` for ``|k| <= K``, stored at index ``k + K``."""

    profile: np.ndarray
    K: int
    family_sigma: Optional[float] = None

    def __post_init__(self) -> None:
        if self.K < 0:
            raise ParameterError("truncation radius must be >= 0")
        if self.profile.shape != (2 * self.K + 1,):
            raise ParameterError("profile must have length 2K+1")
        if self.profile[self.K] != 0.0:
            raise ParameterError("h0(0) must be 0")

    @classmethod
    def flat(cls, K: int) -> "InitialCondition":
        return cls(np.zeros(2 * K + 1), K, 0.0)

    @classmethod
    def from_increments(cls, inc: np.ndarray, K: int, sigma: Optional[float] = None) -> "InitialCondition":
        """``inc[k + K]`` is the increment X_k - Y_k for k in [-K, K]; inc[0] is unused."""
        inc = np.asarray(inc, dtype=np.float64)
        prof = np.zeros(2 * K + 1)
        prof[K + 1:] = np.cumsum(inc[K + 1:])
        # h0(k) = -sum_{l=k+1}^{0} inc_l for k <= -1
        prof[:K] = -np.cumsum(inc[1:K + 1][::-1])[::-1]
        return cls(prof, K, sigma)

    def __call__(self, k: int) -> float:
        if abs(k) > self.K:
            raise BoundsError(f"|k| = {abs(k)} beyond truncation radius {self.K}")
        return float(self.profile[k + self.K])


def line_passage_table(field: WeightField, h0: InitialCondition, hi: Site) -> PassageTable:
    """Line-to-point values for every site of ``[lo, hi]`` above the line."""
    K = h0.K
    lo = (max(-K, -hi[1]), max(-K, -hi[0]))
    if level(hi) <= 0:
        raise DomainError(f"target {hi} is not strictly above the line x1 + x2 = 0")
    w = field.block(lo, hi)
    shape = w.shape
    values = np.empty(shape, dtype=np.float64)
    dirs = np.empty(shape, dtype=np.uint8)
    fixed = np.zeros(shape, dtype=np.bool_)
    exits = np.zeros(shape, dtype=np.int64)
    ks = np.arange(max(lo[0], -hi[1], -K), min(hi[0], -lo[1], K) + 1)
    a, b = ks - lo[0], -ks - lo[1]
    values[a, b] = h0.profile[ks + K]
    dirs[a, b] = START
    fixed[a, b] = True
    exits[a, b] = ks
    return fill_table("line", lo, w, values, dirs, fixed, exit_labels=exits)


def passage_time_from_line(field: WeightField, h0: InitialCondition, target: Site):
    """Return ``(value, exit_point, truncation_flag)``."""
    if h0.K < 0:
        raise ParameterError("truncation radius must be >= 0")
    table = line_passage_table(field, h0, target)
    z = table.exit(target)
    return table.value(target), z, truncated(z, h0.K, target)


def truncated(z: int, K: int, target: Site) -> bool:
    """Exit at the edge of the truncation window while the line extends further."""
    if z == K and K < target[0]:
        return True
    return z == -K and K < target[1]


# --- deviation functionals -----------------------------------------------

@dataclass(frozen=True)
class DeviationProfile:
    columns: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    deviation: np.ndarray
    direction: tuple[float, float]

    def at(self, k: int) -> float:
        idx = int(k - self.columns[0])
        if not 0 <= idx < len(self.columns):
            raise BoundsError(f"column {k} not visited")
        return float(self.deviation[idx])


def deviation_profile(path: GeodesicPath, direction: tuple[float, float]) -> DeviationProfile:
    xi1, xi2 = float(direction[0]), float(direction[1])
    if not xi1 > 0:
        raise ParameterError("direction needs xi1 > 0")
    if len(path.sites) == 0:
        raise DomainError("empty path")
    x = path.sites[:, 0]
    y = path.sites[:, 1]
    cols = np.arange(x[0], x[-1] + 1)
    # x is non-decreasing, so each column is a contiguous run
    first = np.searchsorted(x, cols, side="left")
    last = np.searchsorted(x, cols, side="right") - 1
    lower = y[first].astype(np.float64)
    upper = y[last].astype(np.float64)
    slope = cols * (xi2 / xi1)
    dev = np.maximum(np.abs(upper - slope), np.abs(lower - slope))
    return DeviationProfile(cols, upper, lower, dev, (xi1, xi2))


def backward_passage_values(field: WeightField, lo: Site, apex: Site) -> np.ndarray:
    """``G_{y, apex}`` for every ``y`` in ``[lo, apex]``, indexed from ``lo``.

    Solved as a forward DP on the point-reflected block; entry ``[a, b]`` is
    the value from ``lo + (a, b)``.
    """
    if lo[0] > apex[0] or lo[1] > apex[1]:
        raise DomainError(f"{lo} is not below-left of {apex}")
    w = np.ascontiguousarray(field.block(lo, apex)[::-1, ::-1])
    values = np.empty(w.shape, dtype=np.float64)
    dirs = np.empty(w.shape, dtype=np.uint8)
    fixed = np.zeros(w.shape, dtype=np.bool_)
    values[0, 0] = w[0, 0]
    dirs[0, 0] = START
    fixed[0, 0] = True
    kernels.fill_lpp(w, values, dirs, fixed)
    return values[::-1, ::-1]
