"""Monte Carlo trials, estimates and exponent fits.

Every trial draws from its own stream ``RngStream(seed, (experiment, trial))``,
so a trial's outcome depends only on the master seed and its index. Events
are computed exactly on the sampled environment; nothing is thinned or
approximated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from . import kernels
from .environment import (DomainError, ParameterError, RngStream, Site, WeightField,
                          bulk_field)
from .geometry import (Region, _floor, corner_point, corner_set, cylinder, region_sites,
                       rset, rset_corners, segment, coalescence_point, to_mask)
from .lpp import (NONE, START, backtrack_geodesic, backward_passage_values,
                  default_truncation, deviation_profile, line_passage_table, passage_time,
                  truncated)
from .queueing import (agreement_limit, agreement_parameters, indicator_Am,
                       lemma59_lower_bound, random_walk_sup_bound, random_walk_sups,
                       rates_for_densities, sample_stationary_pair)
from .stationary import (build_antidiagonal_h0, build_axis_boundary, check_density,
                         density_of, horizontal_exit, stationary_table)

A_CONST = 3.0 / 8.0
DEFAULT_DELTA0 = 0.05


class AssumptionViolation(ValueError):
    """A scaling inequality failed; ``failed`` lists the checks by name."""

    def __init__(self, message: str, failed: Sequence["InequalityCheck"] = ()):
        super().__init__(message)
        self.failed = tuple(failed)


# --- scaling -------------------------------------------------------------

@dataclass(frozen=True)
class InequalityCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    def describe(self) -> str:
        state = "ok" if self.holds else "FAILS"
        return f"{self.name}: {self.lhs:.6g} vs {self.rhs:.6g} (margin {self.margin:+.4g}, {state})"


@dataclass(frozen=True)
class ScalingParams:
    delta: float
    s_r: float
    t_r: float
    r: float
    M: float
    N: Optional[int]
    checks: tuple[InequalityCheck, ...]
    well_posed: tuple[InequalityCheck, ...]

    @property
    def assumption_holds(self) -> bool:
        return all(c.holds for c in self.checks)

    def failed(self) -> list[InequalityCheck]:
        return [c for c in self.well_posed + self.checks if not c.holds]

    def report(self) -> list[str]:
        return [c.describe() for c in self.well_posed + self.checks]

    def as_dict(self) -> dict:
        return {
            "delta": self.delta, "s_r": self.s_r, "t_r": self.t_r, "r": self.r, "M": self.M,
            "N": self.N,
            "checks": [{"name": c.name, "lhs": c.lhs, "rhs": c.rhs, "margin": c.margin,
                        "holds": c.holds} for c in self.well_posed + self.checks],
        }


def scaling_parameters(delta: float, N: Optional[int] = None, strict: bool = False,
                       delta0: float = DEFAULT_DELTA0) -> ScalingParams:
    """``s_r = 2 delta``, ``t_r = delta^{3/2} / ln(1/delta)^3``, ``r = M = ln(1/delta) / 4``.

    The three scaling inequalities are always evaluated and reported. A
    well-posedness failure (``t_r >= 1`` leaves no time horizon) raises
    :class:`AssumptionViolation` naming every failed inequality. With
    ``strict`` any failure, or ``delta >= delta0``, raises too.
    """
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise AssumptionViolation(f"delta must lie in (0, 1), got {delta}")
    L = math.log(1.0 / delta)
    s_r = 2.0 * delta
    t_r = delta ** 1.5 / L ** 3
    r = M = L / 4.0
    checks = [
        InequalityCheck("s_r <= min(r, 4)", s_r, min(r, 4.0)),
        InequalityCheck("M <= s_r t_r^(-2/3) / 16 - 4 r t_r^(1/3)", M,
                        s_r * t_r ** (-2.0 / 3.0) / 16.0 - 4.0 * r * t_r ** (1.0 / 3.0)),
    ]
    if N is not None:
        if N < 2:
            raise ParameterError("N must be >= 2")
        checks.append(InequalityCheck("r <= N^(1/3) / ln N", r, N ** (1.0 / 3.0) / math.log(N)))
    well = [InequalityCheck("t_r < 1", t_r, math.nextafter(1.0, 0.0))]
    sp = ScalingParams(delta, s_r, t_r, r, M, N, tuple(checks), tuple(well))
    failed = sp.failed()
    ill_posed = any(not c.holds for c in well)
    if ill_posed or (strict and (failed or delta >= delta0)):
        names = [c.describe() for c in failed]
        if strict and delta >= delta0:
            names.append(f"delta < delta0: {delta:.6g} vs {delta0:.6g}")
        raise AssumptionViolation(f"scaling at delta={delta} rejected: " + "; ".join(names), failed)
    return sp


# --- outcomes and estimates ----------------------------------------------

@dataclass
class TrialOutcome:
    experiment: str
    seed: int
    trial: int
    params: dict
    flags: dict = field(default_factory=dict)
    observables: dict = field(default_factory=dict)
    truncated: bool = False
    valid: bool = True
    note: str = ""

    @property
    def label_path(self) -> tuple:
        return (self.experiment, self.trial)


def trial_stream(seed: int, experiment: str, trial: int) -> RngStream:
    return RngStream(int(seed), (experiment, int(trial)))


def _invalid(experiment, seed, trial, params, note) -> TrialOutcome:
    return TrialOutcome(experiment, seed, trial, params, valid=False, note=note)


@dataclass(frozen=True)
class EstimateRecord:
    event: str
    n: int
    k: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    excluded: int = 0

    @property
    def half_width(self) -> float:
        return (self.ci_hi - self.ci_lo) / 2.0


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n < 1 or not 0 <= k <= n:
        raise ParameterError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def estimate_from_counts(event: str, k: int, n: int, excluded: int = 0) -> EstimateRecord:
    lo, hi = wilson_interval(k, n)
    p = k / n
    return EstimateRecord(event, n, k, p, min(lo, p), max(hi, p), excluded)


def estimate(outcomes: Iterable[TrialOutcome], event: str) -> EstimateRecord:
    """Success frequency of ``event`` over valid, untruncated trials."""
    k = n = excluded = 0
    for o in outcomes:
        if not o.valid or o.truncated or event not in o.flags:
            excluded += 1
            continue
        n += 1
        k += bool(o.flags[event])
    if n == 0:
        raise ParameterError(f"no valid trials carry the event {event!r}")
    return estimate_from_counts(event, k, n, excluded)


def complement(rec: EstimateRecord, event: Optional[str] = None) -> EstimateRecord:
    return EstimateRecord(event or f"not {rec.event}", rec.n, rec.n - rec.k, 1.0 - rec.p_hat,
                          1.0 - rec.ci_hi, 1.0 - rec.ci_lo, rec.excluded)


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    stderr: float
    intercept: float
    used: tuple[float, ...]
    excluded: tuple[float, ...]


def fit_exponent(deltas: Sequence[float], estimates: Sequence, failure: bool = True) -> ExponentFit:
    """Slope of ``ln q`` against ``ln delta``.

    ``estimates`` are plain failure probabilities ``q`` (ordinary least
    squares, residual standard error) or :class:`EstimateRecord` objects
    (weighted least squares; the weight of a point is the inverse variance of
    ``ln q`` read off its Wilson interval). With ``failure`` the records are
    estimates of the success event and ``q = 1 - p``.
    """
    if len(deltas) != len(estimates):
        raise ParameterError("one estimate per delta is required")
    xs, ys, ws, used, dropped = [], [], [], [], []
    for d, e in zip(deltas, estimates):
        if isinstance(e, EstimateRecord):
            rec = complement(e) if failure else e
            q, lo, hi = rec.p_hat, rec.ci_lo, rec.ci_hi
        else:
            q, lo, hi = float(e), None, None
        if not 0.0 < q < 1.0:
            dropped.append(float(d))
            continue
        xs.append(math.log(d))
        ys.append(math.log(q))
        if lo is not None:
            sd = (math.log(hi) - math.log(max(lo, 1e-300))) / (2.0 * 1.959963984540054)
            ws.append(1.0 / max(sd, 1e-12) ** 2)
        used.append(float(d))
    if dropped:
        warnings.warn(f"excluded degenerate estimates at delta = {dropped}", RuntimeWarning, stacklevel=2)
    if len(xs) < 3:
        raise ParameterError(f"need >= 3 usable grid points, have {len(xs)}")
    X = np.column_stack([np.ones(len(xs)), xs])
    y = np.asarray(ys)
    if ws:
        W = np.asarray(ws)
        XtW = X.T * W
        cov = np.linalg.inv(XtW @ X)
        beta = cov @ (XtW @ y)
    else:
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ beta
        dof = len(xs) - 2
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(X.T @ X)
    return ExponentFit(float(beta[1]), float(math.sqrt(max(cov[1, 1], 0.0))), float(beta[0]),
                       tuple(used), tuple(dropped))


# --- shared geometry helpers ----------------------------------------------

def _horizon_level(tau: float, N: int) -> int:
    return _floor(2.0 * (1.0 - tau) * N)


def _band(h: int, hi: Site) -> tuple[Site, np.ndarray]:
    """Block ``[lo, hi]`` containing every site of level >= h below ``hi``, and its level grid."""
    lo = (max(0, h - hi[1]), max(0, h - hi[0]))
    lev = np.add.outer(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1))
    return lo, lev


def _cells(sites: np.ndarray, lo: Site) -> tuple[np.ndarray, np.ndarray]:
    return sites[:, 0] - lo[0], sites[:, 1] - lo[1]


def _horizon_labels(dirs: np.ndarray, lo: Site, lev: np.ndarray, h: int,
                    blocked: Optional[np.ndarray] = None) -> np.ndarray:
    """x1 of the level-h site on the backward path from each cell (``-1`` if none).

    ``blocked`` marks cells (e.g. stationary axes) whose paths carry no bulk
    site at level h; they get label -1.
    """
    fixed = lev <= h
    labels = np.full(dirs.shape, -1, dtype=np.int64)
    at_h = lev == h
    labels[at_h] = (np.nonzero(at_h)[0] + lo[0])
    if blocked is not None:
        fixed = fixed | blocked
        labels[blocked] = -1
    kernels.propagate_labels(np.ascontiguousarray(dirs), labels, fixed, np.int64(-1))
    return labels


def _rows(sites: np.ndarray) -> np.ndarray:
    return (sites[:, 0] + sites[:, 1]) // 2


def start_set(R: Region, starts: str) -> np.ndarray:
    """Start points used for a "for all y in R" event.

    ``edges`` (default) takes the two outermost sites of every row and is exact:
    the rest of a row is sandwiched by its ends. ``all`` enumerates R.
    ``top`` and ``four`` are the corner shortcuts, kept for comparison.
    """
    if starts == "all":
        return region_sites(R)
    return rset_corners(R, starts)


def _window(starts: np.ndarray, h: int, hi: Site) -> np.ndarray:
    lo_s = (int(starts[:, 0].min()), int(starts[:, 1].min()))
    return np.arange(max(lo_s[0], h - hi[1]), min(hi[0], h - lo_s[1]) + 1)


def iter_horizon_ancestors(field: WeightField, starts: np.ndarray, h: int, hi: Site,
                           targets: np.ndarray, method: str = "auto"):
    """Yield, start by start, x1 of the level-h site of ``pi_{y,x}`` for each target.

    ``backward``: ``G_{y,x} = max_z G_{y,z} + G_{z,x} - w_z`` over level-h
    sites ``z``; one backward DP per ``z`` serves every start, then a band DP
    from level h per start finds the maximizing ``z``. ``forward``: one full
    DP per start, computed only when the row is requested (cheap when the
    caller stops early). ``auto`` picks backward when the level-h window is
    small next to the start set. Unreachable targets get -1.
    """
    starts = np.asarray(starts, dtype=np.int64).reshape(-1, 2)
    if len(starts) == 0:
        return
    if (starts.sum(axis=1) >= h).any():
        raise DomainError("every start must lie strictly below the horizon level")
    z1 = _window(starts, h, hi)
    lo, lev = _band(h, hi)
    if method == "auto":
        # cell counts; the forward loop usually stops early, hence the 1/2
        back = float(np.sum((z1 - starts[:, 0].min() + 1.0) * (h - z1 - starts[:, 1].min() + 1.0)))
        back += len(starts) * lev.size
        fwd = 0.5 * float(np.sum((hi[0] - starts[:, 0] + 1.0) * (hi[1] - starts[:, 1] + 1.0)))
        method = "backward" if back <= fwd else "forward"
    ti, tj = _cells(targets, lo)
    if method == "forward":
        for y in starts:
            y = (int(y[0]), int(y[1]))
            tab = passage_time(field, y, hi)
            b0, b1 = max(lo[0], y[0]), max(lo[1], y[1])
            sub_lev = lev[b0 - lo[0]:, b1 - lo[1]:]
            labels = _horizon_labels(tab.dirs[b0 - y[0]:, b1 - y[1]:], (b0, b1), sub_lev, h)
            row = np.full(len(targets), -1, dtype=np.int64)
            ok = (targets[:, 0] >= b0) & (targets[:, 1] >= b1)
            row[ok] = labels[targets[ok, 0] - b0, targets[ok, 1] - b1]
            yield row
        return
    if method != "backward":
        raise ParameterError(f"unknown method {method!r}")
    lo_s = (int(starts[:, 0].min()), int(starts[:, 1].min()))
    A = np.full((len(starts), len(z1)), -np.inf)
    for k, a in enumerate(z1):
        z = (int(a), int(h - a))
        vals = backward_passage_values(field, lo_s, z)
        ok = (starts[:, 0] <= z[0]) & (starts[:, 1] <= z[1])
        A[ok, k] = vals[starts[ok, 0] - lo_s[0], starts[ok, 1] - lo_s[1]]
    w = np.ascontiguousarray(field.block(lo, hi))
    fixed = lev <= h
    zi, zj = z1 - lo[0], (h - z1) - lo[1]
    values0 = np.full(w.shape, -np.inf)
    labels0 = np.full(w.shape, -1, dtype=np.int64)
    labels0[zi, zj] = z1
    values, labels = values0.copy(), labels0.copy()
    dirs = np.full(w.shape, NONE, dtype=np.uint8)
    for s in range(len(starts)):
        np.copyto(values, values0)
        np.copyto(labels, labels0)
        values[zi, zj] = A[s]
        kernels.fill_lpp_labeled(w, values, dirs, fixed, labels, np.int64(-1))
        yield labels[ti, tj].copy()


def horizon_ancestors(field: WeightField, starts: np.ndarray, h: int, hi: Site,
                      targets: np.ndarray, method: str = "auto") -> np.ndarray:
    """Array form of :func:`iter_horizon_ancestors`, shape ``(len(starts), len(targets))``."""
    rows = list(iter_horizon_ancestors(field, starts, h, hi, targets, method))
    if not rows:
        return np.zeros((0, len(targets)), dtype=np.int64)
    return np.stack(rows)


# --- coalescence ---------------------------------------------------------

COALESCENCE_FLAGS = ("thm21_event", "thm24_event", "thm25_event")


def run_trial_coalescence(N: int, delta: float, seed: int, trial: int,
                          tau: Optional[float] = None, depth: float = 0.25,
                          starts: str = "edges", diagnostics: bool = False,
                          sandwich: bool = False, strict: bool = False,
                          early_exit: bool = True, method: str = "auto") -> TrialOutcome:
    """One sample of the point-to-point coalescence events.

    ``thm21_event``: every geodesic from R^{r/2, depth} to every x in
    C^{delta, tau} passes the level-h site of the density-1/2 stationary
    geodesic from the origin, i.e. coalesces with it at or below level h.
    ``thm24_event``: the same with R of depth tau. ``thm25_event``: all
    point-to-point geodesics from R to x share their level-h site.

    With ``early_exit`` the start loop stops once all three flags are false;
    ``n_x_fail`` then counts failures among the starts evaluated so far.
    """
    params = {"N": N, "delta": delta, "tau": tau, "depth": depth, "starts": starts}
    try:
        sp = scaling_parameters(delta, N, strict=strict)
    except AssumptionViolation as exc:
        return _invalid("coalescence", seed, trial, params, str(exc))
    tau = sp.t_r if tau is None else float(tau)
    params["tau"] = tau
    if not 0.0 < tau <= sp.t_r * (1 + 1e-12):
        raise ParameterError(f"tau must lie in (0, t_r = {sp.t_r:.6g}]")
    ts = trial_stream(seed, "coalescence", trial)
    C = cylinder(delta, tau, N)
    xs = region_sites(C)
    h = _horizon_level(tau, N)
    R_main = rset(sp.r / 2.0, depth, N)
    R_tau = rset(sp.r / 2.0, tau, N)
    S_main, S_tau = start_set(R_main, starts), start_set(R_tau, starts)
    S = np.unique(np.concatenate([S_main, S_tau]).reshape(-1, 2), axis=0)
    ext = C.half_width
    if diagnostics:
        ext = max(ext, _floor(A_CONST * sp.s_r * N ** (2.0 / 3.0)))
    hi = (N + ext, N + ext)
    fld = bulk_field(ts, (0, 0), hi)

    bnd = build_axis_boundary(ts.derive("stationary"), 0.5, (0, 0), max(hi))
    stat = stationary_table(bnd, fld, hi)
    lo, lev = _band(h, hi)
    sub = stat.dirs[lo[0]:, lo[1]:]
    ii, jj = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="ij")
    axis = (ii == 0) | (jj == 0)
    q = _horizon_labels(sub, lo, lev, h, blocked=axis)[_cells(xs, lo)]
    # tau-deep starts first: their flag settles early and lets the loop stop
    key_tau = {tuple(p) for p in S_tau.tolist()}
    key_main = {tuple(p) for p in S_main.tolist()}
    order = sorted(S.tolist(), key=lambda p: (tuple(p) not in key_tau, p))
    S = np.asarray(order, dtype=np.int64).reshape(-1, 2)
    ok21 = ok24 = ok25 = True
    ref25 = None
    x_fail = np.zeros(len(xs), dtype=bool)
    used = 0
    for y, row in zip(order, iter_horizon_ancestors(fld, S, h, hi, xs, method)):
        used += 1
        good = (row == q) & (q >= 0)
        y = tuple(y)
        if y in key_tau:
            ok24 &= bool(good.all())
        if y in key_main:
            ok21 &= bool(good.all())
            x_fail |= ~good
            if ref25 is None:
                ref25 = row
            ok25 &= bool((row == ref25).all() and (row >= 0).all())
        if early_exit and not (ok21 or ok24 or ok25):
            break
    flags = {"thm21_event": ok21, "thm24_event": ok24, "thm25_event": ok25}
    centre = (N, N)
    z_half = stat.exit(centre)
    pt = passage_time(fld, (1, 1), centre)
    cp = coalescence_point(backtrack_geodesic(stat, centre), backtrack_geodesic(pt, centre))
    obs = {
        "exit_half": z_half,
        "n_x_fail": int(x_fail.sum()),
        "n_x": int(len(xs)),
        "n_starts": len(key_main),
        "starts_evaluated": used,
        "coal_level_centre": int(cp.site[0] + cp.site[1]) if cp.present else -1,
        "horizon_level": h,
    }
    if diagnostics:
        flags.update(_coalescence_diagnostics(fld, ts, sp, N, hi, stat, S_main if sandwich else None))
    return TrialOutcome("coalescence", seed, trial, params, flags, obs)


def _coalescence_diagnostics(fld, ts, sp: ScalingParams, N: int, hi: Site, stat,
                             sandwich_starts: Optional[np.ndarray]) -> dict:
    """Exit windows A and O, crossing B, the corner event E1, and optionally G."""
    eps = sp.r * N ** (-1.0 / 3.0)
    rp, rm = 0.5 + eps, 0.5 - eps
    check_density(rm)
    check_density(rp)
    src = ts.derive("stationary")
    plus = stationary_table(build_axis_boundary(src, rp, (0, 0), max(hi)), fld, hi)
    minus = stationary_table(build_axis_boundary(src, rm, (0, 0), max(hi)), fld, hi)
    n23 = N ** (2.0 / 3.0)
    ja = _floor(A_CONST * sp.s_r * n23)
    x1, x2 = (N + ja, N - ja), (N - ja, N + ja)
    rN = sp.r * n23
    A1 = plus.exit(x2) >= rN and plus.exit(x1) <= 15 * rN
    A2 = minus.exit(x2) >= -15 * rN and minus.exit(x1) <= -rN
    Cr = region_sites(cylinder(sp.s_r / 2.0, sp.t_r, N))
    ci, cj = Cr[:, 0], Cr[:, 1]
    zp, zm = plus.exits[ci, cj], minus.exits[ci, cj]
    O = bool(((zm >= -15 * rN) & (zm <= -rN) & (zp >= rN) & (zp <= 15 * rN)).all())
    seg = region_sites(segment(sp.s_r, sp.t_r, N))
    mask = to_mask(seg, (0, 0), plus.dirs.shape)
    B = bool(kernels.propagate_any(plus.dirs, mask)[ci, cj].all()
             and kernels.propagate_any(minus.dirs, mask)[ci, cj].all())
    vc, a = corner_point(N, sp.s_r, sp.t_r)
    legs = to_mask(corner_set(vc, a, "full"), (0, 0), plus.dirs.shape)
    lines = np.zeros(plus.dirs.shape, dtype=np.bool_)
    lines[vc[0], :] = True
    lines[:, vc[1]] = True

    def on_legs(tab):
        lab = legs.astype(np.int64)
        kernels.propagate_labels(tab.dirs, lab, lines, np.int64(0))
        return lab[ci, cj] == 1

    E1 = bool(on_legs(plus).all() and on_legs(minus).all())
    out = {"A_event": bool(A1 or A2), "O_event": O, "B_event": B, "E1_event": E1}
    if sandwich_starts is not None:
        bad = kernels.order_violations(minus.dirs, stat.dirs) | kernels.order_violations(stat.dirs, plus.dirs)
        ok = not bad[ci, cj].any()
        for y in sandwich_starts:
            y = (int(y[0]), int(y[1]))
            pt = passage_time(fld, y, hi)
            m = np.ascontiguousarray(minus.dirs[y[0]:, y[1]:])
            p = np.ascontiguousarray(plus.dirs[y[0]:, y[1]:])
            bad = kernels.order_violations(m, pt.dirs) | kernels.order_violations(pt.dirs, p)
            if bad[ci - y[0], cj - y[1]].any():
                ok = False
                break
        out["G_event"] = ok
    return out


# --- general initial conditions ---------------------------------------------

def run_trial_general_ic(N: int, delta: float, sigma: float, seed: int, trial: int,
                         tau: Optional[float] = None, K: Optional[int] = None) -> TrialOutcome:
    """Line-to-point coalescence against the density-1/2 stationary profile.

    Both profiles read the same uniforms (the sigma family is a rescaling), and
    the bulk is shared; ``sigma = 1`` reproduces the reference exactly.
    """
    params = {"N": N, "delta": delta, "tau": tau, "sigma": sigma}
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    try:
        sp = scaling_parameters(delta, N)
    except AssumptionViolation as exc:
        return _invalid("general-ic", seed, trial, params, str(exc))
    tau = sp.t_r if tau is None else float(tau)
    params["tau"] = tau
    K = default_truncation(N) if K is None else int(K)
    params["K"] = K
    ts = trial_stream(seed, "general-ic", trial)
    n23 = N ** (2.0 / 3.0)
    jx = _floor(0.75 * delta * n23)
    C = cylinder(delta, tau, N)
    xs = region_sites(C)
    ext = max(C.half_width, jx)
    hi = (N + ext, N + ext)
    lo = (max(-K, -hi[1]), max(-K, -hi[0]))
    fld = bulk_field(ts, lo, hi)
    src = ts.derive("h0")
    ref = line_passage_table(fld, build_antidiagonal_h0(src, 0.5, K), hi)
    mod = line_passage_table(fld, build_antidiagonal_h0(src, 0.5, K, sigma=float(sigma)), hi)
    x1, x2 = (N + jx, N - jx), (N - jx, N + jx)
    window = math.log(1.0 / delta) * n23
    z1, z2 = mod.exit(x1), mod.exit(x2)
    ass = z1 <= window and z2 >= -window
    h = _horizon_level(tau, N)
    blo, lev = _band(h, hi)
    ia, ib = blo[0] - ref.lo[0], blo[1] - ref.lo[1]
    la = _horizon_labels(ref.dirs[ia:, ib:], blo, lev, h)
    lb = _horizon_labels(mod.dirs[ia:, ib:], blo, lev, h)
    ci, cj = _cells(xs, blo)
    event = bool(((la[ci, cj] == lb[ci, cj]) & (la[ci, cj] >= 0)).all())
    trunc = False
    for tab in (ref, mod):
        for x in list(map(tuple, xs.tolist())) + [x1, x2]:
            if truncated(tab.exit(x), K, x):
                trunc = True
                break
    flags = {"ass22_event": bool(ass), "coal_event": event}
    obs = {"exit_x1": z1, "exit_x2": z2, "exit_ref_centre": ref.exit((N, N)),
           "exit_mod_centre": mod.exit((N, N))}
    return TrialOutcome("general-ic", seed, trial, params, flags, obs, truncated=trunc)


# --- localization ---------------------------------------------------------

def _endpoint(xi: Sequence[float], N: int) -> Site:
    return (int(round(xi[0] * N)), int(round(xi[1] * N)))


def _mtag(v: float) -> str:
    return f"{v:g}"


def run_trial_localization(N: int, tau: float, xi: Sequence[float], M_grid: Sequence[float],
                           seed: int, trial: int, eps: float = 0.1) -> TrialOutcome:
    """Deviation events of the geodesic ``o -> xi N`` over columns ``0..tau xi_1 N``."""
    xi = (float(xi[0]), float(xi[1]))
    if not (xi[0] > 0 and xi[1] > 0 and abs(xi[0] + xi[1] - 1.0) < 1e-9):
        raise ParameterError("xi must have positive components summing to 1")
    if not eps <= xi[1] / xi[0] <= 1.0 / eps:
        raise ParameterError(f"need {eps} <= xi2/xi1 <= {1 / eps}")
    if not 0.0 < tau <= 1.0:
        raise ParameterError("tau must lie in (0, 1]")
    params = {"N": N, "tau": tau, "xi1": xi[0]}
    ts = trial_stream(seed, "localization", trial)
    end = _endpoint(xi, N)
    fld = bulk_field(ts, (0, 0), end)
    path = backtrack_geodesic(passage_time(fld, (0, 0), end), end)
    prof = deviation_profile(path, xi)
    kmax = _floor(tau * xi[0] * N)
    dev = prof.deviation[: kmax + 1]
    scale = (tau * N) ** (2.0 / 3.0)
    flags = {}
    for M in M_grid:
        thr = M * scale
        flags[f"all_M{_mtag(M)}"] = bool((dev > thr).all())
        flags[f"exists_M{_mtag(M)}"] = bool((dev > thr).any())
        flags[f"mid_M{_mtag(M)}"] = bool(dev[kmax] > thr)
    obs = {"max_dev": float(dev.max() / scale), "mid_dev": float(dev[kmax] / scale),
           "min_dev": float(dev.min() / scale)}
    return TrialOutcome("localization", seed, trial, params, flags, obs)


# --- exit tails ----------------------------------------------------------

def run_trial_exit_tail(N: int, nu: float, xi: Sequence[float], r_grid: Sequence[float],
                        seed: int, trial: int) -> TrialOutcome:
    """Exit point of the density-``nu`` geodesic to ``xi N`` and its shifted variants."""
    nu = check_density(nu)
    xi = (float(xi[0]), float(xi[1]))
    if abs(nu - density_of(xi)) > N ** (-1.0 / 3.0) + 1e-12:
        raise ParameterError(f"|nu - rho(xi)| = {abs(nu - density_of(xi)):.4g} exceeds N^(-1/3)")
    if min(r_grid) < 0:
        raise ParameterError("r must be >= 0")
    params = {"N": N, "nu": nu, "xi1": xi[0]}
    ts = trial_stream(seed, "exit-tail", trial)
    end = _endpoint(xi, N)
    n23 = N ** (2.0 / 3.0)
    dmax = _floor(max(r_grid) * n23)
    hi = (end[0] + dmax, end[1] + dmax)
    fld = bulk_field(ts, (0, 0), hi)
    tab = stationary_table(build_axis_boundary(ts.derive("stationary"), nu, (0, 0), max(hi)), fld, hi)
    z = tab.exit(end)
    flags = {}
    for r in r_grid:
        d = _floor(r * n23)
        flags[f"tail_r{_mtag(r)}"] = abs(z) > r * n23
        if end[0] - d >= 0 and end[1] - d >= 0:
            flags[f"spc2_r{_mtag(r)}"] = tab.exit((end[0] - d, end[1] + d)) > 0
            flags[f"spc3_r{_mtag(r)}"] = tab.exit((end[0] + d, end[1] - d)) < 0
    return TrialOutcome("exit-tail", seed, trial, params, flags, {"exit": z})


# --- two-density horizontal exits -------------------------------------------

def run_trial_prop62(N: int, delta: float, r0: float, seed: int, trial: int,
                     r: Optional[float] = None) -> TrialOutcome:
    """Horizontal exits of the density-rho_± geodesics to ``N e4`` at row ``(1 - t_r) N``.

    ``r`` overrides the density offset ``rho_± = 1/2 ± r N^{-1/3}`` (default:
    the scaling's r; ``r = 0`` makes both models identical).
    """
    params = {"N": N, "delta": delta, "r0": r0}
    try:
        sp = scaling_parameters(delta, N)
    except AssumptionViolation as exc:
        return _invalid("prop62", seed, trial, params, str(exc))
    r = sp.r if r is None else float(r)
    params["tau"] = sp.t_r
    ts = trial_stream(seed, "prop62", trial)
    end = (N, N)
    fld = bulk_field(ts, (0, 0), end)
    src = ts.derive("stationary")
    eps = r * N ** (-1.0 / 3.0)
    row = _floor((1.0 - sp.t_r) * N)
    z0 = -_floor(r0 * (sp.t_r * N) ** (2.0 / 3.0))
    exits, on_axis = {}, False
    for name, rho in (("minus", 0.5 - eps), ("plus", 0.5 + eps)):
        tab = stationary_table(build_axis_boundary(src, rho, (0, 0), N), fld, end)
        path = backtrack_geodesic(tab, end)
        exits[name] = horizontal_exit(path, row)
        on_row = path.sites[:path.bulk_start]
        on_axis |= bool((on_row[:, 1] == row).any()) if len(on_row) else False
    in_minus = z0 <= exits["minus"] <= 0
    plus_pos = exits["plus"] > 0
    flags = {"H_minus_in_I": bool(in_minus), "H_plus_pos": bool(plus_pos),
             "joint_event": bool(in_minus and plus_pos)}
    obs = {"H_minus": exits["minus"], "H_plus": exits["plus"], "z0": z0, "row": row}
    return TrialOutcome("prop62", seed, trial, params, flags, obs, truncated=on_axis,
                        note="exit on boundary axis" if on_axis else "")


# --- queue and random-walk checks ---------------------------------------------

@dataclass(frozen=True)
class BoundCheck:
    label: str
    estimate: EstimateRecord
    bound: float
    passed: bool
    direction: str  # "upper": estimate <= bound + 3 hw; "lower": estimate >= bound - 3 hw


def verify_rw_bound(alpha: float, beta: float, lam_grid: Sequence[float], horizon: int,
                    trials: int, seed: int, start: int = 0) -> list[BoundCheck]:
    """Tail of ``sup S`` against ``(beta/alpha) e^{-(alpha-beta) lam}``, one check per lambda."""
    if not 0.0 < beta < alpha < 1.0:
        raise ParameterError("need 0 < beta < alpha < 1")
    sups = random_walk_sups(RngStream(int(seed), ("rw-bound",)), alpha, beta, horizon, trials, start)
    out = []
    for lam in lam_grid:
        rec = estimate_from_counts(f"sup_gt_{_mtag(lam)}", int((sups > lam).sum()), trials)
        b = random_walk_sup_bound(alpha, beta, lam)
        out.append(BoundCheck(f"lambda={_mtag(lam)}", rec, b, rec.p_hat <= b + 3 * rec.half_width, "upper"))
    return out


def queue_agreement(eta: float, r: float, N: float, trials: int, seed: int,
                    start: int = 0) -> tuple[EstimateRecord, dict]:
    """Frequency of ``A^m`` (no idle time among the first m+1 customers)."""
    theta, m = agreement_parameters(eta, r, N)
    rp = 0.5 + r * N ** (-1.0 / 3.0)
    rm = 0.5 - r * N ** (-1.0 / 3.0)
    beta, alpha = rates_for_densities(rm, rp)
    root = RngStream(int(seed), ("queue-bounds", _mtag(eta)))
    k = 0
    for t in range(start, start + trials):
        pair = sample_stationary_pair(root.derive(t), beta, alpha, m + 1)
        k += indicator_Am(pair, m)
    info = {"eta": eta, "m": m, "theta": theta, "beta": beta, "alpha": alpha,
            "agreement_bound": lemma59_lower_bound(max(m, 1), r, N, theta) if theta < rp else float("nan"),
            "limit": agreement_limit(eta), "bound62": 1.0 - 62.0 * math.sqrt(eta)}
    return estimate_from_counts(f"A_m_eta{_mtag(eta)}", k, trials), info


def verify_queue_bounds(eta_grid: Sequence[float], r: float, N: float, trials: int,
                        seed: int) -> list[BoundCheck]:
    out = []
    for eta in eta_grid:
        rec, info = queue_agreement(eta, r, N, trials, seed)
        b = info["bound62"]
        out.append(BoundCheck(f"eta={_mtag(eta)}", rec, b, rec.p_hat >= b - 3 * rec.half_width, "lower"))
    return out


def run_trial_queue(eta_grid: Sequence[float], r: float, N: float, seed: int,
                    trial: int) -> TrialOutcome:
    """``A^m`` indicators of one stationary two-class sample per ``eta``."""
    flags, obs = {}, {}
    for eta in eta_grid:
        theta, m = agreement_parameters(eta, r, N)
        eps = r * N ** (-1.0 / 3.0)
        beta, alpha = rates_for_densities(0.5 - eps, 0.5 + eps)
        root = RngStream(int(seed), ("queue-bounds", _mtag(eta)))
        pair = sample_stationary_pair(root.derive(int(trial)), beta, alpha, m + 1)
        flags[f"A_m_eta{_mtag(eta)}"] = indicator_Am(pair, m)
        obs[f"idle_sum_eta{_mtag(eta)}"] = float(pair.idles[: m + 1].sum())
    return TrialOutcome("queue-bounds", seed, trial, {"N": N, "r": r}, flags, obs)


def run_trials_rw(alpha: float, beta: float, lam_grid: Sequence[float], horizon: int,
                  seed: int, lo: int, hi: int) -> list[TrialOutcome]:
    """Trials ``lo .. hi-1`` of the random-walk supremum check, batched."""
    if not 0.0 < beta < alpha < 1.0:
        raise ParameterError("need 0 < beta < alpha < 1")
    sups = random_walk_sups(RngStream(int(seed), ("rw-bound",)), alpha, beta, horizon, hi - lo, lo)
    out = []
    for t, s in zip(range(lo, hi), sups):
        flags = {f"sup_gt_{_mtag(l)}": bool(s > l) for l in lam_grid}
        out.append(TrialOutcome("rw-bound", seed, t, {"horizon": horizon}, flags, {"sup": float(s)}))
    return out


# --- run-level checks -----------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _strictly_decreasing(vals: Sequence[float]) -> bool:
    return all(a > b for a, b in zip(vals, vals[1:]))


def _slope(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    res = stats.linregress(np.asarray(x, float), np.asarray(y, float))
    return float(res.slope), float(res.stderr)


def nesting_violations(outcomes: Iterable[TrialOutcome], a: str, b: str) -> int:
    """Trials where ``a`` holds but ``b`` does not."""
    return sum(1 for o in outcomes if o.valid and a in o.flags and b in o.flags
               and o.flags[a] and not o.flags[b])


def localization_checks(outcomes: Sequence[TrialOutcome], M_grid: Sequence[float]) -> list[Check]:
    ex = [estimate(outcomes, f"exists_M{_mtag(M)}") for M in M_grid]
    al = [estimate(outcomes, f"all_M{_mtag(M)}") for M in M_grid]
    p = [e.p_hat for e in ex]
    out = [Check("exists-k tail strictly decreasing in M", _strictly_decreasing(p),
                 f"p_hat = {[round(v, 5) for v in p]}")]
    usable = [(M ** 3, math.log(v)) for M, v in zip(M_grid, p) if v > 0]
    if len(usable) >= 2:
        s, se = _slope(*zip(*usable))
        out.append(Check("ln P(exists) vs M^3 slope negative", s < 0, f"slope = {s:.4g} +- {se:.2g}"))
    else:
        out.append(Check("ln P(exists) vs M^3 slope negative", False, "fewer than 2 positive estimates"))
    bad = [M for M, a, e in zip(M_grid, al, ex) if a.p_hat > e.p_hat]
    out.append(Check("all-k estimate <= exists-k estimate", not bad, f"violations at M = {bad}"))
    return out


def tail_exponent(r_grid: Sequence[float], p: Sequence[float]) -> tuple[float, float]:
    """Fit ``-ln p = c r^gamma``: slope of ``ln(-ln p)`` on ``ln r``."""
    pts = [(math.log(r), math.log(-math.log(v))) for r, v in zip(r_grid, p) if 0 < v < 1 and r > 0]
    if len(pts) < 2:
        raise ParameterError("need two estimates strictly inside (0, 1)")
    return _slope(*zip(*pts))


def exit_tail_checks(outcomes: Sequence[TrialOutcome], r_grid: Sequence[float]) -> list[Check]:
    p = [estimate(outcomes, f"tail_r{_mtag(r)}").p_hat for r in r_grid]
    out = [Check("tail estimates strictly decreasing in r", _strictly_decreasing(p),
                 f"p_hat = {[round(v, 5) for v in p]}")]
    try:
        g, se = tail_exponent(r_grid, p)
        out.append(Check("log-tail exponent >= 2", g >= 2.0, f"gamma = {g:.4g} +- {se:.2g}"))
    except ParameterError as exc:
        out.append(Check("log-tail exponent >= 2", False, str(exc)))
    return out


def coalescence_checks(outcomes: Sequence[TrialOutcome]) -> list[Check]:
    v = nesting_violations(outcomes, "thm21_event", "thm25_event")
    return [Check("thm21 event implies thm25 event", v == 0, f"{v} violations")]


def exponent_check(deltas: Sequence[float], records: Sequence[EstimateRecord],
                   lo: float = 0.35, hi: float = 0.70) -> tuple[Check, Optional[ExponentFit]]:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fit = fit_exponent(deltas, records)
    except ParameterError as exc:
        return Check(f"failure exponent in [{lo}, {hi}]", False, str(exc)), None
    ok = lo <= fit.slope <= hi
    return Check(f"failure exponent in [{lo}, {hi}]", ok,
                 f"slope = {fit.slope:.4f} +- {fit.stderr:.4f} over delta = {list(fit.used)}"), fit


def bound_checks(checks: Sequence[BoundCheck]) -> list[Check]:
    out = []
    for c in checks:
        op = "<=" if c.direction == "upper" else ">="
        sign = "+" if c.direction == "upper" else "-"
        out.append(Check(f"{c.label}: p_hat {op} bound {sign} 3 CI", c.passed,
                         f"p_hat = {c.estimate.p_hat:.5g}, bound = {c.bound:.5g}, "
                         f"half-width = {c.estimate.half_width:.3g}"))
    return out


def rw_checks(outcomes: Sequence[TrialOutcome], alpha: float, beta: float,
              lam_grid: Sequence[float]) -> list[Check]:
    res = []
    for lam in lam_grid:
        rec = estimate(outcomes, f"sup_gt_{_mtag(lam)}")
        b = random_walk_sup_bound(alpha, beta, lam)
        res.append(BoundCheck(f"lambda={_mtag(lam)}", rec, b, rec.p_hat <= b + 3 * rec.half_width, "upper"))
    return bound_checks(res)


def queue_checks(outcomes: Sequence[TrialOutcome], eta_grid: Sequence[float]) -> list[Check]:
    res = []
    for eta in eta_grid:
        rec = estimate(outcomes, f"A_m_eta{_mtag(eta)}")
        b = 1.0 - 62.0 * math.sqrt(eta)
        res.append(BoundCheck(f"eta={_mtag(eta)}", rec, b, rec.p_hat >= b - 3 * rec.half_width, "lower"))
    return bound_checks(res)


def general_ic_checks(outcomes: Sequence[TrialOutcome], sigma: float,
                      q_max: float = 0.05) -> list[Check]:
    q = complement(estimate(outcomes, "ass22_event"))
    out = [Check(f"Q_hat <= {q_max} (sigma={_mtag(sigma)})", q.p_hat <= q_max, f"Q_hat = {q.p_hat:.4g}")]
    if sigma == 1.0:
        e = estimate(outcomes, "coal_event")
        out.append(Check("sigma=1 event within CI of 1", e.ci_lo <= 1.0 <= e.ci_hi,
                         f"p_hat = {e.p_hat:.4g}, CI = [{e.ci_lo:.4g}, {e.ci_hi:.4g}]"))
    return out


def prop62_checks(outcomes: Sequence[TrialOutcome], floor_: float = 0.35) -> list[Check]:
    e = estimate(outcomes, "H_minus_in_I")
    return [Check(f"P(H_minus in I_-) >= {floor_}", e.p_hat >= floor_, f"p_hat = {e.p_hat:.4g}")]
