"""Single-server queue machinery behind the two-density coupling.

Indexing: customers ``0..n``. ``services[j]`` is ``s_j`` for ``j = 0..n`` and
``arrivals[j-1]`` is ``a_j`` for ``j = 1..n``. The recursion runs

    w_j = (w_{j-1} + s_{j-1} - a_j)^+,  e_j = (w_{j-1} + s_{j-1} - a_j)^-,
    d_j = e_j + s_j,

with ``x^+ = max(x, 0)`` and ``x^- = max(-x, 0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .environment import BoundsError, DomainError, ParameterError, RngStream
from .lpp import PassageTable


def check_rates(beta: float, alpha: float) -> None:
    if not 0.0 < beta < alpha:
        raise ParameterError(f"need 0 < beta < alpha for a stable queue, got beta={beta}, alpha={alpha}")


@dataclass(frozen=True)
class QueueInput:
    arrivals: np.ndarray  # a_1..a_n
    services: np.ndarray  # s_0..s_n

    def __post_init__(self) -> None:
        a = np.ascontiguousarray(self.arrivals, dtype=np.float64)
        s = np.ascontiguousarray(self.services, dtype=np.float64)
        if s.shape != (a.shape[0] + 1,):
            raise ParameterError("services must hold one more entry (s_0) than arrivals")
        if (a <= 0).any() or (s <= 0).any():
            raise ParameterError("inter-arrival and service times must be positive")
        object.__setattr__(self, "arrivals", a)
        object.__setattr__(self, "services", s)

    @property
    def n(self) -> int:
        return self.arrivals.shape[0]


@dataclass(frozen=True)
class QueueTrace:
    waits: np.ndarray       # w_0..w_n
    idles: np.ndarray       # e_1..e_n
    departures: np.ndarray  # d_1..d_n


@dataclass(frozen=True)
class CoupledIncrementPair:
    """Departures over services: ``upper[i] = idles[i] + lower[i]``."""

    upper: np.ndarray
    lower: np.ndarray
    idles: np.ndarray
    beta: float
    alpha: float

    def __len__(self) -> int:
        return len(self.upper)


def _check_w(w_init: float) -> float:
    w_init = float(w_init)
    if not w_init >= 0.0:
        raise ParameterError(f"initial wait must be >= 0, got {w_init}")
    return w_init


def lindley_waits(q: QueueInput, w_init: float) -> np.ndarray:
    w, _ = kernels.lindley(_check_w(w_init), q.services, q.arrivals)
    return w


def departures(q: QueueInput, w_init: float) -> QueueTrace:
    w, e = kernels.lindley(_check_w(w_init), q.services, q.arrivals)
    return QueueTrace(w, e, e + q.services[1:])


def cumulative_idle(q: QueueInput, w_init: float, k: int, l: int, rtol: float = 1e-9) -> float:
    """Idle time of customers ``k..l`` via the running-infimum identity.

    The value is cross-checked against the direct sum of the trace's idle
    times; disagreement beyond ``rtol`` raises ``ArithmeticError``.
    """
    if k > l:
        raise DomainError(f"empty window k={k} > l={l}")
    if k < 1 or l > q.n:
        raise BoundsError(f"window {k}..{l} outside customers 1..{q.n}")
    trace = departures(q, w_init)
    x = q.services[k - 1: l] - q.arrivals[k - 1: l]  # x_k..x_l
    low = trace.waits[k - 1] + np.cumsum(x)
    value = max(-float(low.min()), 0.0)
    direct = float(np.sum(trace.idles[k - 1: l]))
    scale = float(np.sum(np.abs(x))) + trace.waits[k - 1]
    if abs(value - direct) > rtol * max(scale, direct, 1.0):
        raise ArithmeticError(f"idle identity broken: {value!r} vs {direct!r}")
    return value


# --- stationary sampling -------------------------------------------------

def stationary_wait_quantile(u: float | np.ndarray, beta: float, alpha: float):
    """Inverse CDF of the stationary wait: atom ``1 - beta/alpha`` at 0, else Exp(alpha - beta)."""
    check_rates(beta, alpha)
    ratio = beta / alpha
    u = np.asarray(u, dtype=np.float64)
    tail = np.maximum(1.0 - u, 1e-300)
    w = np.where(u <= 1.0 - ratio, 0.0, np.log(ratio / tail) / (alpha - beta))
    return np.maximum(w, 0.0)


def sample_queue_input(stream: RngStream, beta: float, alpha: float, n: int) -> QueueInput:
    check_rates(beta, alpha)
    if n < 1:
        raise ParameterError("need at least one customer")
    a = stream.derive("arrivals").exponentials(beta, 1, n)
    s = stream.derive("services").exponentials(alpha, 0, n + 1)
    return QueueInput(a, s)


def sample_stationary_wait(stream: RngStream, beta: float, alpha: float) -> float:
    u = stream.derive("w0").uniforms(0, 1)[0]
    return float(stationary_wait_quantile(u, beta, alpha))


def burn_in_wait(stream: RngStream, beta: float, alpha: float, steps: int = 10_000) -> float:
    """Wait after ``steps`` customers of an initially empty queue."""
    q = sample_queue_input(stream.derive("burn-in"), beta, alpha, steps)
    return float(lindley_waits(q, 0.0)[-1])


def sample_stationary_pair(stream: RngStream, beta: float, alpha: float, n: int,
                           init: str = "exact") -> CoupledIncrementPair:
    """Departures and services of a stationary queue: a draw from the two-class law."""
    check_rates(beta, alpha)
    if init == "exact":
        w0 = sample_stationary_wait(stream, beta, alpha)
    elif init == "burn-in":
        w0 = burn_in_wait(stream, beta, alpha)
    else:
        raise ParameterError(f"init must be 'exact' or 'burn-in', got {init!r}")
    q = sample_queue_input(stream, beta, alpha, n)
    tr = departures(q, w0)
    return CoupledIncrementPair(tr.departures, q.services[1:], tr.idles, beta, alpha)


def rates_for_densities(rho_minus: float, rho_plus: float) -> tuple[float, float]:
    """Queue rates ``(beta, alpha) = (1 - rho_plus, 1 - rho_minus)``.

    The departures then carry the e1-increments of density ``rho_plus``
    (Exp(1 - rho_plus)) and the services those of ``rho_minus``.
    """
    if not 0.0 < rho_minus < rho_plus < 1.0:
        raise ParameterError("need 0 < rho_minus < rho_plus < 1")
    return 1.0 - rho_plus, 1.0 - rho_minus


def indicator_Am(pair: CoupledIncrementPair, m: int) -> bool:
    """All of the first ``m + 1`` coupled increments agree (no idle time)."""
    if m < 0:
        raise ParameterError("m must be >= 0")
    if m >= len(pair.idles):
        raise BoundsError(f"m = {m} needs a pair longer than {len(pair.idles)}")
    return bool(np.all(pair.idles[: m + 1] == 0.0))


def final_waits(stream: RngStream, beta: float, alpha: float, trials: int, steps: int,
                init: str, start: int = 0, chunk: int = 2000) -> np.ndarray:
    """Waits after ``steps`` customers for independent queues ``start .. start+trials-1``.

    ``init='exact'`` starts each queue from the stationary law, ``'empty'`` from 0.
    """
    check_rates(beta, alpha)
    out = np.empty(trials)
    sa, ss, sw = stream.derive("arrivals"), stream.derive("services"), stream.derive("w0")
    for lo in range(0, trials, chunk):
        n = min(chunk, trials - lo)
        rows = start + lo
        a = -np.log(kernels.uniform_block(np.uint64(sa.key), rows, 0, n, steps)) / beta
        s = -np.log(kernels.uniform_block(np.uint64(ss.key), rows, 0, n, steps)) / alpha
        if init == "exact":
            w0 = stationary_wait_quantile(sw.uniforms(rows, n), beta, alpha)
        elif init == "empty":
            w0 = np.zeros(n)
        else:
            raise ParameterError(f"init must be 'exact' or 'empty', got {init!r}")
        out[lo: lo + n] = kernels.lindley_final(np.ascontiguousarray(w0), s, a)
    return out


# --- B-field -------------------------------------------------------------

def b_field(table: PassageTable, sites) -> list[tuple[tuple[int, int], int, float]]:
    """Edge increments ``B_{x, x+e_k} = G(x+e_k) - G(x)`` along a lattice path.

    ``sites`` is any nearest-neighbour sequence (down-right or up-right). Each
    step yields ``(x, k, B)`` with the edge written in its positive direction.
    """
    pts = [(int(p[0]), int(p[1])) for p in sites]
    out = []
    for p, q in zip(pts, pts[1:]):
        d = (q[0] - p[0], q[1] - p[1])
        if d in ((1, 0), (0, 1)):
            x, y = p, q
        elif d in ((-1, 0), (0, -1)):
            x, y = q, p
        else:
            raise DomainError(f"{p} -> {q} is not a lattice step")
        k = 1 if y[0] != x[0] else 2
        out.append((x, k, table.value(y) - table.value(x)))
    return out


# --- bound formulas ------------------------------------------------------

def lemma59_lower_bound(m: int, r: float, N: float, theta: float) -> float:
    """Right side of the two-density agreement bound, transcribed term by term.

    The second term enters with a plus sign exactly as printed; with that sign
    the value always exceeds 1 - 2rN^{-1/3}/(1/2 + rN^{-1/3}).
    """
    if m < 1:
        raise ParameterError("m must be >= 1")
    eps = r * N ** (-1.0 / 3.0)
    rho_plus = 0.5 + eps
    if not 0.0 < theta < rho_plus:
        raise ParameterError(f"need 0 < theta < rho_plus = {rho_plus}")
    denom = 0.25 - (eps * eps + 2.0 * eps * theta + theta * theta)
    if denom <= 0:
        raise ParameterError("denominator 1/4 - (r^2 N^{-2/3} + 2 r N^{-1/3} theta + theta^2) must be positive")
    bracket = 1.0 + (2.0 * eps * theta + theta * theta) / denom
    lead = 1.0 - 2.0 * eps / (0.5 + eps)
    return lead + (0.5 - eps) / (0.5 + eps) * bracket ** m / (1.0 + 2.0 * theta / eps)


def agreement_parameters(eta: float, r: float, N: float) -> tuple[float, int]:
    """``theta = eta^{-1/2} r N^{-1/3}`` and ``m = floor(eta r^{-2} N^{2/3})``."""
    if not (eta > 0 and r > 0 and N > 0):
        raise ParameterError("eta, r and N must be positive")
    return eta ** -0.5 * r * N ** (-1.0 / 3.0), int(math.floor(eta * N ** (2.0 / 3.0) / r ** 2 + 1e-9))


def agreement_limit(eta: float) -> float:
    """Large-N limit of the bound: ``1 - e^{4 + 8 sqrt(eta)} sqrt(eta) / (1 + 2 sqrt(eta))``."""
    s = math.sqrt(eta)
    return 1.0 - math.exp(4.0 + 8.0 * s) * s / (1.0 + 2.0 * s)


def random_walk_sup_bound(alpha: float, beta: float, lam: float) -> float:
    """``(beta/alpha) exp(-(alpha - beta) lam)``."""
    check_rates(beta, alpha)
    return beta / alpha * math.exp(-(alpha - beta) * lam)


def random_walk_sups(stream: RngStream, alpha: float, beta: float, horizon: int,
                     trials: int, start: int = 0, chunk: int = 200) -> np.ndarray:
    """``max_{1<=i<=horizon} S_i`` with increments Exp(alpha) - Exp(beta), one per trial."""
    check_rates(beta, alpha)
    sx, sy = stream.derive("rw-X"), stream.derive("rw-Y")
    out = np.empty(trials)
    for lo in range(0, trials, chunk):
        n = min(chunk, trials - lo)
        x = -np.log(kernels.uniform_block(np.uint64(sx.key), start + lo, 0, n, horizon)) / alpha
        y = -np.log(kernels.uniform_block(np.uint64(sy.key), start + lo, 0, n, horizon)) / beta
        out[lo: lo + n] = kernels.running_sup(x - y)
    return out
