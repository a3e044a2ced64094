"""Brute-force references and the deterministic self-test suite."""

from __future__ import annotations

import itertools
from typing import Iterator

import numpy as np

from .environment import RngStream, WeightField
from .experiments import Check
from .lpp import backtrack_geodesic, backward_passage_values, passage_time
from .queueing import cumulative_idle, sample_queue_input
from .stationary import build_axis_boundary, check_comparison


def up_right_paths(origin, target) -> Iterator[np.ndarray]:
    """Every up-right lattice path from ``origin`` to ``target``."""
    n1, n2 = target[0] - origin[0], target[1] - origin[1]
    n = n1 + n2
    for ups in itertools.combinations(range(n), n2):
        steps = np.zeros(n, dtype=np.int64)
        steps[list(ups)] = 1
        pts = np.zeros((n + 1, 2), dtype=np.int64)
        pts[1:, 0] = np.cumsum(1 - steps)
        pts[1:, 1] = np.cumsum(steps)
        yield pts + np.asarray(origin, dtype=np.int64)


def brute_force_lpp(weights: np.ndarray, origin, target) -> tuple[float, np.ndarray]:
    """Maximum path weight and the maximizing path, by enumeration."""
    best, arg = -np.inf, None
    for p in up_right_paths(origin, target):
        v = float(weights[p[:, 0], p[:, 1]].sum())
        if v > best:
            best, arg = v, p
    return best, arg


def _enumeration_check(stream: RngStream, fields: int = 50, size: int = 6) -> Check:
    worst, bad = 0.0, 0
    for k in range(fields):
        fld = WeightField(stream.derive(k), (0, 0), (size - 1, size - 1))
        tab = passage_time(fld, (0, 0), fld.hi)
        back = backward_passage_values(fld, (0, 0), fld.hi)
        for t in [(size - 1, size - 1), (size - 1, 2), (3, size - 1)]:
            v, p = brute_force_lpp(fld.weights, (0, 0), t)
            g = backtrack_geodesic(tab, t)
            worst = max(worst, abs(v - tab.value(t)))
            bad += not np.array_equal(g.sites, p)
        v, _ = brute_force_lpp(fld.weights, (0, 0), fld.hi)
        worst = max(worst, abs(back[0, 0] - v))
    return Check("DP and geodesics match 6x6 enumeration", worst <= 1e-12 and bad == 0,
                 f"max |diff| = {worst:.2e}, path mismatches = {bad}")


def _idle_check(stream: RngStream, windows: int = 100) -> Check:
    q = sample_queue_input(stream, 0.4, 0.6, 2000)
    u = stream.derive("windows").uniforms(0, windows)
    failures = 0
    for x in u:
        k = 1 + int(x * 1000)
        try:
            cumulative_idle(q, 0.0, k, k + 999)
        except ArithmeticError:
            failures += 1
    return Check("cumulative idle identity", failures == 0, f"{failures} mismatches in {windows} windows")


def _comparison_check(stream: RngStream, instances: int = 100, N: int = 30) -> Check:
    violations = held = 0
    for k in range(instances):
        s = stream.derive(k)
        fld = WeightField(s.derive("bulk"), (0, 0), (N, N))
        u = s.derive("pts").uniforms(0, 3)
        a = 1 + int(u[0] * (N - 2))
        p1 = (a, N)
        p2 = (min(N, a + 1 + int(u[1] * (N - a))), N - int(u[2] * N // 2))
        bnd = build_axis_boundary(s.derive("stationary"), 0.5, (0, 0), N)
        rep = check_comparison(fld, bnd, p1, p2)
        held += rep.precondition_held
        violations += not rep.inequality_held
    return Check("comparison lemma", violations == 0,
                 f"{violations} violations, precondition met in {held}/{instances}")


def self_test(seed: int = 20240101) -> list[Check]:
    root = RngStream(seed, ("self-test",))
    return [_enumeration_check(root.derive("enum")), _idle_check(root.derive("idle")),
            _comparison_check(root.derive("comparison"))]
