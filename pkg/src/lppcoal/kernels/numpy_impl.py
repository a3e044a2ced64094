"""Vectorized numpy twins of the numba kernels.

Grid recurrences sweep antidiagonals, since every cell on level l depends only
on level l-1. The two scalar recurrences (single-queue Lindley, backtracking)
stay as plain loops: they have no vectorized form that keeps results
bit-identical to the compiled path.
"""

from __future__ import annotations

import numpy as np

E1 = np.uint8(0)
E2 = np.uint8(1)
START = np.uint8(2)
NONE = np.uint8(3)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_SCALE = 2.0 ** -53


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _C1
    z = (z ^ (z >> np.uint64(27))) * _C2
    return z ^ (z >> np.uint64(31))


def _uniform(key, counter):
    h = _mix64(np.uint64(key) ^ _mix64(counter * _GOLDEN + _GOLDEN))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * _SCALE


def uniform_seq(key, start, n):
    ctr = (np.int64(start) + np.arange(n, dtype=np.int64)).astype(np.uint64)
    return _uniform(key, ctr)


def uniform_block(key, lo1, lo2, n1, n2):
    a = ((np.int64(lo1) + np.arange(n1, dtype=np.int64)) & 0xFFFFFFFF).astype(np.uint64)
    b = ((np.int64(lo2) + np.arange(n2, dtype=np.int64)) & 0xFFFFFFFF).astype(np.uint64)
    ctr = (a[:, None] << np.uint64(32)) | b[None, :]
    return _uniform(key, ctr)


def _levels(n1, n2, start=0):
    for lev in range(start, n1 + n2 - 1):
        ii = np.arange(max(0, lev - n2 + 1), min(lev, n1 - 1) + 1)
        yield ii, lev - ii


def _neighbors(arr, ii, jj, fill):
    """Values of arr at (i-1, j) and (i, j-1), padded with ``fill``."""
    left = np.full(ii.shape, fill, dtype=arr.dtype)
    down = np.full(ii.shape, fill, dtype=arr.dtype)
    m = ii > 0
    left[m] = arr[ii[m] - 1, jj[m]]
    m = jj > 0
    down[m] = arr[ii[m], jj[m] - 1]
    return left, down


def fill_lpp(w, G, D, fixed):
    n1, n2 = w.shape
    for ii, jj in _levels(n1, n2):
        free = ~fixed[ii, jj]
        ii, jj = ii[free], jj[free]
        if ii.size == 0:
            continue
        a, b = _neighbors(G, ii, jj, -np.inf)
        dead = np.isneginf(a) & np.isneginf(b)
        from_e1 = a > b
        G[ii, jj] = np.where(dead, -np.inf, w[ii, jj] + np.where(from_e1, a, b))
        D[ii, jj] = np.where(dead, NONE, np.where(from_e1, E1, E2))


def fill_lpp_labeled(w, G, D, fixed, labels, missing):
    fill_lpp(w, G, D, fixed)
    propagate_labels(D, labels, fixed, missing)


def backtrack(D, ei, ej):
    sites = []
    i, j = int(ei), int(ej)
    while True:
        sites.append((i, j))
        d = D[i, j]
        if d == E1:
            i -= 1
        elif d == E2:
            j -= 1
        else:
            break
    return np.array(sites[::-1], dtype=np.int64).reshape(-1, 2)


def _pull(arr, D, ii, jj):
    """Value of arr at the predecessor of each cell (undefined where none)."""
    d = D[ii, jj]
    pi = np.where(d == E1, ii - 1, ii)
    pj = np.where(d == E2, jj - 1, jj)
    has = (d == E1) | (d == E2)
    pi = np.where(has, pi, 0)
    pj = np.where(has, pj, 0)
    return arr[pi, pj], has, pi, pj


def propagate_labels(D, labels, fixed, missing):
    n1, n2 = D.shape
    for ii, jj in _levels(n1, n2):
        free = ~fixed[ii, jj]
        ii, jj = ii[free], jj[free]
        if ii.size == 0:
            continue
        val, has, _, _ = _pull(labels, D, ii, jj)
        labels[ii, jj] = np.where(has, val, missing)


def propagate_any(D, mask):
    n1, n2 = D.shape
    hit = np.zeros((n1, n2), dtype=np.bool_)
    for ii, jj in _levels(n1, n2):
        val, has, _, _ = _pull(hit, D, ii, jj)
        hit[ii, jj] = mask[ii, jj] | (has & val)
    return hit


def coalescence_levels(DA, DB, stop, floor):
    n1, n2 = DA.shape
    cp = np.full((n1, n2), -1, dtype=np.int64)
    for ii, jj in _levels(n1, n2, start=max(floor, 0)):
        da, db = DA[ii, jj], DB[ii, jj]
        prev, has, pi, pj = _pull(cp, DA, ii, jj)
        here = ii + jj
        follow = (here > floor) & (da == db) & has & ~stop[pi, pj]
        out = np.where(follow, prev, here)
        out[(da == NONE) | (db == NONE) | stop[ii, jj]] = -1
        cp[ii, jj] = out
    return cp


def order_violations(DA, DB):
    n1, n2 = DA.shape
    bad = np.zeros((n1, n2), dtype=np.bool_)
    for ii, jj in _levels(n1, n2):
        da, db = DA[ii, jj], DB[ii, jj]
        prev, has, _, _ = _pull(bad, DA, ii, jj)
        bad[ii, jj] = np.where(da == db, has & prev, (da == E2) & (db == E1))
    return bad


def lindley(w0, s, a):
    n = a.shape[0]
    w = np.empty(n + 1, dtype=np.float64)
    e = np.empty(n, dtype=np.float64)
    cur = float(w0)
    w[0] = cur
    for t in range(n):
        x = cur + float(s[t]) - float(a[t])
        if x > 0.0:
            cur = x
            e[t] = 0.0
        else:
            cur = 0.0
            e[t] = 0.0 - x
        w[t + 1] = cur
    return w, e


def lindley_final(w0, s, a):
    w = np.array(w0, dtype=np.float64)
    for t in range(a.shape[1]):
        w = np.maximum(w + s[:, t] - a[:, t], 0.0)
    return w


def running_sup(x):
    return np.cumsum(x, axis=1).max(axis=1)
