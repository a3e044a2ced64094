"""Loop kernels compiled with numba.

Every kernel here has a vectorized twin in ``numpy_impl`` with identical
outputs. Direction codes: 0 = from -e1, 1 = from -e2, 2 = start/fixed,
3 = unreachable.
"""

from __future__ import annotations

import numpy as np
from numba import njit

E1 = np.uint8(0)
E2 = np.uint8(1)
START = np.uint8(2)
NONE = np.uint8(3)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_LOW32 = np.int64(0xFFFFFFFF)
_SCALE = 2.0 ** -53


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _C1
    z = (z ^ (z >> np.uint64(27))) * _C2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _uniform(key, counter):
    h = _mix64(key ^ _mix64(counter * _GOLDEN + _GOLDEN))
    return (np.float64(h >> np.uint64(11)) + 0.5) * _SCALE


@njit(cache=True)
def uniform_seq(key, start, n):
    out = np.empty(n, dtype=np.float64)
    for t in range(n):
        out[t] = _uniform(key, np.uint64(start + t))
    return out


@njit(cache=True)
def uniform_block(key, lo1, lo2, n1, n2):
    out = np.empty((n1, n2), dtype=np.float64)
    for a in range(n1):
        hi = np.uint64((lo1 + a) & _LOW32) << np.uint64(32)
        for b in range(n2):
            ctr = hi | np.uint64((lo2 + b) & _LOW32)
            out[a, b] = _uniform(key, ctr)
    return out


@njit(cache=True)
def fill_lpp(w, G, D, fixed):
    # branch-free max keeps the inner loop free of unpredictable jumps
    n1, n2 = w.shape
    neg = -np.inf
    for i in range(n1):
        left = neg
        for j in range(n2):
            if fixed[i, j]:
                left = G[i, j]
                continue
            a = G[i - 1, j] if i > 0 else neg
            c = a > left
            m = a if c else left
            d = E1 if c else E2
            if m == neg:
                d = NONE
            left = w[i, j] + m
            G[i, j] = left
            D[i, j] = d


@njit(cache=True)
def fill_lpp_labeled(w, G, D, fixed, labels, missing):
    """``fill_lpp`` that also carries each cell's label from its predecessor."""
    n1, n2 = w.shape
    neg = -np.inf
    for i in range(n1):
        left = neg
        lab_left = missing
        for j in range(n2):
            if fixed[i, j]:
                left = G[i, j]
                lab_left = labels[i, j]
                continue
            a = G[i - 1, j] if i > 0 else neg
            c = a > left
            if c:
                m = a
                d = E1
                lab = labels[i - 1, j]
            else:
                m = left
                d = E2
                lab = lab_left
            if m == neg:
                d = NONE
                lab = missing
            left = w[i, j] + m
            lab_left = lab
            G[i, j] = left
            D[i, j] = d
            labels[i, j] = lab


@njit(cache=True)
def backtrack(D, ei, ej):
    n = ei + ej + 1
    ii = np.empty(n, dtype=np.int64)
    jj = np.empty(n, dtype=np.int64)
    i, j, k = ei, ej, 0
    while True:
        ii[k] = i
        jj[k] = j
        k += 1
        d = D[i, j]
        if d == E1:
            i -= 1
        elif d == E2:
            j -= 1
        else:
            break
    out = np.empty((k, 2), dtype=np.int64)
    for t in range(k):
        out[t, 0] = ii[k - 1 - t]
        out[t, 1] = jj[k - 1 - t]
    return out


@njit(cache=True)
def propagate_labels(D, labels, fixed, missing):
    n1, n2 = D.shape
    for i in range(n1):
        for j in range(n2):
            if fixed[i, j]:
                continue
            d = D[i, j]
            if d == E1:
                labels[i, j] = labels[i - 1, j]
            elif d == E2:
                labels[i, j] = labels[i, j - 1]
            else:
                labels[i, j] = missing


@njit(cache=True)
def propagate_any(D, mask):
    n1, n2 = D.shape
    hit = np.zeros((n1, n2), dtype=np.bool_)
    for i in range(n1):
        for j in range(n2):
            if mask[i, j]:
                hit[i, j] = True
                continue
            d = D[i, j]
            if d == E1:
                hit[i, j] = hit[i - 1, j]
            elif d == E2:
                hit[i, j] = hit[i, j - 1]
    return hit


@njit(cache=True)
def coalescence_levels(DA, DB, stop, floor):
    """Level of the lowest common bulk site of the two paths into each cell,
    clamped below at ``floor``; -1 where undefined. Cells under ``floor`` are
    skipped, so a high floor restricts the sweep to a thin band."""
    n1, n2 = DA.shape
    cp = np.full((n1, n2), -1, dtype=np.int64)
    for i in range(n1):
        for j in range(max(0, floor - i), n2):
            da = DA[i, j]
            db = DB[i, j]
            if da == NONE or db == NONE or stop[i, j]:
                continue
            if i + j == floor or da != db or da == START:
                cp[i, j] = i + j
            elif da == E1:
                cp[i, j] = i + j if stop[i - 1, j] else cp[i - 1, j]
            else:
                cp[i, j] = i + j if stop[i, j - 1] else cp[i, j - 1]
    return cp


@njit(cache=True)
def order_violations(DA, DB):
    n1, n2 = DA.shape
    bad = np.zeros((n1, n2), dtype=np.bool_)
    for i in range(n1):
        for j in range(n2):
            da = DA[i, j]
            db = DB[i, j]
            if da == db:
                if da == E1:
                    bad[i, j] = bad[i - 1, j]
                elif da == E2:
                    bad[i, j] = bad[i, j - 1]
            elif da == E2 and db == E1:
                bad[i, j] = True
    return bad


@njit(cache=True)
def lindley(w0, s, a):
    n = a.shape[0]
    w = np.empty(n + 1, dtype=np.float64)
    e = np.empty(n, dtype=np.float64)
    w[0] = w0
    for t in range(n):
        x = w[t] + s[t] - a[t]
        if x > 0.0:
            w[t + 1] = x
            e[t] = 0.0
        else:
            w[t + 1] = 0.0
            e[t] = 0.0 - x
    return w, e


@njit(cache=True)
def lindley_final(w0, s, a):
    out = np.empty(a.shape[0], dtype=np.float64)
    for r in range(a.shape[0]):
        w = w0[r]
        for t in range(a.shape[1]):
            x = w + s[r, t] - a[r, t]
            w = x if x > 0.0 else 0.0
        out[r] = w
    return out


@njit(cache=True)
def running_sup(x):
    out = np.empty(x.shape[0], dtype=np.float64)
    for r in range(x.shape[0]):
        acc = 0.0
        best = -np.inf
        for t in range(x.shape[1]):
            acc += x[r, t]
            if acc > best:
                best = acc
        out[r] = best
    return out
