"""The numba and numpy kernels must agree bit for bit."""

import numpy as np
import pytest

from lppcoal.kernels import load

nb, npy = load("numba"), load("numpy")
START, NONE = nb.START, nb.NONE


def _inputs(n1, n2, key=99):
    w = -np.log(npy.uniform_block(np.uint64(key), 0, 0, n1, n2))
    G = np.zeros((n1, n2))
    D = np.full((n1, n2), NONE, dtype=np.uint8)
    fixed = np.zeros((n1, n2), dtype=np.bool_)
    fixed[0, 0] = True
    D[0, 0] = START
    G[0, 0] = w[0, 0]
    return w, G, D, fixed


def test_uniform_streams_identical():
    k = np.uint64(0xDEADBEEF)
    assert np.array_equal(nb.uniform_seq(k, 10, 1000), npy.uniform_seq(k, 10, 1000))
    assert np.array_equal(nb.uniform_block(k, -3, 5, 17, 9), npy.uniform_block(k, -3, 5, 17, 9))


@pytest.mark.parametrize("shape", [(1, 1), (1, 7), (9, 1), (23, 31)])
def test_fill_and_backtrack_identical(shape):
    w, G, D, fixed = _inputs(*shape)
    G1, D1, G2, D2 = G.copy(), D.copy(), G.copy(), D.copy()
    nb.fill_lpp(w, G1, D1, fixed)
    npy.fill_lpp(w, G2, D2, fixed)
    assert np.array_equal(G1, G2) and np.array_equal(D1, D2)
    e = (shape[0] - 1, shape[1] - 1)
    assert np.array_equal(nb.backtrack(D1, *e), npy.backtrack(D2, *e))


def test_labeled_fill_identical():
    w, G, D, fixed = _inputs(30, 25)
    labels = np.full(w.shape, -1, dtype=np.int64)
    labels[0, 0] = 4
    fixed[3, 2] = True
    G[3, 2], D[3, 2], labels[3, 2] = 50.0, START, 9
    out = []
    for mod in (nb, npy):
        g, d, lab = G.copy(), D.copy(), labels.copy()
        mod.fill_lpp_labeled(w, g, d, fixed, lab, np.int64(-1))
        out.append((g, d, lab))
    for a, b in zip(*out):
        assert np.array_equal(a, b)
    assert set(np.unique(out[0][2])) <= {4, 9}


def test_queue_kernels_identical():
    k = np.uint64(3)
    s = -np.log(npy.uniform_seq(k, 0, 5001)) / 0.6
    a = -np.log(npy.uniform_seq(k, 9000, 5000)) / 0.4
    for x, y in zip(nb.lindley(0.7, s, a), npy.lindley(0.7, s, a)):
        assert np.array_equal(x, y)
    S = -np.log(npy.uniform_block(k, 0, 0, 40, 300))
    A = -np.log(npy.uniform_block(k, 50, 0, 40, 300))
    w0 = np.linspace(0, 2, 40)
    assert np.allclose(nb.lindley_final(w0, S, A), npy.lindley_final(w0, S, A), rtol=0, atol=1e-12)
    X = S - A
    assert np.allclose(nb.running_sup(X), npy.running_sup(X), rtol=0, atol=1e-9)


def test_label_and_order_kernels_identical():
    w, G, D, fixed = _inputs(20, 20)
    nb.fill_lpp(w, G, D, fixed)
    w2, G2, D2, fixed2 = _inputs(20, 20, key=100)
    nb.fill_lpp(w2, G2, D2, fixed2)
    mask = np.zeros(D.shape, dtype=np.bool_)
    mask[5, 3] = mask[2, 9] = True
    assert np.array_equal(nb.propagate_any(D, mask), npy.propagate_any(D, mask))
    assert np.array_equal(nb.order_violations(D, D2), npy.order_violations(D, D2))
    stop = np.zeros(D.shape, dtype=np.bool_)
    assert np.array_equal(nb.coalescence_levels(D, D2, stop, 0), npy.coalescence_levels(D, D2, stop, 0))
    lab = np.arange(400, dtype=np.int64).reshape(20, 20)
    l1, l2 = lab.copy(), lab.copy()
    nb.propagate_labels(D, l1, fixed, np.int64(-1))
    npy.propagate_labels(D, l2, fixed, np.int64(-1))
    assert np.array_equal(l1, l2)


def test_backend_env_flag(monkeypatch):
    from lppcoal import _backend
    monkeypatch.setenv(_backend.ENV_FLAG, "numpy")
    assert _backend.active_backend() == "numpy"
    monkeypatch.setenv(_backend.ENV_FLAG, "cuda")
    with pytest.raises(ValueError):
        _backend.requested_backend()
