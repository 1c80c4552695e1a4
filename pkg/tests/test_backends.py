"""The compiled and pure-Python kernel backends must agree bit for bit.

Every comparison here is on raw float64 bytes, not approximate equality:
which backend is active must never change a result.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

pyref = pytest.importorskip("spur.kernels.pyref")
fast = pytest.importorskip("spur.kernels._fast")

shapes = st.tuples(st.integers(1, 6), st.integers(1, 6))
seeds = st.integers(0, 2**32 - 1)


def random_matrix(shape, seed, lo=-20.0, hi=20.0):
    return np.random.default_rng(seed).uniform(lo, hi, shape)


def same_bits(a, b):
    if isinstance(a, tuple):
        return all(same_bits(x, y) for x, y in zip(a, b))
    if isinstance(a, float):
        return np.float64(a).tobytes() == np.float64(b).tobytes()
    return a.shape == b.shape and a.tobytes() == b.tobytes()


@settings(deadline=None)
@given(shapes, seeds)
def test_softmax_rows_bitwise(shape, seed):
    x = random_matrix(shape, seed)
    assert same_bits(pyref.softmax_rows(x), fast.softmax_rows(x))


@settings(deadline=None)
@given(shapes, seeds)
def test_softmax_backward_bitwise(shape, seed):
    x = random_matrix(shape, seed)
    dy = random_matrix(shape, seed + 1)
    y = fast.softmax_rows(x)
    assert same_bits(
        pyref.softmax_rows_backward(y, dy), fast.softmax_rows_backward(y, dy)
    )


@settings(deadline=None)
@given(shapes, seeds)
def test_cross_entropy_bitwise(shape, seed):
    n, k = shape
    logits = random_matrix((n, k), seed)
    labels = np.random.default_rng(seed + 1).integers(0, k, n).astype(np.intp)
    la, pa = pyref.cross_entropy_mean(logits, labels)
    lb, pb = fast.cross_entropy_mean(logits, labels)
    assert same_bits(la, lb) and same_bits(pa, pb)
    assert same_bits(
        pyref.cross_entropy_mean_backward(pa, labels, 0.37),
        fast.cross_entropy_mean_backward(pb, labels, 0.37),
    )


@settings(deadline=None)
@given(st.tuples(st.integers(1, 6), st.integers(2, 6)), seeds)
def test_layer_norm_bitwise(shape, seed):
    x = random_matrix(shape, seed)
    gain = random_matrix((1, shape[1]), seed + 1)
    bias = random_matrix((1, shape[1]), seed + 2)
    dy = random_matrix(shape, seed + 3)
    outs_a = pyref.layer_norm_rows(x, gain, bias, 1e-5)
    outs_b = fast.layer_norm_rows(x, gain, bias, 1e-5)
    assert same_bits(outs_a, outs_b)
    _, xhat, inv = outs_b
    assert same_bits(
        pyref.layer_norm_rows_backward(xhat, inv, gain, dy),
        fast.layer_norm_rows_backward(xhat, inv, gain, dy),
    )


@settings(deadline=None)
@given(shapes, seeds)
def test_reductions_bitwise(shape, seed):
    x = random_matrix(shape, seed, lo=-1e6, hi=1e6)
    assert same_bits(pyref.sum_all(x), fast.sum_all(x))
    assert same_bits(pyref.sum_rows(x), fast.sum_rows(x))
    assert same_bits(pyref.sum_cols(x), fast.sum_cols(x))
    assert same_bits(pyref.mean_all(x), fast.mean_all(x))


@settings(deadline=None)
@given(shapes, seeds, st.integers(1, 500))
def test_adam_step_bitwise(shape, seed, t):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(shape)
    g = rng.standard_normal(shape)
    m = rng.standard_normal(shape) * 0.1
    v = np.abs(rng.standard_normal(shape)) * 0.01
    mask = (rng.random(shape) > 0.3).astype(np.float64)
    b1, b2 = 0.9, 0.999
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    wa, ma, va = w.copy(), m.copy(), v.copy()
    wb, mb, vb = w.copy(), m.copy(), v.copy()
    pyref.adam_step(wa, g, ma, va, mask, 1e-3, b1, b2, 1e-8, c1, c2)
    fast.adam_step(wb, g, mb, vb, mask, 1e-3, b1, b2, 1e-8, c1, c2)
    assert same_bits(wa, wb) and same_bits(ma, mb) and same_bits(va, vb)
    # Masked entries and their moments must not have moved at all.
    frozen = mask == 0.0
    assert np.array_equal(wa[frozen], w[frozen])
    assert np.array_equal(ma[frozen], m[frozen])
    assert np.array_equal(va[frozen], v[frozen])
