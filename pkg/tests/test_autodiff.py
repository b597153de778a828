"""Tape mechanics: recording, straight-through exactness, gradient routing."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pluralfill import nd


def test_constant_inputs_stay_off_tape():
    a = nd.Array(np.ones((2, 2), np.float32))
    out = nd.add(nd.mul(a, a), 3.0)
    assert out.tape is None
    np.testing.assert_array_equal(out.data, np.full((2, 2), 4.0, np.float32))


def test_mixed_tapes_raise():
    t1, t2 = nd.Tape(), nd.Tape()
    a = t1.leaf(np.ones(2, np.float32))
    b = t2.leaf(np.ones(2, np.float32))
    with pytest.raises(nd.TapeError):
        nd.add(a, b)


def test_backward_requires_scalar():
    tape = nd.Tape()
    x = tape.leaf(np.ones((2, 2), np.float32), trainable=True)
    with pytest.raises(nd.TapeError):
        nd.backward(nd.mul(x, x))


def test_stop_gradient_blocks_flow():
    tape = nd.Tape()
    x = tape.leaf(np.array([3.0], np.float32), trainable=True)
    y = nd.sum_(nd.mul(x, nd.stop_gradient(x)))  # treated as x * const(x)
    g = nd.backward(y)
    np.testing.assert_allclose(g[x], [3.0])


def test_stop_gradient_forward_is_bit_exact():
    rng = np.random.default_rng(0)
    tape = nd.Tape()
    x = tape.leaf(rng.normal(size=(5, 5)).astype(np.float32) * 1e6)
    s = nd.stop_gradient(x)
    assert np.array_equal(s.data, x.data)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_straight_through_forward_bits_equal_target(seed):
    # pathological magnitudes included: an f32 add/sub detour would lose bits
    rng = np.random.default_rng(seed)
    scale = 10.0 ** rng.integers(-6, 9)
    tape = nd.Tape()
    z = tape.leaf((rng.normal(size=(3, 4)) * scale).astype(np.float32), trainable=True)
    q = tape.leaf(rng.normal(size=(3, 4)).astype(np.float32))
    out = nd.straight_through(z, q)
    assert np.array_equal(out.data, q.data)


def test_straight_through_routes_gradient_to_first_operand():
    rng = np.random.default_rng(1)
    tape = nd.Tape()
    z = tape.leaf(rng.normal(size=(4,)).astype(np.float32), trainable=True)
    q = tape.leaf(rng.normal(size=(4,)).astype(np.float32), trainable=True)
    coef = np.array([1.0, 2.0, 3.0, 4.0], np.float32)
    g = nd.backward(nd.sum_(nd.mul(nd.straight_through(z, q), coef)))
    np.testing.assert_allclose(g[z], coef)  # as if forward had been z
    np.testing.assert_array_equal(g[q], np.zeros(4, np.float32))


def test_straight_through_chains_through_downstream_ops():
    # gradient through tanh(st(z, q)) must use q's value in the local slope
    tape = nd.Tape()
    z = tape.leaf(np.array([100.0], np.float32), trainable=True)
    q = tape.leaf(np.array([0.5], np.float32))
    g = nd.backward(nd.sum_(nd.tanh(nd.straight_through(z, q))))
    expect = 1.0 - np.tanh(0.5) ** 2
    np.testing.assert_allclose(g[z], [expect], rtol=1e-6)


def test_parent_buffers_survive_backward():
    # vjps may alias saved data; accumulation must not corrupt forward buffers
    tape = nd.Tape()
    x = tape.leaf(np.array([1.0, 2.0], np.float32), trainable=True)
    y = nd.add(x, x)
    before = y.data.copy()
    nd.backward(nd.sum_(nd.add(y, y)))
    np.testing.assert_array_equal(y.data, before)
    g = nd.backward(nd.sum_(nd.add(y, y)))
    np.testing.assert_allclose(g[x], [4.0, 4.0])


def test_trainable_leaf_remains_writable():
    # optimizers update parameters in place between steps
    tape = nd.Tape()
    x = tape.leaf(np.zeros(3, np.float32), trainable=True)
    nd.backward(nd.sum_(nd.mul(x, x)))
    x.data += 1.0
    np.testing.assert_array_equal(x.data, np.ones(3, np.float32))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100, width=32), min_size=1, max_size=8))
def test_sum_gradient_is_ones(vals):
    tape = nd.Tape()
    x = tape.leaf(np.array(vals, np.float32), trainable=True)
    g = nd.backward(nd.sum_(x))
    np.testing.assert_array_equal(g[x], np.ones(len(vals), np.float32))
