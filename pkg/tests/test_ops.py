import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from spgat import ops
from spgat.errors import DegenerateBatchError, LabelError, ShapeError
from spgat.gradcheck import check_gradients
from spgat.tensor import Tape, Tensor, backward

from oracles import (atrous_conv_loops, cross_entropy_mp, linear_loops, pointwise_loops,
                     softmax_mp)

RNG = np.random.default_rng(2024)


def _t(a, grad=False):
    return Tensor(np.asarray(a, dtype=float), requires_grad=grad)


# ------------------------------------------------------------ atrous conv

def test_atrous_identity_kernel():
    x = RNG.normal(size=(2, 1, 6, 2, 3))
    w = np.array([[[0.0, 1.0, 0.0]]])
    for rate in (1, 3, 9):
        y = ops.atrous_conv_spectral(_t(x), _t(w), _t([0.0]), rate)
        np.testing.assert_array_equal(y.data, x)


def test_atrous_hand_expansion():
    x = np.array([1.0, 2, 3, 4, 5]).reshape(1, 1, 5, 1, 1)
    y = ops.atrous_conv_spectral(_t(x), _t([[[1.0, 0.0, 1.0]]]), _t([0.0]), rate=2)
    np.testing.assert_array_equal(y.data.ravel(), [3, 4, 6, 2, 3])


@pytest.mark.parametrize("rate", [1, 12, 24, 36])
def test_atrous_matches_loop_oracle_paper_rates(rate):
    x = RNG.normal(size=(2, 3, 16, 2, 2))
    w = RNG.normal(size=(4, 3, 3))
    b = RNG.normal(size=4)
    y = ops.atrous_conv_spectral(_t(x), _t(w), _t(b), rate)
    np.testing.assert_allclose(y.data, atrous_conv_loops(x, w, b, rate), rtol=0, atol=1e-12)


def test_atrous_wide_rate_is_allowed():
    # every off-centre tap lands in padding, leaving only the centre tap
    x = RNG.normal(size=(1, 1, 4, 1, 1))
    w = RNG.normal(size=(1, 1, 3))
    y = ops.atrous_conv_spectral(_t(x), _t(w), _t([0.5]), rate=40)
    np.testing.assert_allclose(y.data, x * w[0, 0, 1] + 0.5)


def test_atrous_longer_kernel_and_circular_padding():
    x = RNG.normal(size=(2, 2, 9, 1, 3))
    w = RNG.normal(size=(3, 2, 5))
    b = RNG.normal(size=3)
    for circular in (False, True):
        y = ops.atrous_conv_spectral(_t(x), _t(w), _t(b), 2,
                                     padding="circular" if circular else "zeros")
        np.testing.assert_allclose(y.data, atrous_conv_loops(x, w, b, 2, circular), atol=1e-12)


def test_circular_shift_equivariance():
    x = RNG.normal(size=(1, 2, 10, 2, 2))
    w = RNG.normal(size=(3, 2, 3))
    b = np.zeros(3)
    y = ops.atrous_conv_spectral(_t(x), _t(w), _t(b), 1, padding="circular").data
    for k in (1, 4, 7):
        ys = ops.atrous_conv_spectral(_t(np.roll(x, k, axis=2)), _t(w), _t(b), 1,
                                      padding="circular").data
        np.testing.assert_allclose(ys, np.roll(y, k, axis=2), atol=1e-12)


@pytest.mark.parametrize("w_shape,b_shape,K_even", [((2, 3, 3), (2,), False),
                                                    ((2, 1, 2), (2,), True),
                                                    ((2, 1, 3), (3,), False)])
def test_atrous_shape_errors(w_shape, b_shape, K_even):
    x = _t(np.zeros((1, 1, 5, 1, 1)))
    with pytest.raises(ShapeError):
        ops.atrous_conv_spectral(x, _t(np.ones(w_shape)), _t(np.zeros(b_shape)), 1)


# -------------------------------------------------------------- pointwise

def test_pointwise_identity_and_sum():
    x = RNG.normal(size=(2, 3, 4, 2, 2))
    y = ops.conv_pointwise(_t(x), _t(np.eye(3)), _t(np.zeros(3)))
    np.testing.assert_array_equal(y.data, x)
    ab = RNG.normal(size=(1, 2, 3, 2, 2))
    y = ops.conv_pointwise(_t(ab), _t([[1.0, 1.0]]), _t([0.0]))
    np.testing.assert_allclose(y.data[:, 0], ab[:, 0] + ab[:, 1])


def test_pointwise_matches_loop_oracle():
    x = RNG.normal(size=(2, 3, 5, 2, 3))
    w = RNG.normal(size=(4, 3))
    b = RNG.normal(size=4)
    y = ops.conv_pointwise(_t(x), _t(w), _t(b))
    np.testing.assert_allclose(y.data, pointwise_loops(x, w, b), rtol=0, atol=1e-12)


def test_pointwise_shape_error():
    with pytest.raises(ShapeError):
        ops.conv_pointwise(_t(np.zeros((1, 2, 3, 1, 1))), _t(np.zeros((4, 3))), _t(np.zeros(4)))


# ------------------------------------------------------------- batch norm

def test_batch_norm_train_normalises():
    x = RNG.normal(loc=3.0, scale=2.0, size=(4, 3, 5, 2, 2))
    state = ops.BatchNormState.fresh(3)
    y = ops.batch_norm(_t(x), _t(np.ones(3)), _t(np.zeros(3)), state, training=True).data
    per = y.transpose(1, 0, 2, 3, 4).reshape(3, -1)
    np.testing.assert_allclose(per.mean(1), 0.0, atol=1e-6)
    var = per.var(1)
    expected = x.transpose(1, 0, 2, 3, 4).reshape(3, -1).var(1)
    # the only deviation from unit variance is the eps term
    np.testing.assert_allclose(var, expected / (expected + 1e-5), atol=1e-12)
    np.testing.assert_allclose(var, 1.0, atol=1e-5)


def test_batch_norm_constant_channel_is_zero():
    x = np.full((2, 1, 3, 2, 2), 7.5)
    y = ops.batch_norm(_t(x), _t([1.0]), _t([0.0]), ops.BatchNormState.fresh(1), training=True)
    np.testing.assert_allclose(y.data, 0.0, atol=1e-12)


def test_batch_norm_eval_matches_train_with_exact_stats():
    x = RNG.normal(size=(3, 2, 4, 2, 2)) * 1.7 - 0.4
    gamma, beta = RNG.normal(size=2), RNG.normal(size=2)
    train = ops.batch_norm(_t(x), _t(gamma), _t(beta), ops.BatchNormState.fresh(2), True)
    flat = x.transpose(1, 0, 2, 3, 4).reshape(2, -1)
    state = ops.BatchNormState(flat.mean(1), flat.var(1))
    ev = ops.batch_norm(_t(x), _t(gamma), _t(beta), state, training=False)
    np.testing.assert_allclose(ev.data, train.data, atol=1e-10)


def test_batch_norm_running_stats_update():
    x = RNG.normal(size=(2, 2, 3, 1, 1))
    state = ops.BatchNormState.fresh(2)
    ops.batch_norm(_t(x), _t(np.ones(2)), _t(np.zeros(2)), state, True, momentum=0.25)
    flat = x.transpose(1, 0, 2, 3, 4).reshape(2, -1)
    np.testing.assert_allclose(state.running_mean, 0.25 * flat.mean(1))
    np.testing.assert_allclose(state.running_var, 0.75 + 0.25 * flat.var(1))
    before = state.copy()
    ops.batch_norm(_t(x), _t(np.ones(2)), _t(np.zeros(2)), state, False)
    np.testing.assert_array_equal(state.running_mean, before.running_mean)
    np.testing.assert_array_equal(state.running_var, before.running_var)


def test_batch_norm_degenerate_batch():
    with pytest.raises(DegenerateBatchError):
        ops.batch_norm(_t(np.ones((1, 2, 1, 1, 1))), _t(np.ones(2)), _t(np.zeros(2)),
                       ops.BatchNormState.fresh(2), training=True)
    # eval mode has no such restriction
    ops.batch_norm(_t(np.ones((1, 2, 1, 1, 1))), _t(np.ones(2)), _t(np.zeros(2)),
                   ops.BatchNormState.fresh(2), training=False)


# ---------------------------------------------------------- activations

def test_leaky_relu_definition():
    np.testing.assert_array_equal(ops.leaky_relu(_t([-1.0, 0.0, 2.0]), 0.2).data, [-0.2, 0, 2])
    np.testing.assert_array_equal(ops.leaky_relu(_t([-3.0, 4.0]), 0.0).data, [0, 4])
    np.testing.assert_array_equal(ops.relu(_t([-3.0, 4.0])).data, [0, 4])


@pytest.mark.parametrize("slope", [-0.1, 1.0])
def test_leaky_relu_slope_range(slope):
    with pytest.raises(ValueError):
        ops.leaky_relu(_t([1.0]), slope)


def test_leaky_relu_gradient_at_minus_one():
    x = _t([-1.0])
    rep = check_gradients(lambda: ops.sum(ops.leaky_relu(x, 0.2)), {"x": x})[0]
    assert rep.rel_error < 1e-6
    np.testing.assert_allclose(x.grad, [0.2])


def test_sigmoid_is_stable_for_large_inputs():
    y = ops.sigmoid(_t([-800.0, 0.0, 800.0])).data
    np.testing.assert_array_equal(y, [0.0, 0.5, 1.0])


# -------------------------------------------------------------- pooling

def test_pool_definition():
    x = RNG.normal(size=(2, 3, 1, 2, 2))
    np.testing.assert_array_equal(ops.adaptive_avg_pool_spectral(_t(x)).data, x)
    v = np.array([1.0, 2.0, 3.0]).reshape(1, 1, 3, 1, 1)
    assert ops.adaptive_avg_pool_spectral(_t(v)).data.item() == 2.0


def test_pool_matches_summation_oracle():
    x = RNG.normal(size=(2, 2, 7, 3, 2))
    y = ops.adaptive_avg_pool_spectral(_t(x)).data
    oracle = np.zeros((2, 2, 1, 3, 2))
    for s in range(7):
        oracle[:, :, 0] += x[:, :, s]
    np.testing.assert_allclose(y, oracle / 7, rtol=0, atol=1e-12)


def test_repeat_spectral():
    x = RNG.normal(size=(1, 2, 1, 2, 2))
    y = ops.repeat_spectral(_t(x), 4).data
    assert y.shape == (1, 2, 4, 2, 2)
    for s in range(4):
        np.testing.assert_array_equal(y[:, :, s], x[:, :, 0])
    with pytest.raises(ShapeError):
        ops.repeat_spectral(_t(np.zeros((1, 1, 2, 1, 1))), 3)


# -------------------------------------------------------------- softmax

def test_softmax_closed_forms():
    np.testing.assert_allclose(ops.softmax(_t(np.zeros((1, 4)))).data, [[0.25] * 4])
    np.testing.assert_allclose(ops.softmax(_t([[0.0, math.log(3.0)]])).data, [[0.25, 0.75]],
                               rtol=1e-15)


def test_softmax_large_entries_match_extended_precision():
    row = np.array([1e4, 0.0, 9999.0, -5.0])
    y = ops.softmax(_t(row[None])).data[0]
    assert abs(y.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(y, softmax_mp(row), rtol=1e-13, atol=1e-300)


def test_softmax_random_rows_match_extended_precision():
    x = RNG.normal(scale=5.0, size=(6, 9))
    y = ops.softmax(_t(x)).data
    for r in range(6):
        np.testing.assert_allclose(y[r], softmax_mp(x[r]), rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=6),
                  elements=st.floats(-50, 50)),
       st.floats(-1e3, 1e3))
def test_softmax_rows_sum_to_one_and_shift_invariant(x, c):
    y = ops.softmax(_t(x)).data
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(ops.softmax(_t(x + c)).data, y, atol=1e-12)


# --------------------------------------------------------------- linear

def test_linear_closed_forms():
    x = RNG.normal(size=(3, 4))
    np.testing.assert_array_equal(ops.linear(_t(x), _t(np.eye(4)), _t(np.zeros(4))).data, x)
    np.testing.assert_array_equal(ops.linear(_t([3.0, 1.0]), _t([[1.0, -1.0]])).data, [2.0])


def test_linear_matches_loop_oracle():
    x = RNG.normal(size=(2, 3, 5))
    w = RNG.normal(size=(4, 5))
    b = RNG.normal(size=4)
    y = ops.linear(_t(x), _t(w), _t(b)).data
    np.testing.assert_allclose(y, linear_loops(x, w, b), rtol=0, atol=1e-12)


def test_linear_shape_error():
    with pytest.raises(ShapeError):
        ops.linear(_t(np.zeros((2, 3))), _t(np.zeros((4, 2))))


# --------------------------------------------------------- cross entropy

def test_cross_entropy_closed_forms():
    assert ops.cross_entropy(_t(np.zeros((2, 4))), [0, 3]).item() == pytest.approx(math.log(4),
                                                                                    rel=1e-15)
    v = ops.cross_entropy(_t([[10.0, -10.0]]), [0]).item()
    assert v == pytest.approx(math.log1p(math.exp(-20.0)), rel=1e-9)
    assert v == pytest.approx(2.06e-9, rel=1e-2)


def test_cross_entropy_matches_extended_precision():
    logits = RNG.normal(scale=4.0, size=(7, 5))
    labels = RNG.integers(0, 5, size=7)
    v = ops.cross_entropy(_t(logits), labels).item()
    assert abs(v - cross_entropy_mp(logits, labels)) < 1e-10


@pytest.mark.parametrize("labels", [[0, 3], [-1, 0]])
def test_cross_entropy_label_range(labels):
    with pytest.raises(LabelError):
        ops.cross_entropy(_t(np.zeros((2, 3))), labels)


# ------------------------------------------------------- misc primitives

def test_broadcast_gradients_reduce_to_input_shape():
    a = _t(RNG.normal(size=(3, 4)), grad=True)
    b = _t(RNG.normal(size=(4,)), grad=True)
    with Tape() as tape:
        loss = ops.sum(ops.mul(a, b))
    backward(tape, loss)
    np.testing.assert_allclose(b.grad, a.data.sum(0))
    np.testing.assert_allclose(a.grad, np.broadcast_to(b.data, (3, 4)))


def test_matmul_batched_against_einsum():
    a = RNG.normal(size=(2, 3, 4))
    b = RNG.normal(size=(2, 4, 5))
    np.testing.assert_allclose(ops.matmul(_t(a), _t(b)).data, np.einsum("bij,bjk->bik", a, b))


def test_take_and_concat():
    x = RNG.normal(size=(2, 3, 4))
    np.testing.assert_array_equal(ops.take(_t(x), 2, axis=1).data, x[:, 2])
    y = ops.concat([_t(x), _t(x[:, :1])], axis=1).data
    np.testing.assert_array_equal(y, np.concatenate([x, x[:, :1]], axis=1))


def test_forward_is_bitwise_deterministic():
    x = RNG.normal(size=(2, 3, 8, 2, 2))
    w = RNG.normal(size=(4, 3, 3))
    b = RNG.normal(size=4)
    y1 = ops.atrous_conv_spectral(_t(x), _t(w), _t(b), 2).data
    y2 = ops.atrous_conv_spectral(_t(x), _t(w), _t(b), 2).data
    assert y1.tobytes() == y2.tobytes()
