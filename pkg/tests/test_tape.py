import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kegnnflow.engine import tape as T
from kegnnflow.engine.gradcheck import grad_check, grad_check_params, relative_error
from kegnnflow.engine.tape import Tape, backward
from kegnnflow.errors import ContractError, DimensionError, DivergenceError, ScatterIndexError

OP_TOLERANCE = 1e-4


def away_from_zero(rng, shape, low=0.2, high=2.0):
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(low, high, size=shape)


def finite_rows(max_rows=6, max_cols=6):
    return st.tuples(st.integers(1, max_rows), st.integers(1, max_cols)).flatmap(
        lambda shape: arrays(np.float64, shape, elements=st.floats(-30.0, 30.0, allow_nan=False))
    )


def test_matmul_identity_and_scalar():
    tape = Tape()
    m = np.arange(12.0).reshape(3, 4)
    out = T.matmul(tape.constant(np.eye(3)), tape.constant(m))
    np.testing.assert_array_equal(out.value, m)
    assert T.matmul(tape.constant(2.0), tape.constant(3.0)).value[0, 0] == 6.0


def test_matmul_shape_mismatch_names_both_shapes():
    tape = Tape()
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(tape.constant(np.ones((2, 3))), tape.constant(np.ones((2, 3))))


def test_matmul_gradient_against_finite_differences():
    rng = np.random.default_rng(0)
    b = rng.uniform(-2, 2, size=(4, 2))
    errors = grad_check_params(
        lambda tape, p: T.sum_all(T.mul(T.matmul(p["a"], p["b"]), tape.constant(np.arange(6.0).reshape(3, 2)))),
        {"a": rng.uniform(-2, 2, size=(3, 4)), "b": b},
    )
    assert max(errors.values()) <= OP_TOLERANCE


UNARY_CASES = {
    "relu": (T.relu, "signed"),
    "leaky_relu": (lambda x: T.leaky_relu(x, 0.2), "signed"),
    "exp": (T.exp, "any"),
    "log": (T.log, "positive"),
    "sqrt": (T.sqrt, "positive"),
    "neg": (T.neg, "any"),
    "scale": (lambda x: T.scale(x, -1.7), "any"),
    "softplus": (T.softplus, "any"),
    "sigmoid": (T.sigmoid, "any"),
    "softmax": (T.rowwise_softmax, "any"),
    "log_softmax": (T.log_softmax, "any"),
    "mean_rows": (T.mean_rows, "any"),
}


@pytest.mark.parametrize("name", sorted(UNARY_CASES))
def test_unary_op_gradients(name):
    op, domain = UNARY_CASES[name]
    rng = np.random.default_rng(sorted(UNARY_CASES).index(name))
    if domain == "positive":
        x = rng.uniform(0.3, 2.0, size=(4, 3))
    elif domain == "signed":
        x = away_from_zero(rng, (4, 3))
    else:
        x = rng.uniform(-2.0, 2.0, size=(4, 3))
    weights = rng.normal(size=op(Tape().constant(x)).shape)
    err = grad_check(lambda tape, v: T.sum_all(T.mul(op(v), tape.constant(weights))), x)
    assert err <= OP_TOLERANCE


@pytest.mark.parametrize("kind", ["add", "sub", "mul", "div"])
@pytest.mark.parametrize("b_shape", [(4, 3), (1, 3), (4, 1), (1, 1)])
def test_binary_op_gradients_with_broadcasting(kind, b_shape):
    rng = np.random.default_rng(3)
    a = rng.uniform(-2, 2, size=(4, 3))
    b = away_from_zero(rng, b_shape, 0.5, 2.0)
    weights = rng.normal(size=(4, 3))
    errors = grad_check_params(
        lambda tape, p: T.sum_all(T.mul(T.elementwise(kind, p["a"], p["b"]), tape.constant(weights))),
        {"a": a, "b": b},
    )
    assert max(errors.values()) <= OP_TOLERANCE


def test_broadcast_row_add_matches_numpy_and_reduces_gradient():
    tape = Tape()
    a = tape.leaf(np.ones((3, 2)), requires_grad=True, name="a")
    b = tape.leaf([[10.0, 20.0]], requires_grad=True, name="b")
    out = T.add(a, b)
    np.testing.assert_array_equal(out.value, np.ones((3, 2)) + [[10.0, 20.0]])
    grads = backward(T.sum_all(out))
    np.testing.assert_array_equal(grads["b"], [[3.0, 3.0]])
    np.testing.assert_array_equal(grads["a"], np.ones((3, 2)))


def test_incompatible_broadcast_is_dimension_error():
    tape = Tape()
    with pytest.raises(DimensionError):
        T.add(tape.constant(np.ones((3, 4))), tape.constant(np.ones((2, 4))))


def test_add_zero_and_relu_definition():
    tape = Tape()
    a = tape.constant([[1.5, -2.0]])
    np.testing.assert_array_equal(T.add(a, tape.constant(0.0)).value, a.value)
    np.testing.assert_array_equal(T.relu(tape.constant([[-1.0, 2.0]])).value, [[0.0, 2.0]])


def test_softmax_examples():
    tape = Tape()
    np.testing.assert_allclose(T.rowwise_softmax(tape.constant([[0.0, 0.0, 0.0]])).value, [[1 / 3] * 3], atol=1e-15)
    assert T.rowwise_softmax(tape.constant([[42.0]])).value[0, 0] == 1.0
    expected = [math.exp(v) / sum(math.exp(u) for u in (1, 2, 3)) for v in (1, 2, 3)]
    np.testing.assert_allclose(T.rowwise_softmax(tape.constant([[1.0, 2.0, 3.0]])).value[0], expected, rtol=1e-12)


def test_softmax_survives_large_preactivations():
    tape = Tape()
    out = T.rowwise_softmax(tape.constant([[500.0, -500.0, 0.0]]))
    np.testing.assert_allclose(out.value, [[1.0, 0.0, 0.0]], atol=1e-200)


def test_softmax_rejects_empty_matrix():
    with pytest.raises(DimensionError):
        T.rowwise_softmax(Tape().constant(np.zeros((2, 0))))


@settings(max_examples=60, deadline=None)
@given(finite_rows(), st.floats(-50.0, 50.0, allow_nan=False))
def test_softmax_rows_sum_to_one_and_ignore_row_shift(z, shift):
    tape = Tape()
    out = T.rowwise_softmax(tape.constant(z)).value
    shifted = T.rowwise_softmax(tape.constant(z + shift)).value
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(out, shifted, atol=1e-9)


def test_sigmoid_examples():
    tape = Tape()
    assert T.sigmoid(tape.constant(0.0)).value[0, 0] == 0.5
    assert T.sigmoid(tape.constant(2.0)).value[0, 0] == pytest.approx(1.0 / (1.0 + math.exp(-2.0)), rel=1e-15)
    t = T.sigmoid(tape.constant([[1.3, -1.3]])).value[0]
    assert t[0] == pytest.approx(1.0 - t[1], abs=1e-15)
    saturated = T.sigmoid(tape.constant([[-800.0, 800.0]])).value[0]
    assert saturated[0] >= 0.0 and saturated[1] == 1.0


def brute_force_scatter(src, index, out_rows):
    out = np.zeros((out_rows, src.shape[1]))
    for j, i in enumerate(index):
        for c in range(src.shape[1]):
            out[i, c] += src[j, c]
    return out


def test_scatter_add_rows_examples():
    tape = Tape()
    src = tape.constant([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(T.scatter_add_rows(src, [0, 1], 2).value, src.value)
    np.testing.assert_array_equal(T.scatter_add_rows(src, [0, 0], 3).value, [[4.0, 6.0], [0.0, 0.0], [0.0, 0.0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 32), st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_scatter_add_rows_matches_brute_force(rows, out_rows, cols, seed):
    rng = np.random.default_rng(seed)
    src = rng.normal(size=(rows, cols))
    index = rng.integers(out_rows, size=rows)
    out = T.scatter_add_rows(Tape().constant(src), index, out_rows).value
    np.testing.assert_allclose(out, brute_force_scatter(src, index, out_rows), atol=1e-12)


def test_scatter_add_rows_bad_index_names_row():
    with pytest.raises(ScatterIndexError, match="第 1 行"):
        T.scatter_add_rows(Tape().constant(np.ones((2, 1))), [0, 5], 3)


def test_gather_and_take_cols_gradients():
    rng = np.random.default_rng(5)
    x = rng.uniform(-2, 2, size=(5, 4))
    w1 = rng.normal(size=(6, 4))
    w2 = rng.normal(size=(5, 3))
    assert grad_check(lambda tape, v: T.sum_all(T.mul(T.gather_rows(v, [0, 2, 2, 4, 1, 0]), tape.constant(w1))), x) <= OP_TOLERANCE
    assert grad_check(lambda tape, v: T.sum_all(T.mul(T.take_cols(v, [3, 0, 3]), tape.constant(w2))), x) <= OP_TOLERANCE


def test_concat_cols_gradient():
    rng = np.random.default_rng(6)
    weights = rng.normal(size=(3, 5))
    errors = grad_check_params(
        lambda tape, p: T.sum_all(T.mul(T.concat_cols([p["a"], p["b"]]), tape.constant(weights))),
        {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=(3, 3))},
    )
    assert max(errors.values()) <= OP_TOLERANCE


def test_backward_twice_accumulates_double_gradient():
    tape = Tape()
    x = tape.leaf([[1.0, -2.0], [0.5, 3.0]], requires_grad=True, name="x")
    w = tape.constant([[2.0, 1.0], [0.0, -1.0]])
    loss = T.sum_all(T.mul(T.matmul(x, w), x))
    first = backward(loss)["x"].copy()
    second = backward(loss)["x"]
    np.testing.assert_array_equal(second, 2.0 * first)
    tape.zero_grad()
    np.testing.assert_array_equal(x.grad, np.zeros((2, 2)))


def test_backward_requires_scalar_loss():
    tape = Tape()
    x = tape.leaf(np.ones((2, 2)), requires_grad=True, name="x")
    with pytest.raises(ContractError):
        backward(T.scale(x, 2.0))


def test_nodes_from_different_tapes_do_not_mix():
    with pytest.raises(ContractError):
        T.add(Tape().constant(1.0), Tape().constant(1.0))


def test_non_finite_forward_is_divergence():
    tape = Tape()
    with pytest.raises(DivergenceError):
        T.log(tape.constant([[1.0, 0.0]]))
    with pytest.raises(DivergenceError):
        T.div(tape.constant(1.0), tape.constant(0.0))


def test_grad_check_requires_scalar_function_and_eps_range():
    with pytest.raises(ContractError):
        grad_check(lambda tape, v: v, np.ones((2, 2)))
    with pytest.raises(ContractError):
        grad_check(lambda tape, v: T.sum_all(v), np.ones((2, 2)), eps=0.5)


def test_grad_check_detects_wrong_backward():
    def wrong_square(x):
        value = x.value * x.value

        def _backward(g):
            return (g * x.value,)  # 少了因子 2

        return x.tape.record(value, "wrong_square", (x,), _backward)

    err = grad_check(lambda tape, v: T.sum_all(wrong_square(v)), np.array([[1.0, 2.0]]))
    assert err == pytest.approx(0.5, rel=1e-6)


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([1e-9])) == pytest.approx(1e-3)
