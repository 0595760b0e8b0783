import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from amopt.errors import OracleError, ShapeError
from amopt.numerics import finite_difference_gradient, matmul, relu, sigmoid, softmax_rows, tanh_act

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_matmul_identity(rng):
    m = rng.normal(size=(2, 2))
    assert np.array_equal(matmul(np.eye(2), m), m)


def test_matmul_hand_value():
    np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[1], [1]]), [[3], [7]])


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"2x3.*2x2"):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_matmul_associative(rng):
    for _ in range(20):
        a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(4, 5)), rng.normal(size=(5, 2))
        left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right)) <= 1e-9 * np.max(np.abs(left))


def test_sigmoid_values():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert abs(sigmoid(np.array([50.0]))[0] - 1.0) < 1e-9


@given(arrays(np.float64, 8, elements=finite))
def test_sigmoid_symmetry_and_range(x):
    s = sigmoid(x)
    np.testing.assert_allclose(s + sigmoid(-x), 1.0, atol=1e-15)
    # strict (0, 1) holds while e^-|x| is representable next to 1
    small = np.abs(x) < 30
    assert np.all((s[small] > 0) & (s[small] < 1))


@given(arrays(np.float64, 8, elements=st.floats(-15, 15)))
def test_tanh_odd_and_range(x):
    t = tanh_act(x)
    np.testing.assert_array_equal(tanh_act(-x), -t)
    assert np.all((t > -1) & (t < 1))


def test_tanh_values():
    assert tanh_act(np.array([0.0]))[0] == 0.0
    assert tanh_act(np.array([1.0]))[0] == pytest.approx(0.7615941559557649, abs=1e-15)


def test_relu():
    np.testing.assert_array_equal(relu(np.array([-3.0, 5.0])), [0.0, 5.0])
    np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])


def test_softmax_examples():
    np.testing.assert_allclose(softmax_rows(np.zeros((1, 3))), [[1 / 3] * 3], atol=1e-15)
    np.testing.assert_allclose(softmax_rows(np.array([[1000.0, 1000.0]])), [[0.5, 0.5]])
    np.testing.assert_allclose(softmax_rows(np.array([[0.0, math.log(3)]])), [[0.25, 0.75]], atol=1e-15)


@settings(max_examples=200)
@given(arrays(np.float64, (4, 6), elements=finite))
def test_softmax_rows_sum_to_one(x):
    s = softmax_rows(x)
    assert np.all(np.isfinite(s))
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)


def test_fd_sum_of_squares():
    g = finite_difference_gradient(lambda x: float(np.sum(x * x)), np.array([1.0, 2.0]), 1e-5)
    np.testing.assert_allclose(g, [2.0, 4.0], rtol=1e-6)


def test_fd_constant_and_linear(rng):
    x = rng.normal(size=(2, 3))
    np.testing.assert_array_equal(finite_difference_gradient(lambda z: 7.0, x), 0.0)
    c = rng.normal(size=(2, 3))
    for point in (x, 5 * x):
        np.testing.assert_allclose(finite_difference_gradient(lambda z: float(np.sum(c * z)), point), c, atol=1e-8)


def test_fd_quadratic_matches_analytic(rng):
    A = rng.normal(size=(5, 5))
    A = A @ A.T
    x = rng.normal(size=5)
    g = finite_difference_gradient(lambda z: float(z @ A @ z), x, 1e-5)
    exact = 2 * A @ x
    assert np.max(np.abs(g - exact)) <= 1e-6 * np.max(np.abs(exact))


def test_fd_nonfinite_raises():
    with pytest.raises(OracleError):
        finite_difference_gradient(lambda z: math.inf, np.zeros(2))
