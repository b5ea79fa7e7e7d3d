import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from radium import grad as ad
from radium.envs import FormationEnv


def test_square():
    assert ad.grad(lambda x: ad.sum(x * x), np.array([3.0]))[0] == 6.0


def test_disconnected_input_is_zero():
    tape = ad.Tape()
    x, y = tape.var(2.0), tape.var(5.0)
    out = x * 3.0
    gx, gy = ad.backward(tape, out, [x, y])
    assert gx == 3.0 and gy == 0.0


def test_elu_of_negated_input():
    g = ad.grad(lambda x: ad.sum(ad.elu(-x)), np.array([1.0]))[0]
    assert g == pytest.approx(-math.exp(-1.0), rel=1e-14)
    assert g == pytest.approx(-0.36788, abs=1e-5)


def test_constant_output_gives_zeros():
    tape = ad.Tape()
    x = tape.var(np.ones(3))
    (g,) = ad.backward(tape, 4.0, [x])
    np.testing.assert_array_equal(g, 0.0)


def test_non_scalar_output():
    tape = ad.Tape()
    x = tape.var(np.ones(3))
    with pytest.raises(ad.NonScalarOutput):
        ad.backward(tape, x * 2.0, [x])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_gradient_raises():
    with pytest.raises(ad.NaNGradient):
        ad.grad(lambda x: ad.sum(ad.sqrt(x - x)), np.array([1.0]))


def test_relu_kink_takes_a_side():
    g = ad.grad(lambda x: ad.sum(ad.relu(x)), np.array([0.0]))[0]
    assert g in (0.0, 1.0)


def test_check_gradient_quadratic():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    f = lambda x: 0.5 * ad.sum(x * ad.matvec(A, x)) + ad.sum(x)  # noqa: E731
    assert ad.check_gradient(f, np.array([0.3, -1.7])) < 1e-8


@pytest.mark.parametrize("h", [1e-8, 1e-2])
def test_check_gradient_step_range(h):
    with pytest.raises(ValueError):
        ad.check_gradient(lambda x: ad.sum(x), np.ones(2), h=h)


def test_check_gradient_propagates_failures():
    def f(x):
        raise ArithmeticError("simulator blew up")
    with pytest.raises(ArithmeticError):
        ad.check_gradient(f, np.ones(2))


vecs = arrays(np.float64, 4, elements=st.floats(-2, 2))


def _pieces(x):
    return (ad.sum(ad.sin(x) * ad.exp(0.3 * x)),
            ad.sum(ad.cos(x) / (2.0 + x * x)) + ad.logsumexp(x),
            ad.softmin(x * x, 5.0) + ad.sum(ad.sqrt(1.0 + x * x)))


@given(vecs, st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=40, deadline=None)
def test_linearity(x, a, b):
    for f, g in [(0, 1), (1, 2)]:
        ga = ad.grad(lambda v: _pieces(v)[f], x)
        gb = ad.grad(lambda v: _pieces(v)[g], x)
        gab = ad.grad(lambda v: a * _pieces(v)[f] + b * _pieces(v)[g], x)
        np.testing.assert_allclose(gab, a * ga + b * gb, rtol=1e-10, atol=1e-10)


@given(vecs)
@settings(max_examples=40, deadline=None)
def test_primitives_match_differences(x):
    for k in range(3):
        assert ad.check_gradient(lambda v: _pieces(v)[k], x) < 1e-6


def test_matrix_primitives_match_differences():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(3, 4))

    def f(v):
        A = ad.reshape(v, (4, 3))
        B = ad.matmul(M, A)  # (3, 3)
        C = ad.concatenate([B, ad.swapaxes(B, 0, 1)], axis=0)
        return ad.sum(ad.power(ad.abs(C) + 1.0, 1.5)) + ad.sum(ad.stack([B[0], B[:, 1]]) ** 2)

    assert ad.check_gradient(f, rng.normal(size=12)) < 1e-6


def test_softmax_softmin_are_stable_and_bounded():
    x = np.array([1000.0, 999.0, -1000.0])
    sm = float(ad.softmax(x, 20.0))
    assert math.isfinite(sm) and x.min() <= sm <= x.max() and abs(sm - 1000.0) < 1e-6
    assert abs(float(ad.softmin(x, 20.0)) + 1000.0) < 1e-6
    g = ad.grad(lambda v: ad.softmax(v, 20.0), x)
    assert np.all(np.isfinite(g)) and g.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# algebraic connectivity

P3 = np.array([[1.0, -1, 0], [-1, 2, -1], [0, -1, 1]])


def test_path_graph():
    assert float(ad.lambda2(P3)) == pytest.approx(1.0, abs=1e-12)
    expected = np.outer([1, 0, -1], [1, 0, -1]) / 2.0
    np.testing.assert_allclose(ad.grad_lambda2(P3), expected, atol=1e-12)


def test_lambda2_first_order_perturbation():
    rng = np.random.default_rng(3)
    E = rng.normal(size=(3, 3))
    E = E + E.T
    G = ad.grad_lambda2(P3)
    for t in (1e-4, 1e-5, 1e-6):
        diff = float(ad.lambda2(P3 + t * E)) - float(ad.lambda2(P3))
        assert abs(diff - t * np.sum(G * E)) < 10 * t * t * np.sum(E * E)


def test_complete_graph_is_degenerate():
    K5 = 5 * np.eye(5) - np.ones((5, 5))
    with pytest.raises(ad.DegenerateEigenvalue):
        ad.grad_lambda2(K5)
    sub = ad.lambda2_subgradient(K5)
    # average of v v^T over the 4-dimensional eigenspace = projector / 4
    np.testing.assert_allclose(sub, (np.eye(5) - np.ones((5, 5)) / 5) / 4, atol=1e-12)


def test_lambda2_backward_uses_subgradient_on_degeneracy():
    K5 = 5 * np.eye(5) - np.ones((5, 5))
    g = ad.grad(lambda L: ad.lambda2(L), K5)
    np.testing.assert_allclose(g, ad.lambda2_subgradient(K5), atol=1e-12)


def test_grad_lambda2_rejects_asymmetric():
    with pytest.raises(ValueError):
        ad.grad_lambda2(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_tape_grows_linearly_with_horizon():
    sizes = []
    for T in (10, 20, 30):
        env = FormationEnv(horizon=T)
        tape = ad.Tape()
        th = tape.var(env.theta0)
        env.cost(th, np.zeros(env.dim_phi))
        sizes.append(len(tape))
    assert sizes[2] - sizes[1] == sizes[1] - sizes[0] > 0
