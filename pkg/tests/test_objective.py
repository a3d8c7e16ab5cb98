import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scalar_model
from sparsact.exceptions import BoundUnavailable, InfeasibleY
from sparsact.linalg import CompletionData, PlantModel, inner, solve_are
from sparsact.objective import (
    MultiplierState,
    eval_F,
    eval_f,
    eval_g,
    grad_F,
    grad_f,
    hessian_quadratic_form,
    prox_group_rows,
    sublevel_bounds,
)
from sparsact.problems import random_stable_model, synthetic_completion


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def feasible_point(model, rng, scale=0.05):
    are = solve_are(model)
    Y0 = are.K @ are.X
    for _ in range(50):
        Y = Y0 + scale * crandn(rng, *Y0.shape)
        try:
            eval_f(model, Y)
            return Y
        except InfeasibleY:
            scale /= 2
    return Y0


def fd_directional(fun, Y, D, h=1e-6):
    return (fun(Y + h * D) - fun(Y - h * D)) / (2 * h)


class TestScalar:
    """x(y) = 1 - y, f(y) = (1 - y) + y^2 / (1 - y)."""

    def test_values(self, scalar):
        assert eval_f(scalar, [[0.0]]) == pytest.approx(1.0)
        assert eval_f(scalar, [[0.5]]) == pytest.approx(1.0)

    def test_gradient(self, scalar):
        # f'(y) = -1 + (2y(1-y) + y^2) / (1-y)^2 = 2 at y = 1/2
        assert grad_f(scalar, [[0.5]])[0, 0].real == pytest.approx(2.0)

    def test_hessian(self, scalar):
        # f''(y) = 2 / (1-y)^3 = 16 at y = 1/2
        assert hessian_quadratic_form(scalar, [[0.5]], [[1.0]]) == pytest.approx(16.0)

    def test_optimum(self, scalar):
        are = solve_are(scalar)
        Y = are.K @ are.X
        assert eval_f(scalar, Y) == pytest.approx(2 * (np.sqrt(2) - 1), rel=1e-14)
        assert abs(grad_f(scalar, Y)[0, 0]) < 1e-12

    def test_infeasible(self, scalar):
        with pytest.raises(InfeasibleY):
            eval_f(scalar, [[1.5]])
        with pytest.raises(InfeasibleY):
            eval_f(scalar, [[1.0]])

    def test_sublevel_bounds(self, scalar):
        b = sublevel_bounds(scalar, 1.0)
        # nu = 2^2/4 * (1 + 1)^-2; M(y) = -y; B(y) = 2y
        assert b.nu == pytest.approx(0.25)
        assert b.norm_M == pytest.approx(1.0, rel=1e-8)
        assert b.norm_B == pytest.approx(2.0, rel=1e-8)
        assert b.L_a == pytest.approx(72.0, rel=1e-8)
        assert b.mu_a == pytest.approx(2 / 9, rel=1e-8)


class TestGradients:
    @pytest.mark.parametrize("seed", range(6))
    def test_grad_f_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        model = random_stable_model(seed, 6, 3, complex_=True)
        Y = feasible_point(model, rng)
        G = grad_f(model, Y)
        for _ in range(3):
            D = crandn(rng, *Y.shape)
            fd = fd_directional(lambda Z: eval_f(model, Z), Y, D)
            assert inner(G, D) == pytest.approx(fd, rel=1e-6, abs=1e-9)

    @pytest.mark.parametrize("seed", range(4))
    def test_grad_F_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        inst = synthetic_completion(seed, 5, "random_sym", density=0.5)
        model, data = inst.model, inst.data
        Lam = crandn(rng, 5, 5)
        mult = MultiplierState(Lam + Lam.conj().T, 3.0)
        Y = feasible_point(model, rng)
        G = grad_F(model, data, Y, mult)
        D = crandn(rng, *Y.shape)
        fd = fd_directional(lambda Z: eval_F(model, data, Z, mult), Y, D)
        assert inner(G, D) == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_F_reduces_to_f(self, rng):
        inst = synthetic_completion(1, 4)
        Y = feasible_point(inst.model, rng)
        mult = MultiplierState(np.zeros((4, 4)), 0.0)
        assert eval_F(inst.model, inst.data, Y, mult) == pytest.approx(eval_f(inst.model, Y))
        np.testing.assert_allclose(grad_F(inst.model, inst.data, Y, mult), grad_f(inst.model, Y),
                                   atol=1e-12)

    def test_F_augmented_terms(self, rng):
        inst = synthetic_completion(2, 4)
        model, data = inst.model, inst.data
        Y = feasible_point(model, rng)
        from sparsact.linalg import apply_A2, x_of_y

        res = apply_A2(model.C, data.E, x_of_y(model, Y)) - data.G
        Lam = np.diag([1.0, -2.0, 0.5, 3.0])
        val = eval_F(model, data, Y, MultiplierState(Lam, 4.0))
        expect = eval_f(model, Y) + inner(Lam, res) + 2.0 * np.linalg.norm(res) ** 2
        assert val == pytest.approx(expect, rel=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_hessian_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        model = random_stable_model(seed, 5, 2, complex_=True)
        Y = feasible_point(model, rng)
        D = crandn(rng, *Y.shape)
        fd = fd_directional(lambda Z: inner(grad_f(model, Z), D), Y, D, h=1e-5)
        assert hessian_quadratic_form(model, Y, D) == pytest.approx(fd, rel=1e-5)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_hessian_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        model = random_stable_model(seed % 1000, 4, 2)
        Y = feasible_point(model, rng, 0.2)
        assert hessian_quadratic_form(model, Y, crandn(rng, *Y.shape)) >= 0


class TestRegularizer:
    def test_eval_g(self):
        Y = np.array([[3.0, 4.0], [0.0, 0.0], [1.0, 0.0]])
        assert eval_g(Y) == pytest.approx(6.0)
        assert eval_g(Y, [2.0, 1.0, 0.5]) == pytest.approx(10.5)

    def test_prox_shrinks_and_zeroes(self):
        V = np.array([[3.0, 4.0], [0.3, 0.4]])
        P = prox_group_rows(V, 1.0)
        np.testing.assert_allclose(P[0], [2.4, 3.2])
        np.testing.assert_array_equal(P[1], 0)

    def test_prox_identity_at_zero_beta(self, rng):
        V = crandn(rng, 3, 4)
        np.testing.assert_array_equal(prox_group_rows(V, 0.0), V)

    def test_prox_full_threshold(self, rng):
        V = crandn(rng, 3, 4)
        assert not np.any(prox_group_rows(V, 1e3))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), beta=st.floats(0.0, 5.0))
    def test_prox_optimality(self, seed, beta):
        rng = np.random.default_rng(seed)
        V = crandn(rng, 4, 3)
        w = rng.uniform(0.2, 2.0, 4)
        P = prox_group_rows(V, beta, w)
        for v, p, wi in zip(V, P, w):
            d = v - p
            npn = np.linalg.norm(p)
            if npn > 0:
                np.testing.assert_allclose(d, beta * wi * p / npn, atol=1e-12)
            else:
                assert np.linalg.norm(d) <= beta * wi + 1e-12

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            eval_g(np.ones((2, 2)), [1.0, -1.0])
        with pytest.raises(ValueError):
            eval_g(np.ones((2, 2)), [1.0])


def test_sublevel_requires_definite_q():
    model = PlantModel(A=[[-1.0]], B=[[1.0]], C=[[1.0]], V=[[1.0]], Q=[[0.0]], R=[[1.0]])
    with pytest.raises(BoundUnavailable):
        sublevel_bounds(model, 1.0)


def test_sublevel_nu_bounds_covariance(rng):
    model = random_stable_model(3, 5, 3)
    a = 1.5 * eval_f(model, np.zeros((3, 5)))
    b = sublevel_bounds(model, a)
    for _ in range(20):
        Y = feasible_point(model, rng, 0.5)
        if eval_f(model, Y) <= a:
            from sparsact.linalg import x_of_y

            assert np.linalg.eigvalsh(x_of_y(model, Y))[0] >= b.nu * (1 - 1e-12)
    assert b.mu_a <= b.L_a


def test_multiplier_rho_validation():
    with pytest.raises(ValueError):
        MultiplierState(np.zeros((1, 1)), -1.0)


def test_imaginary_objective_detected():
    model = scalar_model()
    object.__setattr__(model, "Q", np.array([[1.0 + 1.0j]]))
    from sparsact.exceptions import SparsactError

    with pytest.raises(SparsactError):
        eval_f(model, [[0.0]])


def test_completion_data_dim_mismatch():
    model = random_stable_model(0, 3, 3)
    data = CompletionData(E=np.eye(2), G=np.eye(2))
    from sparsact.exceptions import DimensionError

    with pytest.raises(DimensionError):
        eval_F(model, data, np.zeros((3, 3)), MultiplierState(np.zeros((2, 2)), 1.0))
