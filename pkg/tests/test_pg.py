import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scalar_model
from sparsact.exceptions import InfeasibleY
from sparsact.linalg import is_positive_definite, solve_are, x_of_y
from sparsact.objective import LqrObjective, eval_f, eval_g, sublevel_bounds
from sparsact.pg import (
    ITERATION_CSV_COLUMNS,
    PgOptions,
    PgState,
    Status,
    backtrack,
    bb_initial_step,
    pg_solve,
    residuals,
)
from sparsact.problems import random_stable_model, swift_hohenberg


def state_from(Y, Y_prev, grad, grad_prev, alpha=0.7):
    return PgState(Y=np.asarray(Y, complex), grad=np.asarray(grad, complex), point=None,
                   Y_prev=np.asarray(Y_prev, complex), grad_prev=np.asarray(grad_prev, complex),
                   alpha=alpha)


def initial_state(model, Y):
    obj = LqrObjective(model)
    pt = obj.evaluate(Y)
    return obj, PgState(Y=pt.Y, grad=obj.gradient(pt), point=pt)


class TestBB:
    def test_collinear(self):
        dY = np.array([[1.0, -2.0]])
        s = state_from(dY, np.zeros((1, 2)), 4.0 * dY, np.zeros((1, 2)))
        assert bb_initial_step(s) == pytest.approx(0.25)

    def test_small_ratio(self):
        # <s,s> = 1, <s,y> = 1, <y,y> = 2.5: alpha_s = 1, alpha_m = 0.4
        s = state_from([[1.0, 0.0]], [[0.0, 0.0]], [[1.0, np.sqrt(1.5)]], [[0.0, 0.0]])
        assert bb_initial_step(s) == pytest.approx(0.8)

    def test_negative_curvature_keeps_previous(self):
        dY = np.array([[1.0, 2.0]])
        s = state_from(dY, np.zeros((1, 2)), -dY, np.zeros((1, 2)), alpha=0.3)
        assert bb_initial_step(s) == 0.3

    def test_zero_difference_keeps_previous(self):
        s = state_from(np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 2)), alpha=0.9)
        assert bb_initial_step(s) == 0.9

    def test_no_history(self):
        s = PgState(Y=np.zeros((1, 1)), grad=np.zeros((1, 1)), point=None, alpha=1.0)
        assert bb_initial_step(s) == 1.0

    def test_complex_uses_real_inner_products(self):
        dY = np.array([[1.0 + 1.0j]])
        s = state_from(dY, np.zeros((1, 1)), 2.0 * dY, np.zeros((1, 1)))
        assert bb_initial_step(s) == pytest.approx(0.5)


class TestBacktrack:
    def test_inverse_lipschitz_step_accepted(self, scalar):
        obj, st_ = initial_state(scalar, [[0.0]])
        L = sublevel_bounds(scalar, eval_f(scalar, [[0.0]])).L_a
        Y, pt, alpha, j = backtrack(obj, st_, 1.0 / L, 0.0, None)
        assert j == 0 and alpha == 1.0 / L

    def test_large_step_leaves_feasible_region(self, scalar):
        obj, st_ = initial_state(scalar, [[0.5]])  # grad = 2, x(y) = 1 - y
        Y, pt, alpha, j = backtrack(obj, st_, 100.0, 0.0, None)
        assert j > 0
        assert alpha == pytest.approx(100.0 * 0.5**j)
        assert is_positive_definite(x_of_y(scalar, Y))
        D = Y - st_.Y
        rhs = st_.point.value + np.real(np.vdot(st_.grad, D)) + np.linalg.norm(D) ** 2 / (2 * alpha)
        assert pt.value <= rhs + 1e-12

    def test_fixed_point(self, scalar):
        are = solve_are(scalar)
        obj, st_ = initial_state(scalar, are.K @ are.X)
        Y, pt, alpha, j = backtrack(obj, st_, 1.0, 0.0, None)
        assert j == 0
        np.testing.assert_allclose(Y, st_.Y, atol=1e-14)

    def test_gives_up(self, scalar):
        obj, st_ = initial_state(scalar, [[0.5]])
        assert backtrack(obj, st_, 1e6, 0.0, None, max_backtracks=3) is None


class TestResiduals:
    def test_prox_identity(self):
        s = state_from([[0.9]], [[1.0]], [[0.5]], [[1.0]], alpha=0.1)
        r_r, r_n, rn = residuals(s)
        # Y_hat = 1 - 0.1 = 0.9 = Y, so r = grad(Y+) = 0.5
        assert rn == pytest.approx(0.5)
        assert r_r == pytest.approx(0.5 / (0.5 + 1e-8))
        assert r_n == pytest.approx(0.5 / (0.5 + 1e-8))
        assert s.r1_norm == pytest.approx(0.5)

    def test_stationary(self):
        s = state_from([[1.0]], [[1.0]], [[0.0]], [[0.0]], alpha=0.1)
        r_r, r_n, rn = residuals(s)
        assert rn == 0 and r_r == 0

    def test_r1_fixed_after_first_call(self):
        s = state_from([[0.9]], [[1.0]], [[0.5]], [[1.0]], alpha=0.1)
        residuals(s)
        s.grad = np.array([[0.05]])
        _, r_n, _ = residuals(s)
        assert r_n == pytest.approx(0.1, rel=1e-6)


class TestSolve:
    def test_scalar_reaches_riccati(self, scalar):
        rep = pg_solve(scalar, PgOptions(eps=1e-8), Y0=[[0.0]])
        assert rep.status is Status.CONVERGED
        assert rep.f == pytest.approx(2 * (np.sqrt(2) - 1), rel=1e-10)
        assert rep.K[0, 0].real == pytest.approx(np.sqrt(2) - 1, rel=1e-6)
        assert min(rep.r_r, rep.r_n) <= 1e-8

    @pytest.mark.parametrize("seed", range(3))
    def test_riccati_equivalence_complex(self, seed):
        model = random_stable_model(seed, 8, 4, complex_=True)
        are = solve_are(model)
        J = np.real(np.vdot(are.P, model.V))
        rep = pg_solve(model, PgOptions(eps=1e-6), Y0=np.zeros((4, 8)))
        assert rep.converged
        assert abs(rep.f - J) <= 1e-6 * J
        assert np.linalg.norm(rep.K - are.K) <= 1e-4 * np.linalg.norm(are.K)

    def test_huge_gamma_gives_zero(self):
        model = random_stable_model(4, 6, 3)
        rep = pg_solve(model, PgOptions(gamma=1e8))
        assert rep.converged
        assert not np.any(rep.Y)
        X0 = model.lyap.solve(model.V)
        assert rep.f == pytest.approx(np.real(np.trace(model.Q @ X0)), rel=1e-12)

    def test_swift_hohenberg_drops_actuators(self):
        rep = pg_solve(swift_hohenberg(), PgOptions(gamma=10.0))
        assert rep.converged
        assert rep.history[-1]["nnz_rows"] < 32

    def test_default_start_is_centralized(self, scalar):
        seen = []
        pg_solve(scalar, PgOptions(gamma=0.1), callback=lambda s: seen.append(s.Y_prev.copy()))
        are = solve_are(scalar)
        np.testing.assert_allclose(seen[0], are.K @ are.X)

    def test_callback_each_iteration(self):
        model = random_stable_model(1, 5, 2)
        calls = []
        rep = pg_solve(model, PgOptions(gamma=0.5), callback=lambda s: calls.append(s.iter))
        assert calls == list(range(1, rep.iterations + 1))

    def test_infeasible_start(self, scalar):
        with pytest.raises(InfeasibleY):
            pg_solve(scalar, Y0=[[2.0]])

    def test_max_iters(self):
        model = random_stable_model(2, 6, 3)
        rep = pg_solve(model, PgOptions(eps=1e-14, max_iters=3), Y0=np.zeros((3, 6)))
        assert rep.status is Status.MAX_ITERS
        assert rep.iterations == 3
        assert is_positive_definite(rep.X)

    def test_backtrack_failure_returns_last_iterate(self, scalar):
        rep = pg_solve(scalar, PgOptions(fixed_step=50.0, max_iters=5), Y0=[[0.5]])
        assert rep.status is Status.BACKTRACK_FAIL
        assert rep.Y[0, 0] == 0.5

    def test_fixed_step(self, scalar):
        L = sublevel_bounds(scalar, 1.0).L_a
        rep = pg_solve(scalar, PgOptions(fixed_step=1.0 / L, eps=1e-6), Y0=[[0.0]])
        assert rep.converged
        assert all(h["alpha"] == 1.0 / L and h["backtracks"] == 0 for h in rep.history)

    def test_history_csv(self, tmp_path):
        model = random_stable_model(0, 4, 2)
        rep = pg_solve(model, PgOptions(gamma=0.3))
        path = tmp_path / "it.csv"
        rep.write_history_csv(path)
        rows = list(csv.reader(open(path)))
        assert tuple(rows[0]) == ITERATION_CSV_COLUMNS
        assert len(rows) == rep.iterations + 1
        assert float(rows[-1][1]) == pytest.approx(rep.objective)

    def test_options_validation(self):
        for bad in (dict(gamma=-1), dict(backtrack_c=1.0), dict(eps=0), dict(max_iters=0),
                    dict(fixed_step=-1.0)):
            with pytest.raises(ValueError):
                PgOptions(**bad)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), gamma=st.floats(0.0, 3.0), complex_=st.booleans())
def test_descent_and_feasibility(seed, gamma, complex_):
    model = random_stable_model(seed, 5, 3, complex_=complex_)
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.5, 2.0, 3)
    rep = pg_solve(model, PgOptions(gamma=gamma, weights=w, max_iters=300))
    obj = LqrObjective(model)
    Y0 = solve_are(model)
    prev = eval_f(model, Y0.K @ Y0.X) + gamma * eval_g(Y0.K @ Y0.X, w)
    for h in rep.history:
        assert h["objective"] <= prev + 1e-10 * (1 + abs(prev))
        assert h["backtracks"] < 50
        assert h["descent_gap"] >= -1e-12 * (1 + abs(prev))
        prev = h["objective"]
    assert is_positive_definite(rep.X)
    assert rep.objective == pytest.approx(obj.evaluate(rep.Y).f + gamma * eval_g(rep.Y, w))


def test_backtracking_step_bound():
    """A step that backtracking had to shrink is not much below c / L_loc.

    L_loc is the secant curvature ||d grad|| / ||dY|| of the accepted step; it
    only estimates the Lipschitz constant on the rejected segment, hence the
    factor 2 allowance.
    """
    c = 0.5
    for model, gamma, Y0 in (
        (random_stable_model(7, 8, 4), 0.2, np.zeros((4, 8))),
        (random_stable_model(3, 10, 5), 0.0, np.zeros((5, 10))),
    ):
        ratios = []

        def cb(s):
            L_loc = np.linalg.norm(s.grad - s.grad_prev) / np.linalg.norm(s.Y - s.Y_prev)
            ratios.append(s.alpha / (c * min(1 / (np.sqrt(2) * L_loc), 1 / L_loc)))

        rep = pg_solve(model, PgOptions(gamma=gamma), Y0=Y0, callback=cb)
        reduced = [r for r, h in zip(ratios, rep.history) if h["backtracks"] > 0]
        assert reduced
        assert min(reduced) >= 0.5
