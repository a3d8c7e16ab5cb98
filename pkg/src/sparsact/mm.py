"""Method of multipliers for structured covariance completion.

Solves ``min f(Y) + gamma g(Y)  s.t.  (C X(Y) C*) o E = G`` by alternating an
inexact proximal-gradient minimization of the augmented Lagrangian with a
multiplier update, under an adaptive penalty/tolerance schedule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .linalg import CompletionData, PlantModel
from .objective import AugmentedObjective, MultiplierState, as_weights, eval_g
from .pg import PgOptions, SolveReport, Status, centralized_start, pg_solve

__all__ = ["MmOptions", "MmState", "OUTER_CSV_COLUMNS", "mm_step_schedule", "mm_solve"]

log = logging.getLogger(__name__)

OUTER_CSV_COLUMNS = (
    "outer_iter", "delta_p", "delta_p_normalized", "delta_d", "rho", "inner_iters", "objective",
)


@dataclass
class MmOptions:
    """Outer-loop settings.

    ``relative_primal`` measures the constraint violation as
    ``||A2(X) - G||_F / ||G||_F`` (absolute when ``G = 0``); the penalty
    schedule and the ``eps_p`` test both use that measure. ``inner`` supplies
    the remaining proximal-gradient settings (its ``eps`` is overwritten by
    the schedule).

    ``tighten_factor`` is the minimum factor by which a successful outer
    step shrinks the violation target and the inner tolerance. Without it
    (``tighten_factor=1``) a run that never stalls keeps ``rho = 1`` and
    the targets never move, so the inner solves stay at tolerance 1.
    """

    gamma: float = 0.0
    weights: np.ndarray | None = None
    eps_p: float = 1e-2
    eps_d: float = 1e-2
    rho0: float = 1.0
    rho_max: float = 1e9
    rho_growth: float = 5.0
    eta_exp_progress: float = 0.9
    eta_exp_stall: float = 0.1
    max_outer: int = 100
    relative_primal: bool = True
    tighten_factor: float = 5.0
    inner: PgOptions | None = None

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        for name in ("eps_p", "eps_d", "rho0", "rho_max", "eta_exp_progress", "eta_exp_stall"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.rho_growth > 1:
            raise ValueError("rho_growth must exceed 1")
        if self.tighten_factor < 1:
            raise ValueError("tighten_factor must be >= 1")
        if self.rho0 > self.rho_max:
            raise ValueError("rho0 must not exceed rho_max")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")


@dataclass
class MmState:
    Y: np.ndarray
    Lam: np.ndarray
    rho: float
    eta: float
    eps_inner: float
    residual: np.ndarray
    delta_p: float = np.inf
    delta_p_normalized: float = np.inf
    delta_d: float = np.inf
    outer_iter: int = 0
    stop: bool = False

    def primal_measure(self, relative: bool) -> float:
        return self.delta_p_normalized if relative else self.delta_p


def mm_step_schedule(state: MmState, options: MmOptions) -> MmState:
    """Apply one branch of the multiplier/penalty schedule.

    * converged (primal and dual targets met): ``stop`` is set, nothing else changes;
    * progress (violation ``<= eta``): ``Lam += rho * residual``,
      ``eta = max(eta t^-0.9, eps_p)``, ``eps = max(eps / t, eps_d)`` with
      ``t = max(rho, tighten_factor)``;
    * stall: ``rho = min(5 rho, rho_max)``, ``eta = max(rho^-0.1, eps_p)``,
      ``eps = max(1 / rho, eps_d)``.
    """
    dp = state.primal_measure(options.relative_primal)
    if dp <= options.eps_p and state.delta_d <= options.eps_d:
        return replace(state, stop=True)
    if dp <= state.eta:
        t = max(state.rho, options.tighten_factor)
        return replace(
            state,
            Lam=state.Lam + state.rho * state.residual,
            eta=max(state.eta * t ** (-options.eta_exp_progress), options.eps_p),
            eps_inner=max(state.eps_inner / t, options.eps_d),
        )
    rho = min(options.rho_growth * state.rho, options.rho_max)
    return replace(
        state,
        rho=rho,
        eta=max(rho ** (-options.eta_exp_stall), options.eps_p),
        eps_inner=max(1.0 / rho, options.eps_d),
    )


def mm_solve(
    model: PlantModel,
    data: CompletionData,
    options: MmOptions | None = None,
    Y0=None,
    callback: Callable[[MmState], None] | None = None,
) -> SolveReport:
    """Covariance completion by the method of multipliers.

    Each outer step minimizes ``F(Y; Lam, rho) + gamma g(Y)`` with
    :func:`~sparsact.pg.pg_solve`, warm-started from the previous ``Y``, to
    the current inner tolerance. When the iterate is already primal
    feasible but the inner residual is above ``eps_d``, the same subproblem
    is solved further to ``eps_d`` before the stopping test, so feasible
    problems do not wait on the penalty schedule to tighten the inner
    tolerance.

    Returns
    -------
    SolveReport
        ``history`` has one row per outer step (see ``OUTER_CSV_COLUMNS``);
        ``extra`` holds the final multiplier ``Lam``, ``rho``, the last
        :class:`MmState` and the last inner report.
    """
    opts = options or MmOptions()
    inner_base = opts.inner or PgOptions()
    w = as_weights(opts.weights, model.m)
    inner_base = replace(inner_base, gamma=opts.gamma, weights=w)
    g_norm = float(np.linalg.norm(data.G))
    scale = g_norm if g_norm > 0 else 1.0

    Y = centralized_start(model) if Y0 is None else np.array(Y0, dtype=np.complex128)
    p = model.p
    state = MmState(
        Y=Y,
        Lam=np.zeros((p, p), dtype=np.complex128),
        rho=opts.rho0,
        eta=max(opts.rho0 ** (-opts.eta_exp_stall), opts.eps_p),
        eps_inner=max(1.0 / opts.rho0, opts.eps_d),
        residual=np.zeros((p, p), dtype=np.complex128),
    )
    history: list[dict] = []
    status = Status.MAX_OUTER
    inner_report = None

    for k in range(opts.max_outer):
        obj = AugmentedObjective(model, data, MultiplierState(state.Lam, state.rho))
        inner_report = pg_solve(
            model, replace(inner_base, eps=state.eps_inner), Y0=state.Y, objective=obj
        )
        inner_iters = inner_report.iterations
        state = _measure(state, inner_report, scale)
        if inner_report.status is Status.BACKTRACK_FAIL:
            status = Status.INNER_FAIL
            log.warning("inner solve failed at outer step %d", k + 1)
            history.append(_row(k + 1, state, inner_iters, inner_report))
            break
        if (
            state.primal_measure(opts.relative_primal) <= opts.eps_p
            and state.delta_d > opts.eps_d
        ):
            inner_report = pg_solve(
                model, replace(inner_base, eps=opts.eps_d), Y0=state.Y, objective=obj
            )
            inner_iters += inner_report.iterations
            state = _measure(state, inner_report, scale)
        state.outer_iter = k + 1
        history.append(_row(k + 1, state, inner_iters, inner_report))
        if callback is not None:
            callback(state)
        log.info(
            "outer %d: dp=%.3e dd=%.3e rho=%.3g inner=%d",
            k + 1, state.delta_p_normalized, state.delta_d, state.rho, inner_iters,
        )
        state = mm_step_schedule(state, opts)
        if state.stop:
            status = Status.CONVERGED
            break

    pt = inner_report.extra["point"]
    g_val = eval_g(state.Y, w)
    return SolveReport(
        status=status,
        Y=state.Y,
        X=pt.X,
        K=pt.K,
        objective=pt.f + opts.gamma * g_val,
        f=pt.f,
        g=g_val,
        history=history,
        extra={
            "Lam": state.Lam,
            "rho": state.rho,
            "state": state,
            "inner": inner_report,
            "delta_p": state.delta_p,
            "delta_p_normalized": state.delta_p_normalized,
            "delta_d": state.delta_d,
        },
    )


def _measure(state: MmState, report: SolveReport, scale: float) -> MmState:
    res = report.extra["point"].residual
    dp = float(np.linalg.norm(res))
    dd = min(report.r_r, report.r_n) if report.history else 0.0
    return replace(
        state,
        Y=report.Y,
        residual=res,
        delta_p=dp,
        delta_p_normalized=dp / scale,
        delta_d=dd,
    )


def _row(k, state, inner_iters, report) -> dict:
    return {
        "outer_iter": k,
        "delta_p": state.delta_p,
        "delta_p_normalized": state.delta_p_normalized,
        "delta_d": state.delta_d,
        "rho": state.rho,
        "inner_iters": inner_iters,
        "objective": report.objective,
    }
