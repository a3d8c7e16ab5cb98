"""Proximal gradient method for ``min_Y  f(Y) + gamma * sum_i w_i ||row_i(Y)||``.

Each iteration takes ``Y+ = prox(Y - alpha grad f(Y))`` where ``alpha`` is
the largest value in ``{c^j alpha_0}`` for which ``X(Y+)`` is positive
definite and the quadratic upper model majorizes ``f(Y+)``. ``alpha_0``
comes from an adaptive Barzilai-Borwein rule. The smooth term is pluggable
so the same loop minimizes the augmented Lagrangian inside the method of
multipliers.
"""

from __future__ import annotations

import csv
import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import InfeasibleY
from .linalg import PlantModel, inner, solve_are
from .objective import LqrObjective, Point, as_weights, eval_g, prox_group_rows

__all__ = [
    "Status",
    "PgOptions",
    "PgState",
    "SolveReport",
    "ITERATION_CSV_COLUMNS",
    "bb_initial_step",
    "backtrack",
    "residuals",
    "centralized_start",
    "pg_solve",
]

log = logging.getLogger(__name__)

ITERATION_CSV_COLUMNS = (
    "iter", "objective", "f", "g", "alpha", "r_r", "r_n", "backtracks", "nnz_rows",
)


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    BACKTRACK_FAIL = "BacktrackFail"
    MAX_OUTER = "MaxOuter"
    INNER_FAIL = "InnerFail"


@dataclass
class PgOptions:
    """Settings for :func:`pg_solve`.

    ``eps_r``/``eps_n`` keep the residual denominators away from zero.
    ``descent_tol`` is a relative round-off allowance in the sufficient
    descent test. ``fixed_step`` disables BB initialization and
    backtracking (the step must then satisfy both acceptance tests as is).
    """

    gamma: float = 0.0
    weights: np.ndarray | None = None
    eps: float = 1e-4
    eps_r: float = 1e-8
    eps_n: float = 1e-8
    backtrack_c: float = 0.5
    max_iters: int = 10000
    max_backtracks: int = 60
    alpha0: float = 1.0
    fixed_step: float | None = None
    descent_tol: float = 1e-12

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not 0 < self.backtrack_c < 1:
            raise ValueError("backtrack_c must lie in (0, 1)")
        for name in ("eps", "eps_r", "eps_n", "alpha0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1 or self.max_backtracks < 0:
            raise ValueError("max_iters must be >= 1 and max_backtracks >= 0")
        if self.fixed_step is not None and not self.fixed_step > 0:
            raise ValueError("fixed_step must be positive")


@dataclass
class PgState:
    """Iterate bookkeeping: current and previous iterate and gradient."""

    Y: np.ndarray
    grad: np.ndarray
    point: Point
    Y_prev: np.ndarray | None = None
    grad_prev: np.ndarray | None = None
    alpha: float = 1.0
    r_r: float = 1.0
    r_n: float = 1.0
    r1_norm: float | None = None
    iter: int = 0


@dataclass
class SolveReport:
    """Outcome of a PG or MM solve.

    ``history`` holds one dict per accepted iteration (PG) or outer step
    (MM). ``extra`` carries solver-specific final quantities such as the
    multiplier of the MM method.
    """

    status: Status
    Y: np.ndarray
    X: np.ndarray
    K: np.ndarray
    objective: float
    f: float
    g: float
    history: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def r_r(self) -> float:
        return self.history[-1]["r_r"] if self.history else np.nan

    @property
    def r_n(self) -> float:
        return self.history[-1]["r_n"] if self.history else np.nan

    def write_history_csv(self, path, columns=ITERATION_CSV_COLUMNS) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in self.history:
                writer.writerow([_fmt(row[c]) for c in columns])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def bb_initial_step(state: PgState) -> float:
    """Adaptive Barzilai-Borwein initial step.

    With ``s = Y - Y_prev`` and ``y = grad - grad_prev``::

        alpha_s = <s, s> / <s, y>      alpha_m = <s, y> / <y, y>

    returns ``alpha_m`` if ``alpha_m / alpha_s > 1/2`` and
    ``alpha_s - alpha_m / 2`` otherwise. Falls back to the previous step
    when either quotient is negative or undefined.
    """
    if state.Y_prev is None or state.grad_prev is None:
        return state.alpha
    s = state.Y - state.Y_prev
    y = state.grad - state.grad_prev
    ss, sy, yy = inner(s, s), inner(s, y), inner(y, y)
    if ss <= 0 or yy <= 0 or sy <= 0:
        return state.alpha
    alpha_s = ss / sy
    alpha_m = sy / yy
    if alpha_m / alpha_s > 0.5:
        return alpha_m
    return alpha_s - 0.5 * alpha_m


def backtrack(
    objective: LqrObjective,
    state: PgState,
    alpha0: float,
    gamma: float,
    weights,
    c: float = 0.5,
    max_backtracks: int = 60,
    descent_tol: float = 1e-12,
):
    """Largest step in ``{c^j alpha0}`` passing the feasibility and descent tests.

    Returns ``(Y_next, point_next, alpha, j)`` or ``None`` when
    ``max_backtracks`` reductions were not enough.
    """
    Y, grad, pt = state.Y, state.grad, state.point
    slack = descent_tol * (1.0 + abs(pt.value))
    alpha = alpha0
    for j in range(max_backtracks + 1):
        Y_next = prox_group_rows(Y - alpha * grad, gamma * alpha, weights)
        try:
            pt_next = objective.evaluate(Y_next)
        except InfeasibleY:
            alpha *= c
            continue
        D = Y_next - Y
        bound = pt.value + inner(grad, D) + inner(D, D) / (2.0 * alpha)
        if pt_next.value <= bound + slack:
            return Y_next, pt_next, alpha, j
        alpha *= c
    return None


def residuals(state: PgState, eps_r: float = 1e-8, eps_n: float = 1e-8):
    """Relative and normalized residuals after an accepted step.

    ``r = grad f(Y+) + (Y_hat - Y+) / alpha`` with ``Y_hat = Y - alpha grad f(Y)``
    lies in ``grad f(Y+) + gamma dg(Y+)``. Returns ``(r_r, r_n, ||r||)``;
    the normalizer ``||r^1||`` of ``r_n`` is fixed at the first call.
    """
    Y_hat = state.Y_prev - state.alpha * state.grad_prev
    prox_term = (Y_hat - state.Y) / state.alpha
    r = state.grad + prox_term
    rn = float(np.linalg.norm(r))
    if state.r1_norm is None:
        state.r1_norm = rn
    denom = max(np.linalg.norm(state.grad), np.linalg.norm(prox_term)) + eps_r
    return rn / denom, rn / (state.r1_norm + eps_n), rn


def centralized_start(model: PlantModel) -> np.ndarray:
    """``Y0 = Kc Xc`` from the Riccati solution (always stabilizing)."""
    are = solve_are(model)
    return are.K @ are.X


def pg_solve(
    model: PlantModel,
    options: PgOptions | None = None,
    Y0=None,
    objective: LqrObjective | None = None,
    callback: Callable[[PgState], None] | None = None,
) -> SolveReport:
    """Minimize ``f(Y) + gamma g(Y)`` by proximal gradient.

    Parameters
    ----------
    model : PlantModel
    options : PgOptions, optional
    Y0 : (m, n) array_like, optional
        Feasible start (``X(Y0)`` positive definite). Defaults to the
        centralized optimum ``Kc Xc``.
    objective : LqrObjective, optional
        Smooth term; defaults to ``f``. The method of multipliers passes an
        :class:`~sparsact.objective.AugmentedObjective`.
    callback : callable, optional
        Called with the :class:`PgState` after every accepted step. It must
        not modify the state.

    Returns
    -------
    SolveReport
        ``status`` is ``Converged`` once ``min(r_r, r_n) <= eps``,
        ``MaxIters`` or ``BacktrackFail`` (the last feasible iterate is
        returned).

    Raises
    ------
    InfeasibleY
        If ``Y0`` is not feasible.
    """
    opts = options or PgOptions()
    obj = objective or LqrObjective(model)
    w = as_weights(opts.weights, model.m)
    gamma = opts.gamma
    Y = centralized_start(model) if Y0 is None else np.array(Y0, dtype=np.complex128)
    try:
        pt = obj.evaluate(Y)
    except InfeasibleY:
        raise InfeasibleY("initial Y0 is infeasible: X(Y0) is not positive definite") from None
    state = PgState(Y=Y, grad=obj.gradient(pt), point=pt, alpha=opts.alpha0)
    alpha0 = opts.fixed_step or opts.alpha0
    history: list[dict] = []
    status = Status.MAX_ITERS
    max_bt = 0 if opts.fixed_step else opts.max_backtracks

    for k in range(opts.max_iters):
        t0 = time.perf_counter()
        step = backtrack(
            obj, state, alpha0, gamma, w, opts.backtrack_c, max_bt, opts.descent_tol
        )
        if step is None:
            status = Status.BACKTRACK_FAIL
            log.warning("backtracking failed at iteration %d (alpha0=%.3e)", k, alpha0)
            break
        Y_next, pt_next, alpha, nbt = step
        D = Y_next - state.Y
        descent_gap = (
            state.point.value + inner(state.grad, D) + inner(D, D) / (2 * alpha)
        ) - pt_next.value
        grad_next = obj.gradient(pt_next)
        state.Y_prev, state.grad_prev = state.Y, state.grad
        state.Y, state.grad, state.point = Y_next, grad_next, pt_next
        state.alpha = alpha
        state.iter = k + 1
        state.r_r, state.r_n, rnorm = residuals(state, opts.eps_r, opts.eps_n)
        g_val = eval_g(Y_next, w)
        row = {
            "iter": k + 1,
            "objective": pt_next.value + gamma * g_val,
            "f": pt_next.f,
            "g": g_val,
            "alpha": alpha,
            "r_r": state.r_r,
            "r_n": state.r_n,
            "backtracks": nbt,
            "nnz_rows": int(np.count_nonzero(np.linalg.norm(Y_next, axis=1))),
            "residual": rnorm,
            "descent_gap": descent_gap,
            "time": time.perf_counter() - t0,
        }
        history.append(row)
        if callback is not None:
            callback(state)
        if min(state.r_r, state.r_n) <= opts.eps:
            status = Status.CONVERGED
            break
        alpha0 = opts.fixed_step or bb_initial_step(state)

    pt = state.point
    g_val = eval_g(state.Y, w)
    return SolveReport(
        status=status,
        Y=state.Y,
        X=pt.X,
        K=pt.K,
        objective=pt.value + gamma * g_val,
        f=pt.f,
        g=g_val,
        history=history,
        extra={"weights": w, "gamma": gamma, "grad": state.grad, "point": pt},
    )
