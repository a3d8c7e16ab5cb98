"""Actuator and sensor selection on top of the proximal-gradient solver.

Regularization sweeps with iterative reweighting, support extraction,
polishing on the identified support, a greedy removal baseline, and the
duality map that turns sensor selection into actuator selection.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (
    InfeasibleY,
    NotObservable,
    NotStabilizable,
    PolishInfeasible,
    SingularOperator,
    SparsactError,
)
from .linalg import (
    CompletionData,
    PlantModel,
    as_cmatrix,
    is_hurwitz,
    is_stabilizable,
    solve_are,
)
from .pg import PgOptions, Status, centralized_start, pg_solve

__all__ = [
    "SelectionResult",
    "PolishResult",
    "GreedyTrace",
    "SWEEP_CSV_COLUMNS",
    "GREEDY_CSV_COLUMNS",
    "support_of",
    "reweight",
    "polish",
    "centralized_cost",
    "degradation",
    "gamma_sweep",
    "greedy_select",
    "is_observable",
    "sensor_dual",
    "observer_from_dual",
]

log = logging.getLogger(__name__)

SWEEP_CSV_COLUMNS = ("gamma", "nnz_rows", "J", "J_c", "degradation_pct", "pg_iters", "status")
GREEDY_CSV_COLUMNS = ("step", "removed_index", "cost")


def support_of(Y, tol: float | None = None, rel_tol: float = 1e-6) -> tuple[int, ...]:
    """Indices of rows of ``Y`` whose 2-norm exceeds ``tol``.

    The default threshold is ``rel_tol`` times the largest row norm.
    """
    norms = np.linalg.norm(np.asarray(Y), axis=1)
    if norms.size == 0 or norms.max() == 0:
        return ()
    thr = rel_tol * norms.max() if tol is None else tol
    return tuple(int(i) for i in np.flatnonzero(norms > thr))


def reweight(Y_prev, eps_rw: float = 1e-3) -> np.ndarray:
    """Row weights ``1 / (||row_i(Y_prev)|| + eps_rw)``."""
    if not eps_rw > 0:
        raise ValueError("eps_rw must be positive")
    return 1.0 / (np.linalg.norm(np.asarray(Y_prev), axis=1) + eps_rw)


def degradation(J: float, J_c: float) -> float:
    """Performance loss ``100 (J - J_c) / J_c`` in percent."""
    if not J_c > 0:
        raise ValueError("J_c must be positive")
    return 100.0 * (J - J_c) / J_c


@dataclass
class PolishResult:
    J: float
    K: np.ndarray
    X: np.ndarray
    support: tuple[int, ...]
    report: object = None


@dataclass
class SelectionResult:
    """One point of a regularization sweep.

    ``K`` is the polished gain embedded in the full ``m x n`` shape (zero
    rows off the support); ``Y`` is the sparsity-promoting solution before
    polishing. ``degradation`` is the fraction ``(J - J_c) / J_c``.
    ``history`` holds the iteration records of the last reweighted solve.
    """

    gamma: float
    support: tuple[int, ...]
    Y: np.ndarray
    K: np.ndarray
    X: np.ndarray
    J: float
    J_c: float
    pg_iters: int = 0
    status: str = Status.CONVERGED.value
    history: list = field(default_factory=list, repr=False)

    @property
    def degradation(self) -> float:
        return (self.J - self.J_c) / self.J_c

    @property
    def degradation_pct(self) -> float:
        return degradation(self.J, self.J_c)

    @property
    def nnz_rows(self) -> int:
        return len(self.support)

    def csv_row(self) -> dict:
        return {
            "gamma": self.gamma,
            "nnz_rows": self.nnz_rows,
            "J": self.J,
            "J_c": self.J_c,
            "degradation_pct": self.degradation_pct,
            "pg_iters": self.pg_iters,
            "status": self.status,
        }


def centralized_cost(model: PlantModel) -> float:
    """Optimal cost ``trace(P V)`` with every input available."""
    are = solve_are(model)
    return float(np.real(np.vdot(are.P, model.V)))


def _embed(K_sp, support, m):
    K = np.zeros((m, K_sp.shape[1]), dtype=np.complex128)
    if support:
        K[list(support)] = K_sp
    return K


def polish(model: PlantModel, support, data: CompletionData | None = None, gamma: float = 0.0,
           mm_options=None) -> PolishResult:
    """Re-solve the unregularized problem using only the inputs in ``support``.

    Actuator mode (``data is None``) solves the Riccati equation of the
    reduced model and returns ``J = trace(P V)``. With completion data the
    method of multipliers is rerun at ``gamma`` (default 0) on the reduced
    input matrix and ``J`` is the final ``f``.

    Raises
    ------
    PolishInfeasible
        The retained inputs cannot stabilize ``A``.
    """
    support = tuple(sorted(int(i) for i in support))
    reduced = model.with_inputs(support)
    if data is not None:
        from .mm import MmOptions, mm_solve

        opts = replace(mm_options or MmOptions(), gamma=gamma, weights=None)
        try:
            rep = mm_solve(reduced, data, opts)
        except (NotStabilizable, InfeasibleY) as exc:
            raise PolishInfeasible(f"support {support} cannot be polished: {exc}") from exc
        return PolishResult(rep.f, _embed(rep.K, support, model.m), rep.X, support, rep)
    if not support:
        if not is_hurwitz(model.A):
            raise PolishInfeasible("empty support but A is not Hurwitz")
        X = model.lyap.solve(model.V)
        J = float(np.real(np.vdot(model.Q, X)))
        return PolishResult(J, np.zeros((model.m, model.n), dtype=np.complex128), X, support)
    if not is_stabilizable(model.A, reduced.B):
        raise PolishInfeasible(f"inputs {support} cannot stabilize A")
    try:
        are = solve_are(reduced)
    except NotStabilizable as exc:
        raise PolishInfeasible(str(exc)) from exc
    J = float(np.real(np.vdot(are.P, model.V)))
    return PolishResult(J, _embed(are.K, support, model.m), are.X, support)


def _select_one(model, gamma, base: PgOptions, Y0, w, reweight_steps, eps_rw, rel_tol, J_c):
    iters = 0
    status = Status.CONVERGED.value
    Y = Y0
    rounds = max(1, reweight_steps)
    for r in range(rounds):
        rep = pg_solve(model, replace(base, gamma=gamma, weights=w), Y0=Y)
        iters += rep.iterations
        Y = rep.Y
        if rep.status is not Status.CONVERGED:
            status = rep.status.value
        if r + 1 < rounds:
            w = reweight(Y, eps_rw)
    support = support_of(Y, rel_tol=rel_tol)
    try:
        pol = polish(model, support)
        J, K, X = pol.J, pol.K, pol.X
    except PolishInfeasible as exc:
        log.warning("gamma=%g: %s", gamma, exc)
        J, K, X = np.inf, np.full((model.m, model.n), np.nan), np.full((model.n, model.n), np.nan)
        status = "PolishInfeasible"
    return SelectionResult(gamma, support, Y, K, X, J, J_c, iters, status, rep.history)


def gamma_sweep(
    model: PlantModel,
    gammas,
    options: PgOptions | None = None,
    reweight_steps: int = 3,
    eps_rw: float = 1e-3,
    rel_tol: float = 1e-6,
    jobs: int = 1,
    warm_start: bool = True,
) -> list[SelectionResult]:
    """Sparsity-promoting solutions and polished costs over a grid of ``gamma``.

    For each ``gamma`` the problem is solved ``reweight_steps`` times, each
    time with weights from :func:`reweight` of the latest solution, and the
    final support is polished. With ``jobs == 1`` each ``gamma`` is
    warm-started from the previous solution, and its first weights are
    computed from that solution; the first ``gamma`` starts from the
    centralized gain with unit weights. With ``jobs > 1`` every value starts
    that way and the values are solved concurrently; results are returned
    in grid order.

    A failure at one ``gamma`` is recorded in its ``status`` and the sweep
    continues; :class:`SingularOperator` concerns the model itself and is
    raised.
    """
    gammas = [float(g) for g in gammas]
    if any(g < 0 for g in gammas):
        raise ValueError("gammas must be nonnegative")
    if any(b < a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gammas must be sorted ascending")
    base = options or PgOptions()
    J_c = centralized_cost(model)
    Y_start = centralized_start(model)

    ones = np.ones(model.m)

    def run(g, Y0, w0):
        try:
            return _select_one(model, g, base, Y0, w0, reweight_steps, eps_rw, rel_tol, J_c)
        except SingularOperator:
            raise
        except SparsactError as exc:
            log.warning("gamma=%g failed: %s", g, exc)
            nan = np.full((model.m, model.n), np.nan)
            return SelectionResult(g, (), nan, nan, np.full((model.n, model.n), np.nan),
                                   np.inf, J_c, 0, type(exc).__name__)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda g: run(g, Y_start, ones), gammas))
    results = []
    Y0, w0 = Y_start, ones
    for g in gammas:
        res = run(g, Y0, w0)
        results.append(res)
        if warm_start and np.all(np.isfinite(res.Y)):
            Y0, w0 = res.Y, reweight(res.Y, eps_rw)
    return results


@dataclass
class GreedyTrace:
    """Removal order and the optimal cost after each removal.

    ``initial_cost`` is the cost with every input; ``costs[k]`` is the cost
    after removing ``removed[: k + 1]``.
    """

    m: int
    initial_cost: float
    removed: list[int] = field(default_factory=list)
    costs: list[float] = field(default_factory=list)

    def support_at(self, count: int) -> tuple[int, ...] | None:
        """Retained inputs when ``count`` remain, or ``None`` if not reached."""
        k = self.m - count
        if k < 0 or k > len(self.removed):
            return None
        gone = set(self.removed[:k])
        return tuple(i for i in range(self.m) if i not in gone)

    def cost_at(self, count: int) -> float | None:
        k = self.m - count
        if k == 0:
            return self.initial_cost
        if 0 < k <= len(self.costs):
            return self.costs[k - 1]
        return None

    def csv_rows(self) -> list[dict]:
        return [
            {"step": k + 1, "removed_index": i, "cost": c}
            for k, (i, c) in enumerate(zip(self.removed, self.costs))
        ]


def _restricted_cost(model: PlantModel, cols) -> float:
    try:
        return polish(model, cols).J
    except (PolishInfeasible, NotStabilizable):
        return np.inf


def greedy_select(model: PlantModel, target_counts=None, jobs: int = 1) -> GreedyTrace:
    """Greedy backward elimination of inputs.

    At every round the input whose removal raises the optimal cost
    ``trace(P V)`` the least is dropped (lowest index on ties). The loop
    ends when the set is empty, when every candidate removal makes the
    pair unstabilizable, or when the smallest entry of ``target_counts``
    is reached.
    """
    active = list(range(model.m))
    trace = GreedyTrace(m=model.m, initial_cost=_restricted_cost(model, active))
    floor = min(target_counts) if target_counts else 0
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        while len(active) > floor and np.isfinite(trace.costs[-1] if trace.costs else trace.initial_cost):
            cands = [[j for j in active if j != e] for e in active]
            if pool is None:
                costs = [_restricted_cost(model, c) for c in cands]
            else:
                costs = list(pool.map(lambda c: _restricted_cost(model, c), cands))
            best = int(np.argmin(costs))
            if not np.isfinite(costs[best]):
                break
            trace.removed.append(active[best])
            trace.costs.append(float(costs[best]))
            del active[best]
    finally:
        if pool is not None:
            pool.shutdown()
    return trace


def is_observable(A, C, tol: float = 1e-9) -> bool:
    """PBH test: ``[A - l I; C]`` has full column rank for every eigenvalue ``l``."""
    A = np.asarray(A, dtype=np.complex128)
    C = np.asarray(C, dtype=np.complex128).reshape(-1, A.shape[0])
    n = A.shape[0]
    scale = max(1.0, np.linalg.norm(np.vstack([A, C]), 2))
    for lam in np.linalg.eigvals(A):
        s = np.linalg.svd(np.vstack([A - lam * np.eye(n), C]), compute_uv=False)
        if s[-1] <= tol * scale:
            return False
    return True


def sensor_dual(A_s, C, V_d, V_eta) -> PlantModel:
    """Actuator-selection model whose row-sparse gain is a column-sparse observer gain.

    ``A = A_s*``, ``B = C*``, ``Q = V_d``, ``V = C* C`` and ``R = V_eta``.
    The covariance ``X`` and gain ``K`` of the result map back to the
    estimation-error covariance and the observer gain ``L = K*``
    (see :func:`observer_from_dual`). ``V`` is usually singular, so the
    returned model is built with ``strict=False``.

    Raises
    ------
    NotObservable
        If ``(A_s, C)`` is not observable; the closed-loop covariance would
        then be singular.
    """
    A_s = as_cmatrix(A_s, "A_s")
    n = A_s.shape[0]
    C = as_cmatrix(C, "C")
    if C.shape[1] != n:
        raise NotObservable(f"C must have {n} columns, got {C.shape[1]}")
    if not is_observable(A_s, C):
        raise NotObservable("(A_s, C) is not observable")
    Ch = C.conj().T
    return PlantModel(
        A=A_s.conj().T,
        B=Ch,
        C=np.eye(n),
        V=Ch @ C,
        Q=as_cmatrix(V_d, "V_d"),
        R=as_cmatrix(V_eta, "V_eta"),
        strict=False,
    )


def observer_from_dual(X, K):
    """Error covariance and observer gain ``(X, L = K*)`` from a dual solution."""
    K = np.asarray(K)
    return np.asarray(X), K.conj().T
