"""Objective values, gradients and curvature constants.

Conventions: ``<M1, M2> = trace(M1* M2)`` and complex gradients satisfy
``f(Y + e D) = f(Y) + e Re<grad f(Y), D> + O(e^2)``.

The smooth objective of the actuator-selection problem is::

    f(Y) = trace(Q X(Y)) + trace(R Y X(Y)^{-1} Y*)

and for covariance completion the smooth part of the augmented Lagrangian
adds ``Re<L, A2(X) - G> + (rho/2) ||A2(X) - G||_F^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .exceptions import BoundUnavailable, DimensionError, InfeasibleY, SparsactError
from .linalg import (
    CompletionData,
    PlantModel,
    apply_A2,
    apply_A2_adjoint,
    apply_B,
    apply_B_adjoint,
    herm,
    inner,
    operator_norm,
    x_of_y,
)

__all__ = [
    "MultiplierState",
    "SublevelBounds",
    "Point",
    "LqrObjective",
    "AugmentedObjective",
    "as_weights",
    "eval_f",
    "grad_f",
    "eval_g",
    "prox_group_rows",
    "eval_F",
    "grad_F",
    "hessian_quadratic_form",
    "sublevel_bounds",
]


def as_weights(weights, m: int) -> np.ndarray:
    """Validate a row-weight vector; ``None`` means all ones."""
    if weights is None:
        return np.ones(m)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape != (m,):
        raise DimensionError(f"weights must have length {m}, got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("weights must be positive and finite")
    return w


def _real(z: complex, what: str) -> float:
    z = complex(z)
    if abs(z.imag) > 1e-8 * max(1.0, abs(z.real)):
        raise SparsactError(f"{what} has imaginary part {z.imag:.3e}; input not Hermitian?")
    return z.real


@dataclass(frozen=True)
class MultiplierState:
    """Lagrange multiplier ``Lam`` (p x p) and penalty ``rho`` of the MM method."""

    Lam: np.ndarray
    rho: float

    def __post_init__(self):
        if not self.rho >= 0:
            raise ValueError("rho must be nonnegative")


@dataclass(frozen=True)
class SublevelBounds:
    """Curvature constants of ``f`` on ``{Y : f(Y) <= a}``.

    ``nu`` lower-bounds ``X(Y)``, ``L_a`` is a Lipschitz constant of the
    gradient and ``mu_a`` a strong-convexity modulus. ``norm_M`` and
    ``norm_B`` are the induced norms of ``Y -> A1^{-1}(B(Y))`` and ``B(.)``.
    """

    a: float
    nu: float
    L_a: float
    mu_a: float
    norm_M: float
    norm_B: float


@dataclass
class Point:
    """Smooth objective evaluated at a feasible ``Y``."""

    Y: np.ndarray
    X: np.ndarray
    chol: tuple
    K: np.ndarray
    f: float
    value: float
    residual: np.ndarray | None = None


class LqrObjective:
    """Smooth part ``f`` of the actuator-selection problem."""

    def __init__(self, model: PlantModel):
        self.model = model

    def _base(self, Y) -> Point:
        model = self.model
        Y = np.asarray(Y, dtype=np.complex128)
        X = x_of_y(model, Y)
        try:
            c = sla.cho_factor(X, lower=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError):
            raise InfeasibleY("X(Y) is not positive definite") from None
        # X^{-1} Y* = K*, X Hermitian
        K = sla.cho_solve(c, Y.conj().T).conj().T
        f = _real(np.vdot(model.Q, X) + np.trace(model.R @ Y @ K.conj().T), "f(Y)")
        return Point(Y=Y, X=X, chol=c, K=K, f=f, value=f)

    def evaluate(self, Y) -> Point:
        return self._base(Y)

    def _forcing(self, pt: Point) -> np.ndarray:
        return self.model.Q

    def gradient(self, pt: Point) -> np.ndarray:
        """``2 R Y X^{-1} - 2 B* (W2 - W1)``.

        ``W1`` and ``W2`` solve adjoint Lyapunov equations forced by
        ``X^{-1} Y* R Y X^{-1}`` and by ``Q`` (plus the constraint terms for
        the augmented Lagrangian); both are obtained from one solve since
        only ``W2 - W1`` enters.
        """
        model = self.model
        KRK = pt.K.conj().T @ model.R @ pt.K
        W21 = model.lyap.solve_adjoint(self._forcing(pt) - KRK)
        return 2.0 * (model.R @ pt.K) - 2.0 * (model.B.conj().T @ W21)


class AugmentedObjective(LqrObjective):
    """Smooth part ``F`` of the augmented Lagrangian for covariance completion."""

    def __init__(self, model: PlantModel, data: CompletionData, mult: MultiplierState):
        super().__init__(model)
        if data.p != model.p:
            raise DimensionError(f"E is {data.p} x {data.p} but C has {model.p} rows")
        self.data = data
        self.mult = mult

    def evaluate(self, Y) -> Point:
        pt = self._base(Y)
        data, mult = self.data, self.mult
        res = apply_A2(self.model.C, data.E, pt.X) - data.G
        pt.residual = res
        pt.value = pt.f + inner(mult.Lam, res) + 0.5 * mult.rho * np.linalg.norm(res) ** 2
        return pt

    def _forcing(self, pt: Point) -> np.ndarray:
        C, E = self.model.C, self.data.E
        dual = self.mult.Lam + self.mult.rho * pt.residual
        return self.model.Q + herm(apply_A2_adjoint(C, E, dual))


def eval_f(model: PlantModel, Y) -> float:
    """``trace(Q X + Y* R Y X^{-1})`` with ``X = X(Y)``.

    Raises
    ------
    InfeasibleY
        If ``X(Y)`` is not positive definite.
    """
    return LqrObjective(model).evaluate(Y).f


def grad_f(model: PlantModel, Y) -> np.ndarray:
    obj = LqrObjective(model)
    return obj.gradient(obj.evaluate(Y))


def eval_g(Y, weights=None) -> float:
    """Weighted sum of row 2-norms."""
    Y = np.asarray(Y)
    w = as_weights(weights, Y.shape[0])
    return float(w @ np.linalg.norm(Y, axis=1))


def prox_group_rows(Vmat, beta: float, weights=None) -> np.ndarray:
    """Proximal operator of ``beta * sum_i w_i ||row_i||_2`` (row soft-thresholding).

    Row ``i`` is scaled by ``1 - beta w_i / ||v_i||`` when ``||v_i|| > beta w_i``
    and zeroed otherwise.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    Vmat = np.asarray(Vmat)
    w = as_weights(weights, Vmat.shape[0])
    norms = np.linalg.norm(Vmat, axis=1)
    thr = beta * w
    keep = norms > thr
    scale = np.zeros_like(norms)
    scale[keep] = 1.0 - thr[keep] / norms[keep]
    return Vmat * scale[:, None]


def eval_F(model: PlantModel, data: CompletionData, Y, mult: MultiplierState) -> float:
    """Smooth part of the augmented Lagrangian,
    ``f + Re<Lam, A2(X) - G> + (rho/2) ||A2(X) - G||^2``."""
    return AugmentedObjective(model, data, mult).evaluate(Y).value


def grad_F(model: PlantModel, data: CompletionData, Y, mult: MultiplierState) -> np.ndarray:
    """Gradient of :func:`eval_F`.

    ``2 R Y X^{-1} - 2 B* (W2 + rho W3 - W1)`` where ``W2`` is forced by
    ``Q + A2'(Lam)`` and ``W3`` by ``A2'(A2(X) - G)``.
    """
    obj = AugmentedObjective(model, data, mult)
    return obj.gradient(obj.evaluate(Y))


def hessian_quadratic_form(model: PlantModel, Y, D) -> float:
    """Second directional derivative ``d^2/de^2 f(Y + e D)`` at ``e = 0``.

    Equals ``2 ||R^{1/2} (D - Y X^{-1} M(D)) X^{-1/2}||_F^2`` with
    ``M(D) = A1^{-1}(B(D))``.
    """
    pt = LqrObjective(model).evaluate(Y)
    D = np.asarray(D, dtype=np.complex128)
    if D.shape != pt.Y.shape:
        raise DimensionError(f"D has shape {D.shape}, expected {pt.Y.shape}")
    MD = model.lyap.solve(-apply_B(model.B, D))
    Z = D - pt.K @ MD
    ZXinv = sla.cho_solve(pt.chol, Z.conj().T)
    return max(_real(2.0 * np.trace(model.R @ Z @ ZXinv), "Hessian form"), 0.0)


def sublevel_bounds(model: PlantModel, a: float) -> SublevelBounds:
    """Lower bound on ``X(Y)`` and curvature constants over ``{f(Y) <= a}``.

    ::

        nu   = lmin(V)^2 / (4 a) * (||A||_2 / sqrt(lmin(Q)) + ||B||_2 / sqrt(lmin(R)))^-2
        L_a  = 2 lmax(R) / nu * (1 + sqrt(a) ||M|| / sqrt(nu lmin(R)))^2
        mu_a = 2 lmin(R) lmin(Q)
               / (sqrt(a) + a^2 ||B(.)|| / (lmin(Q) lmin(V) sqrt(nu lmin(R))))^2

    ``||A||_2``, ``||B||_2`` are matrix norms; ``||M||`` and ``||B(.)||`` are
    the induced norms of the linear maps ``Y -> A1^{-1}(B(Y))`` and
    ``Y -> B Y + Y* B*``, estimated by power iteration.

    Raises
    ------
    BoundUnavailable
        If ``Q`` or ``V`` is singular (the formulas divide by their smallest
        eigenvalue).
    """
    if not a > 0:
        raise ValueError("sublevel value a must be positive")
    lQ = np.linalg.eigvalsh(model.Q)
    lV = np.linalg.eigvalsh(model.V)
    lR = np.linalg.eigvalsh(model.R)
    tiny = 1e-14
    if lQ[0] <= tiny * max(1.0, lQ[-1]):
        raise BoundUnavailable("Q is singular; sublevel constants are undefined")
    if lV[0] <= tiny * max(1.0, lV[-1]):
        raise BoundUnavailable("V is singular; sublevel constants are undefined")
    qmin, vmin, rmin, rmax = lQ[0], lV[0], lR[0], lR[-1]
    B = model.B
    lyap = model.lyap
    shape = (model.m, model.n)
    norm_M = operator_norm(
        lambda Y: lyap.solve(-apply_B(B, Y)),
        lambda W: apply_B_adjoint(B, lyap.solve_adjoint(-W, hermitian=False)),
        shape,
    )
    norm_B = operator_norm(lambda Y: apply_B(B, Y), lambda W: apply_B_adjoint(B, W), shape)
    normA = np.linalg.norm(model.A, 2)
    normB = np.linalg.norm(B, 2)
    nu = vmin**2 / (4.0 * a) / (normA / np.sqrt(qmin) + normB / np.sqrt(rmin)) ** 2
    L_a = 2.0 * rmax / nu * (1.0 + np.sqrt(a) * norm_M / np.sqrt(nu * rmin)) ** 2
    denom = np.sqrt(a) + a**2 * norm_B / (qmin * vmin * np.sqrt(nu * rmin))
    mu_a = 2.0 * rmin * qmin / denom**2
    return SublevelBounds(a=a, nu=nu, L_a=L_a, mu_a=mu_a, norm_M=norm_M, norm_B=norm_B)
