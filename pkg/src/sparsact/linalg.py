"""Dense complex linear algebra: Lyapunov solves, the constraint operators and
Riccati-based initialization.

All matrices are ``complex128`` numpy arrays. Real problems are simply
embedded with zero imaginary parts.

The linear maps used throughout are::

    A1(X)  = A X + X A*
    B(Y)   = B Y + Y* B*
    A2(X)  = (C X C*) o E          (o is the entrywise product)
    A2'(L) = C* (E o L) C          (adjoint of A2)
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import ztrsyl

from .exceptions import (
    DimensionError,
    InputError,
    NotStabilizable,
    SingularOperator,
    SparsactError,
)

__all__ = [
    "PlantModel",
    "CompletionData",
    "LyapunovSolver",
    "AreSolution",
    "as_cmatrix",
    "herm",
    "inner",
    "solve_lyapunov",
    "solve_lyapunov_adjoint",
    "lyapunov_kronecker_oracle",
    "apply_A1",
    "apply_B",
    "apply_B_adjoint",
    "apply_A2",
    "apply_A2_adjoint",
    "x_of_y",
    "is_positive_definite",
    "spectral_abscissa",
    "is_hurwitz",
    "is_stabilizable",
    "stabilizing_gain",
    "solve_are",
    "operator_norm",
]

_HERM_TOL = 1e-10


def as_cmatrix(M, name: str = "matrix", shape: tuple | None = None) -> np.ndarray:
    """Convert ``M`` to a 2-D complex128 array, checking finiteness and shape."""
    arr = np.asarray(M, dtype=np.complex128)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    if shape is not None:
        for got, want in zip(arr.shape, shape):
            if want is not None and got != want:
                raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
    return arr


def herm(M: np.ndarray) -> np.ndarray:
    """Hermitian part ``(M + M*) / 2``."""
    return 0.5 * (M + M.conj().T)


def inner(M1: np.ndarray, M2: np.ndarray) -> float:
    """Real part of the matrix inner product ``trace(M1* M2)``."""
    return float(np.vdot(M1, M2).real)


def _check_hermitian(M: np.ndarray, name: str) -> None:
    dev = np.linalg.norm(M - M.conj().T)
    if dev > _HERM_TOL * (1.0 + np.linalg.norm(M)):
        raise InputError(f"{name} is not Hermitian (deviation {dev:.3e})")


@dataclass(frozen=True, eq=False)
class PlantModel:
    """System and weight matrices of one problem instance.

    ``A`` (n x n), ``B`` (n x m), ``C`` (p x n), disturbance covariance
    ``V`` (n x n), state weight ``Q`` (n x n) and input weight ``R`` (m x m).
    ``V`` and ``R`` must be positive definite and ``Q`` positive
    semidefinite. Setting ``strict=False`` relaxes ``V`` to semidefinite,
    which the sensor-selection dual needs (``V = C* C``).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    strict: bool = field(default=True, repr=False)

    def __post_init__(self):
        A = as_cmatrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        B = as_cmatrix(self.B, "B", (n, None)) if np.size(self.B) else np.zeros((n, 0), complex)
        m = B.shape[1]
        C = as_cmatrix(self.C, "C", (None, n))
        V = as_cmatrix(self.V, "V", (n, n))
        Q = as_cmatrix(self.Q, "Q", (n, n))
        R = as_cmatrix(self.R, "R", (m, m)) if m else np.zeros((0, 0), complex)
        for name, M in (("V", V), ("Q", Q), ("R", R)):
            _check_hermitian(M, name)
        V, Q, R = herm(V), herm(Q), herm(R)
        if m and not is_positive_definite(R):
            raise InputError("R must be positive definite")
        if self.strict and not is_positive_definite(V):
            raise InputError("V must be positive definite")
        for name, M in (("Q", Q), ("V", V)):
            lo = np.linalg.eigvalsh(M).min() if n else 0.0
            if lo < -1e-10 * max(1.0, np.linalg.norm(M, 2)):
                raise InputError(f"{name} must be positive semidefinite")
        for name, M in zip("ABCVQR", (A, B, C, V, Q, R)):
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @cached_property
    def lyap(self) -> "LyapunovSolver":
        """Schur factorization of ``A`` reused by every solve on this model."""
        return LyapunovSolver(self.A)

    def with_inputs(self, cols) -> "PlantModel":
        """Model restricted to the input channels (columns of ``B``) in ``cols``."""
        cols = np.asarray(sorted(cols), dtype=int)
        reduced = dataclasses.replace(
            self, B=self.B[:, cols], R=self.R[np.ix_(cols, cols)]
        )
        if "lyap" in self.__dict__:
            reduced.__dict__["lyap"] = self.lyap
        return reduced


@dataclass(frozen=True, eq=False)
class CompletionData:
    """Known output-covariance entries: 0/1 mask ``E`` and values ``G`` (p x p).

    ``E`` must be symmetric so that ``A2`` maps Hermitian matrices to
    Hermitian matrices. Entries of ``G`` outside the mask are zeroed.
    """

    E: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        E = np.asarray(self.E, dtype=float)
        if E.ndim != 2 or E.shape[0] != E.shape[1]:
            raise DimensionError(f"E must be square, got {E.shape}")
        if not np.all((E == 0) | (E == 1)):
            raise InputError("E entries must be 0 or 1")
        if not np.array_equal(E, E.T):
            raise InputError("E must be symmetric")
        G = as_cmatrix(self.G, "G", E.shape) * E
        _check_hermitian(G, "G")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "G", herm(G))

    @property
    def p(self) -> int:
        return self.E.shape[0]


class LyapunovSolver:
    """Bartels-Stewart solver for ``A X + X A* + W = 0`` and its adjoint.

    ``A`` is reduced once to complex Schur form ``A = U T U*``; each solve is
    then a triangular Sylvester back-substitution (LAPACK ``ztrsyl``) plus
    two unitary similarity transforms, i.e. O(n^3).
    """

    def __init__(self, A):
        A = as_cmatrix(A, "A")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        self.A = A
        self.n = A.shape[0]
        self.T, self.U = sla.schur(A, output="complex")
        self.eigenvalues = np.diag(self.T).copy()
        lam = self.eigenvalues
        gap = np.abs(lam[:, None] + lam.conj()[None, :]).min() if self.n else np.inf
        self.separation = gap
        # ||A||_F >= ||A||_2: only pay for the SVD when the cheap screen fails
        tiny = np.finfo(float).tiny
        self.singular = False
        if gap <= 1e-10 * max(np.linalg.norm(self.T), tiny):
            self.singular = gap <= 1e-10 * max(np.linalg.norm(A, 2), tiny)

    def _check(self):
        if self.singular:
            raise SingularOperator(
                "A has eigenvalues l, m with l + conj(m) = 0 "
                f"(min |l + conj(m)| = {self.separation:.3e}); the map "
                "X -> A X + X A* is not invertible. Re-centre around a fixed "
                "stabilizing gain K0 and use A - B K0 in place of A."
            )

    def _trsyl(self, Ct, trana, tranb):
        X, scale, info = ztrsyl(self.T, self.T, Ct, trana=trana, tranb=tranb)
        if info < 0:
            raise SparsactError(f"ztrsyl argument error (info={info})")
        return X / scale

    def _solve(self, W, adjoint: bool, hermitian: bool) -> np.ndarray:
        self._check()
        W = np.asarray(W, dtype=np.complex128)
        if W.shape != (self.n, self.n):
            raise DimensionError(f"W has shape {W.shape}, expected {(self.n, self.n)}")
        U = self.U
        Xt = self._trsyl(-(U.conj().T @ W @ U), *(("C", "N") if adjoint else ("N", "C")))
        X = U @ Xt @ U.conj().T
        return herm(X) if hermitian else X

    def solve(self, W, hermitian: bool = True) -> np.ndarray:
        """Solve ``A X + X A* + W = 0``."""
        return self._solve(W, False, hermitian)

    def solve_adjoint(self, W, hermitian: bool = True) -> np.ndarray:
        """Solve ``A* X + X A + W = 0``."""
        return self._solve(W, True, hermitian)


def solve_lyapunov(A, W, hermitian: bool = True) -> np.ndarray:
    """Solve ``A X + X A* + W = 0`` for ``X``.

    Parameters
    ----------
    A : (n, n) array_like
    W : (n, n) array_like
        Forcing term; Hermitian for the usual covariance equation.
    hermitian : bool
        Return the Hermitian part of the solution (default). Disable for
        non-Hermitian forcing.

    Raises
    ------
    SingularOperator
        If ``A`` and ``-A*`` share an eigenvalue.
    """
    return LyapunovSolver(A).solve(W, hermitian=hermitian)


def solve_lyapunov_adjoint(A, W, hermitian: bool = True) -> np.ndarray:
    """Solve ``A* X + X A + W = 0`` for ``X``."""
    return LyapunovSolver(A).solve_adjoint(W, hermitian=hermitian)


def lyapunov_kronecker_oracle(A, W) -> np.ndarray:
    """Reference solution of ``A X + X A* + W = 0`` from the vectorized system.

    Forms ``(I kron A + conj(A) kron I) vec(X) = -vec(W)`` explicitly, so it
    is only meant for small ``n`` (at most 32) as an independent check.
    """
    A = as_cmatrix(A, "A")
    W = as_cmatrix(W, "W", A.shape)
    n = A.shape[0]
    if n > 32:
        raise DimensionError("Kronecker oracle limited to n <= 32")
    I = np.eye(n)
    K = np.kron(I, A) + np.kron(A.conj(), I)
    try:
        lu = sla.lu_factor(K, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularOperator(str(exc)) from exc
    piv = np.abs(np.diag(lu[0]))
    if piv.min() <= 1e-13 * max(piv.max(), np.finfo(float).tiny):
        raise SingularOperator("vectorized Lyapunov system is singular")
    x = sla.lu_solve(lu, -W.reshape(-1, order="F"))
    return x.reshape(n, n, order="F")


def apply_A1(A, X) -> np.ndarray:
    """``A X + X A*``."""
    A, X = np.asarray(A), np.asarray(X)
    if A.shape != X.shape or A.shape[0] != A.shape[1]:
        raise DimensionError(f"A1 needs square conformable A, X; got {A.shape}, {X.shape}")
    return A @ X + X @ A.conj().T


def apply_B(B, Y) -> np.ndarray:
    """``B Y + Y* B*``."""
    B, Y = np.asarray(B), np.asarray(Y)
    if B.shape[1] != Y.shape[0] or B.shape[0] != Y.shape[1]:
        raise DimensionError(f"B(Y) needs B (n x m), Y (m x n); got {B.shape}, {Y.shape}")
    BY = B @ Y
    return BY + BY.conj().T


def apply_B_adjoint(B, W) -> np.ndarray:
    """Adjoint of ``B(.)`` for the real inner product: ``B* (W + W*)``."""
    B, W = np.asarray(B), np.asarray(W)
    return B.conj().T @ (W + W.conj().T)


def _check_a2(C, E, M, rows):
    C, E = np.asarray(C), np.asarray(E)
    p, n = C.shape
    if E.shape != (p, p):
        raise DimensionError(f"E has shape {E.shape}, expected {(p, p)}")
    if np.shape(M) != (rows, rows):
        raise DimensionError(f"argument has shape {np.shape(M)}, expected {(rows, rows)}")
    return C, E


def apply_A2(C, E, X) -> np.ndarray:
    """``(C X C*) o E``."""
    C, E = _check_a2(C, E, X, np.shape(C)[1])
    return (C @ X @ C.conj().T) * E


def apply_A2_adjoint(C, E, Lam) -> np.ndarray:
    """``C* (E o Lam) C``, the adjoint of :func:`apply_A2`."""
    C, E = _check_a2(C, E, Lam, np.shape(C)[0])
    return C.conj().T @ (E * Lam) @ C


def x_of_y(model: PlantModel, Y) -> np.ndarray:
    """Covariance ``X`` solving ``A X + X A* = B Y + Y* B* - V``.

    Raises
    ------
    SingularOperator
        When ``A1`` is not invertible.
    """
    Y = np.asarray(Y, dtype=np.complex128)
    if Y.shape != (model.m, model.n):
        raise DimensionError(f"Y has shape {Y.shape}, expected {(model.m, model.n)}")
    return model.lyap.solve(model.V - apply_B(model.B, Y))


def is_positive_definite(X) -> bool:
    """True iff a Cholesky factorization of the Hermitian part succeeds."""
    X = np.asarray(X, dtype=np.complex128)
    if X.size == 0:
        return True
    if not np.all(np.isfinite(X)):
        return False
    try:
        np.linalg.cholesky(herm(X))
    except np.linalg.LinAlgError:
        return False
    return True


def spectral_abscissa(A) -> float:
    """Largest real part among the eigenvalues of ``A``."""
    A = np.asarray(A, dtype=np.complex128)
    if A.size == 0:
        return -np.inf
    return float(np.linalg.eigvals(A).real.max())


def is_hurwitz(A) -> bool:
    return spectral_abscissa(A) < 0


def is_stabilizable(A, B, tol: float = 1e-9) -> bool:
    """PBH test: ``[A - l I, B]`` has full row rank for every ``Re(l) >= 0``."""
    A = np.asarray(A, dtype=np.complex128)
    B = np.asarray(B, dtype=np.complex128).reshape(A.shape[0], -1)
    n = A.shape[0]
    scale = max(1.0, np.linalg.norm(np.hstack([A, B]), 2))
    for lam in np.linalg.eigvals(A):
        if lam.real < -tol * scale:
            continue
        s = np.linalg.svd(np.hstack([A - lam * np.eye(n), B]), compute_uv=False)
        if s[-1] <= tol * scale:
            return False
    return True


def stabilizing_gain(A, B) -> np.ndarray:
    """A gain ``K`` with ``A - B K`` Hurwitz.

    Returns zero when ``A`` is already Hurwitz. Otherwise the unstable part
    of the complex Schur form (eigenvalues with ``Re >= 0`` ordered last) is
    stabilized by ``K = B2* Z^{-1}``, where ``Z`` solves the Lyapunov
    equation of the shifted block ``T22 + beta I`` with
    ``beta = spectral_abscissa(A) + 1``. The closed-loop block then obeys
    ``(T22 - B2 K2) Z + Z (.)* = -2 beta Z``.
    """
    A = as_cmatrix(A, "A")
    B = np.asarray(B, dtype=np.complex128).reshape(A.shape[0], -1)
    n, m = B.shape
    sa = spectral_abscissa(A)
    if sa < 0:
        return np.zeros((m, n), dtype=np.complex128)
    if m == 0:
        raise NotStabilizable("A is not Hurwitz and there are no inputs")
    T, U, sdim = sla.schur(A, output="complex", sort=lambda z: z.real < 0)
    U2 = U[:, sdim:]
    T22 = T[sdim:, sdim:]
    B2 = U2.conj().T @ B
    beta = sa + 1.0
    shifted = T22 + beta * np.eye(T22.shape[0])
    try:
        Z = solve_lyapunov(-shifted, 2.0 * B2 @ B2.conj().T)
    except SingularOperator as exc:
        raise NotStabilizable(str(exc)) from exc
    try:
        L = np.linalg.cholesky(Z)
    except np.linalg.LinAlgError:
        raise NotStabilizable("unstable modes are not controllable from B") from None
    K2 = sla.cho_solve((L, True), B2).conj().T
    K = K2 @ U2.conj().T
    if not is_hurwitz(A - B @ K):
        raise NotStabilizable("stabilizing-gain bootstrap failed")
    return K


class AreSolution(NamedTuple):
    P: np.ndarray
    K: np.ndarray
    X: np.ndarray


def solve_are(
    model: PlantModel,
    K0: np.ndarray | None = None,
    tol: float = 1e-14,
    max_iter: int = 100,
) -> AreSolution:
    """Stabilizing solution of ``A* P + P A - P B R^{-1} B* P + Q = 0``.

    Newton-Kleinman iteration: each step solves the closed-loop Lyapunov
    equation ``(A - B K)* P + P (A - B K) + Q + K* R K = 0`` and updates
    ``K = R^{-1} B* P``. The starting gain is ``K0`` when it stabilizes,
    otherwise :func:`stabilizing_gain`.

    Returns
    -------
    AreSolution
        ``P``, the optimal gain ``K = R^{-1} B* P`` and the closed-loop
        covariance ``X`` solving ``(A - B K) X + X (A - B K)* + V = 0``.
        The optimal cost is ``trace(P V)``.

    Raises
    ------
    NotStabilizable
        If no stabilizing gain exists.
    """
    A, B, Q, R = model.A, model.B, model.Q, model.R
    n, m = model.n, model.m
    if m == 0:
        if not is_hurwitz(A):
            raise NotStabilizable("A is not Hurwitz and there are no inputs")
        K = np.zeros((0, n), dtype=np.complex128)
        P = model.lyap.solve_adjoint(Q)
        return AreSolution(P, K, model.lyap.solve(model.V))

    if K0 is None or not is_hurwitz(A - B @ K0):
        K = stabilizing_gain(A, B)
    else:
        K = np.asarray(K0, dtype=np.complex128)
    cR = sla.cho_factor(R)
    P_prev = None
    prev_change = np.inf
    for _ in range(max_iter):
        Acl = A - B @ K
        P = solve_lyapunov_adjoint(Acl, Q + K.conj().T @ R @ K)
        K = sla.cho_solve(cR, B.conj().T @ P)
        if P_prev is not None:
            change = np.linalg.norm(P - P_prev)
            scale = max(np.linalg.norm(P), np.finfo(float).tiny)
            # quadratic convergence stalls at a conditioning-dependent roundoff floor
            if change <= tol * scale or (change <= 1e-6 * scale and change > 0.5 * prev_change):
                break
            prev_change = change
        P_prev = P
    Acl = A - B @ K
    if not is_hurwitz(Acl):
        raise NotStabilizable("Riccati iteration did not return a stabilizing gain")
    X = solve_lyapunov(Acl, model.V)
    return AreSolution(P, K, X)


def operator_norm(
    apply: Callable[[np.ndarray], np.ndarray],
    adjoint: Callable[[np.ndarray], np.ndarray],
    shape: tuple,
    tol: float = 1e-10,
    max_iter: int = 1000,
    seed: int = 0,
) -> float:
    """Induced 2-norm of a real-linear map on complex matrices.

    Power iteration on ``adjoint(apply(.))``, where ``adjoint`` is taken with
    respect to the real inner product ``Re trace(M1* M2)``.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = adjoint(apply(v))
        lam_new = inner(v, w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))
