"""Problem-instance generators.

Random instances use ``numpy.random.Generator`` with the PCG64 bit
generator seeded from a single 64-bit integer, so a given seed produces the
same matrices on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    CompletionData,
    PlantModel,
    apply_A2,
    solve_lyapunov,
    spectral_abscissa,
)

__all__ = [
    "ShParams",
    "CompletionInstance",
    "fourier_d2",
    "swift_hohenberg",
    "random_stable_model",
    "completion_mask",
    "synthetic_completion",
]


@dataclass(frozen=True)
class ShParams:
    """Linearized Swift-Hohenberg setup on the periodic domain [0, 2 pi)."""

    n: int = 32
    c: float = -0.2
    alpha: float = 2.0
    omega: float = 1.25
    r_scale: float = 10.0

    def __post_init__(self):
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n must be even and >= 8, got {self.n}")


def fourier_d2(n: int) -> np.ndarray:
    """Fourier spectral second-derivative matrix on ``x_j = 2 pi j / n``.

    Even ``n`` only; this is the Toeplitz form with first column
    ``-pi^2 / (3 h^2) - 1/6`` on the diagonal and
    ``-(-1)^k / (2 sin^2(k h / 2))`` off it (Trefethen, Spectral Methods in
    MATLAB, ch. 3).
    """
    if n % 2:
        raise ValueError("fourier_d2 requires even n")
    h = 2 * np.pi / n
    k = np.arange(n)
    col = np.empty(n)
    col[0] = -np.pi**2 / (3 * h**2) - 1.0 / 6.0
    kk = k[1:]
    col[1:] = -0.5 * (-1.0) ** kk / np.sin(kk * h / 2) ** 2
    idx = np.abs(k[:, None] - k[None, :])
    return col[idx]


def swift_hohenberg(params: ShParams | None = None, **overrides) -> PlantModel:
    """Spectral discretization of the linearized Swift-Hohenberg operator.

    ``A = -(D2 + I)^2 - c I + diag(alpha cos(omega x_j))`` with actuators at
    every collocation point: ``B = C = V = Q = I`` and ``R = r_scale I``.
    """
    if params is None:
        params = ShParams(**overrides)
    elif overrides:
        params = ShParams(**{**params.__dict__, **overrides})
    n = params.n
    x = 2 * np.pi * np.arange(n) / n
    L = fourier_d2(n) + np.eye(n)
    A = -(L @ L) - params.c * np.eye(n) + np.diag(params.alpha * np.cos(params.omega * x))
    I = np.eye(n)
    return PlantModel(A=A, B=I, C=I, V=I, Q=I, R=params.r_scale * I)


def _unit_columns(M: np.ndarray) -> np.ndarray:
    return M / np.linalg.norm(M, axis=0, keepdims=True)


def _draw(rng, shape, complex_: bool) -> np.ndarray:
    M = rng.standard_normal(shape)
    if complex_:
        M = M + 1j * rng.standard_normal(shape)
    return M


def random_stable_model(
    seed: int,
    n: int,
    m: int,
    p: int | None = None,
    margin: float = 0.5,
    complex_: bool = False,
) -> PlantModel:
    """Random instance with Hurwitz ``A`` and identity weights.

    ``A = M - (spectral_abscissa(M) + margin) I`` for Gaussian ``M`` scaled
    by ``1/sqrt(n)``; ``B`` and ``C`` have unit-norm columns.
    """
    p = n if p is None else p
    if m > n or p > n:
        raise ValueError("random_stable_model needs m <= n and p <= n")
    rng = np.random.default_rng(seed)
    M = _draw(rng, (n, n), complex_) / np.sqrt(n)
    A = M - (spectral_abscissa(M) + margin) * np.eye(n)
    B = _unit_columns(_draw(rng, (n, m), complex_))
    C = _unit_columns(_draw(rng, (p, n), complex_))
    return PlantModel(A=A, B=B, C=C, V=np.eye(n), Q=np.eye(n), R=np.eye(m))


@dataclass(frozen=True, eq=False)
class CompletionInstance:
    model: PlantModel
    data: CompletionData
    sigma: np.ndarray = field(repr=False)

    @property
    def sigma11(self) -> np.ndarray:
        n = self.model.n
        return self.sigma[:n, :n]

    @property
    def sigma12(self) -> np.ndarray:
        n = self.model.n
        return self.sigma[:n, n:]

    def witness(self) -> tuple[np.ndarray, np.ndarray]:
        """A feasible pair ``(X, Y)`` (requires ``B = I``).

        ``X = Sigma11`` and ``Y = (I - Sigma12 - Sigma12*) / 2`` satisfy
        ``A X + X A* - Y - Y* + I = 0`` because the filtered covariance obeys
        ``A S11 + S11 A* + S12 + S12* = 0``.
        """
        n = self.model.n
        S12 = self.sigma12
        Y = 0.5 * (np.eye(n) - S12 - S12.conj().T)
        return self.sigma11, Y


def completion_mask(kind: str, p: int, rng=None, density: float = 0.3) -> np.ndarray:
    """Symmetric 0/1 mask of known output-covariance entries.

    ``diagonal`` keeps one-point correlations, ``full`` keeps everything and
    ``random_sym`` keeps the diagonal plus a symmetric random fraction
    ``density`` of the off-diagonal entries.
    """
    if kind == "diagonal":
        return np.eye(p)
    if kind == "full":
        return np.ones((p, p))
    if kind == "random_sym":
        rng = np.random.default_rng(0) if rng is None else rng
        upper = np.triu(rng.random((p, p)) < density, 1)
        return (upper | upper.T | np.eye(p, dtype=bool)).astype(float)
    raise ValueError(f"unknown mask kind {kind!r}")


def synthetic_completion(
    seed: int,
    n: int,
    mask_kind: str = "diagonal",
    p: int | None = None,
    density: float = 0.3,
) -> CompletionInstance:
    """Covariance-completion instance driven by low-pass filtered noise.

    The plant ``x' = A x + xi`` is forced by ``xi' = -xi + w`` with unit white
    ``w``. The stationary covariance of the cascade solves
    ``At S + S At* + Bt Bt* = 0`` with ``At = [[A, I], [0, -I]]`` and
    ``Bt = [0; I]``; the known data are ``G = (C S11 C*) o E``. The returned
    model uses ``B = V = R = I`` and ``Q = 0``.
    """
    base = random_stable_model(seed, n, n, p)
    A, C = base.A, base.C
    I, Z = np.eye(n), np.zeros((n, n))
    At = np.block([[A, I], [Z, -I]])
    Bt = np.vstack([Z, I])
    sigma = solve_lyapunov(At, Bt @ Bt.conj().T)
    rng = np.random.default_rng([seed, 1])
    E = completion_mask(mask_kind, C.shape[0], rng, density)
    G = apply_A2(C, E, sigma[:n, :n])
    model = PlantModel(A=A, B=I, C=C, V=I, Q=Z, R=I)
    return CompletionInstance(model=model, data=CompletionData(E=E, G=G), sigma=sigma)
