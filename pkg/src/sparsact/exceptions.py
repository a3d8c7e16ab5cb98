"""Exception hierarchy shared by the solvers and the command-line front end."""


class SparsactError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SparsactError, ValueError):
    """Matrix arguments have inconsistent shapes."""


class SingularOperator(SparsactError):
    """The Lyapunov operator ``X -> A X + X A*`` is not invertible.

    This happens when ``A`` has eigenvalues ``l`` and ``m`` with
    ``l + conj(m) = 0`` (e.g. a pair of eigenvalues mirrored across the
    imaginary axis). The elimination of ``X`` through ``Y`` is then
    undefined; re-centre the design around a fixed stabilizing gain ``K0``
    (use ``A - B K0`` in place of ``A``) and treat ``K0`` as always active.
    """


class InfeasibleY(SparsactError):
    """``X(Y)`` is not positive definite, so ``K = Y X^{-1}`` is not stabilizing."""


class BoundUnavailable(SparsactError):
    """Sublevel-set constants cannot be formed (a weight matrix is singular)."""


class NotStabilizable(SparsactError):
    """The pair ``(A, B)`` admits no stabilizing state feedback."""


class NotObservable(SparsactError):
    """The pair ``(A_s, C)`` is not observable."""


class PolishInfeasible(SparsactError):
    """The reduced input matrix retained by a support cannot stabilize ``A``."""


class InputError(SparsactError, ValueError):
    """Malformed problem file or run configuration."""
