"""Exception types shared by the solvers."""


class LatticeError(Exception):
    """Base class for all errors raised by this package."""


class DomainViolation(LatticeError, ValueError):
    """A bond argument left the admissible domain of its pair potential."""

    def __init__(self, site, r, z, message=None):
        self.site = site
        self.r = r
        self.z = z
        if message is None:
            message = f"bond argument z={z!r} at site {site} (range r={r}) is outside the valid domain"
        super().__init__(message)


class NoConvergence(LatticeError, RuntimeError):
    """An iterative method hit its iteration cap."""

    def __init__(self, max_iter, residual=None, message=None):
        self.max_iter = max_iter
        self.residual = residual
        if message is None:
            message = f"no convergence after {max_iter} iterations (residual={residual!r})"
        super().__init__(message)


class SingularSystem(LatticeError, ArithmeticError):
    """A (constrained) linear system is numerically singular."""

    def __init__(self, message, pivot=None):
        self.pivot = pivot
        super().__init__(message)


class SingularTangent(SingularSystem):
    """Newton tangent is singular on the zero-mean subspace."""


class NonCoercive(LatticeError, ValueError):
    """Stiffness data violates the positivity needed for a unique solution."""

    def __init__(self, message, value=None):
        self.value = value
        super().__init__(message)


class NonZeroMeanRHS(LatticeError, ValueError):
    """Right-hand side is not orthogonal to constants."""
