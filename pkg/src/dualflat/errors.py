"""Exception hierarchy shared by all modules."""


class DualFlatError(Exception):
    """Base class for every error raised by the library."""


class DomainError(DualFlatError, ValueError):
    """A point lies outside the open domain of a generator or metric."""

    def __init__(self, message, point=None, parameter=None):
        super().__init__(message)
        self.point = point
        self.parameter = parameter


class ConvexityError(DualFlatError):
    """A Hessian that should be positive definite is not."""


class InversionError(DualFlatError):
    """Newton inversion of the gradient map failed to converge."""

    def __init__(self, message, residual=float("nan"), iterate=None):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


class DegeneracyError(DualFlatError):
    """A fundamental matrix is singular where it must be invertible."""


class IntegrationError(DualFlatError):
    """An ODE integration produced a non-finite state."""

    def __init__(self, message, last_time=float("nan")):
        super().__init__(message)
        self.last_time = last_time


class UnreachableError(DualFlatError):
    """Shooting failed to connect two points by a geodesic."""

    def __init__(self, message, mismatch=float("nan")):
        super().__init__(message)
        self.mismatch = mismatch


class SignatureError(DualFlatError):
    """A length was requested under a metric that is not Riemannian."""


class ProjectionError(DualFlatError):
    """Projection onto a submanifold did not converge or hit the boundary."""

    def __init__(self, message, best=None, gradient_norm=float("nan")):
        super().__init__(message)
        self.best = best
        self.gradient_norm = gradient_norm


class ValidationError(DualFlatError):
    """Input failed validation; ``errors`` holds (pointer, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p or '/'}: {m}" for p, m in self.errors))
