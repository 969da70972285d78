"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class SingularityError(DomainError):
    """A state coincides with (or enters the guard zone of) a gravitational singularity."""


class ConvergenceError(RuntimeError):
    """An iterative solve (Newton, continuation, bisection) failed to converge."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class StiffnessError(RuntimeError):
    """The adaptive integrator underflowed its step size."""


class InternalInconsistencyError(RuntimeError):
    """Two independent computations of the same quantity disagree beyond tolerance."""
