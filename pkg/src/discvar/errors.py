"""Exception types shared across the package."""


class DiscvarError(Exception):
    """Base class for all errors raised by discvar."""


class OutOfChart(DiscvarError):
    """A group element lies outside the domain of the retraction chart."""


class NotInvertible(DiscvarError):
    """A force or control map cannot be inverted for the requested value."""


class RankDeficient(DiscvarError):
    """A control matrix does not have the rank its actuation level requires."""


class DimensionMismatch(DiscvarError):
    """Array shapes are inconsistent with the declared problem dimensions."""


class ConfigError(DiscvarError):
    """A run configuration file is malformed or self-contradictory."""


class StepSolveFailed(DiscvarError):
    """The implicit solve inside a single integrator step failed."""

    def __init__(self, step, message=""):
        self.step = step
        super().__init__(message or f"implicit step solve failed at step {step}")


class SingularJacobian(DiscvarError):
    """Newton hit a numerically singular Jacobian."""

    def __init__(self, iteration, message=""):
        self.iteration = iteration
        super().__init__(message or f"singular Jacobian at iteration {iteration}")


class NoConvergence(DiscvarError):
    """An iterative solver ran out of iterations.

    Carries the best iterate seen so callers can still inspect or dump it.
    """

    def __init__(self, best_residual, iterations, best_x=None, report=None):
        self.best_residual = best_residual
        self.iterations = iterations
        self.best_x = best_x
        self.report = report
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(best residual {best_residual:.3e})"
        )
