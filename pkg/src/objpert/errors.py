"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a bound or loss is defined."""


class CalibrationError(RuntimeError):
    """No noise scale inside the search bracket meets the privacy target."""


class NonConvergenceError(RuntimeError):
    """A solver hit its iteration cap before the gradient-norm stopping rule."""

    def __init__(self, message, grad_norm, iterations):
        super().__init__(message)
        self.grad_norm = grad_norm
        self.iterations = iterations
