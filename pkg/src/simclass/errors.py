"""Exception types shared across the package."""


class DegenerateInputError(ValueError):
    """Input is formally valid but numerically degenerate (constant vector,
    zero-rank snapshot span, class with a single member, ...)."""


class ConfigurationError(ValueError):
    """A configuration value violates a stability or consistency constraint."""


class FitError(RuntimeError):
    """Metamodel calibration cannot proceed on the given design."""


class EmptySeedError(RuntimeError):
    """All candidate seed points of a class were filtered out."""

    def __init__(self, class_label, message=None):
        self.class_label = class_label
        super().__init__(message or f"no seed candidates left for class {class_label}")


class InvalidStateError(RuntimeError):
    """An operation was invoked on an object missing required state."""


class SingularCovarianceError(RuntimeError):
    """A covariance matrix is singular and no ridge was requested."""


class NonconvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap. Carries the best iterate."""

    def __init__(self, message, weights=None, residual_norm=None, iterations=None):
        super().__init__(message)
        self.weights = weights
        self.residual_norm = residual_norm
        self.iterations = iterations
