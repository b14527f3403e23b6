"""Exception types shared across the package."""


class ContrastLabError(Exception):
    """Base class for all package errors."""


class ShapeError(ContrastLabError):
    """Dimension or shape mismatch in an array operation."""


class ConvergenceError(ContrastLabError):
    """Iterative routine failed to converge within its step cap."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class GenerationError(ContrastLabError):
    """Dataset rejection sampling exhausted its attempt budget."""

    def __init__(self, message, attempts=None):
        super().__init__(message)
        self.attempts = attempts


class EnumerationError(ContrastLabError):
    """Exact subset enumeration would exceed the configured cap."""


class DivergenceError(ContrastLabError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class EvaluationError(ContrastLabError):
    """A probe evaluation produced a non-finite value."""


class ConfigError(ContrastLabError):
    """Experiment configuration is malformed or violates an invariant."""
