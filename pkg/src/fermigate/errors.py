"""Exception types shared across the package."""


class FermigateError(Exception):
    """Base class for all package errors."""


class ConfigError(FermigateError):
    """Invalid configuration document or command-line usage."""


class IndefiniteMatrixError(FermigateError):
    """A matrix required to be positive definite is not."""


class ShiftError(FermigateError):
    """Inverse-iteration shift is not strictly below the lowest eigenvalue."""


class ConvergenceError(FermigateError):
    """Iterative solver failed to converge."""

    def __init__(self, message: str, iterations: int | None = None):
        super().__init__(message)
        self.iterations = iterations


class CapExceededError(FermigateError):
    """A configured size cap (determinant count, dense dimension) was exceeded."""
