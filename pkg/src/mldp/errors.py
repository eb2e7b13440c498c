"""Exception hierarchy shared by every module."""


class MldpError(Exception):
    """Base class for all library errors."""


class ConfigurationError(MldpError, ValueError):
    """A parameter is out of range or a family/parameter combination is invalid."""


class ShapeError(MldpError, ValueError):
    """Arrays, grids or triples do not line up."""


class SolverError(MldpError, RuntimeError):
    """An implicit solve or adjoint solve failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericError(MldpError, ArithmeticError):
    """Overflow or non-finite values while evaluating an operator."""

    def __init__(self, message, state_norm=None):
        super().__init__(message)
        self.state_norm = state_norm
