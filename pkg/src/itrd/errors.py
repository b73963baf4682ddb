"""Exception hierarchy shared by the library and the CLI."""


class ItrdError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ItrdError, ValueError):
    """Shapes are incompatible with the requested operation."""


class DomainError(ItrdError, ValueError):
    """An argument lies outside the domain of the function (e.g. not an NPD matrix)."""


class DegenerateKernelError(ItrdError, ArithmeticError):
    """A Gram matrix (or Hadamard product) has a vanishing trace."""


class NumericalError(ItrdError, ArithmeticError):
    """An iterative routine failed to converge."""


class TrainingError(ItrdError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
