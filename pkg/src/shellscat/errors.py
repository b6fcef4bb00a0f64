"""Exception types shared across the package.

Each class maps onto one CLI exit code, so callers can distinguish a bad
parameter from a solver that refuses to run outside its convergence regime.
"""


class ShellScatError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ParameterError(ShellScatError, ValueError):
    """An input violates a documented precondition."""

    exit_code = 2


class RegimeError(ShellScatError):
    """A solver was asked to run outside the regime where it converges.

    Raised, for example, when the Neumann series for the grid potential has a
    contraction proxy of at least one ("below lambda_0").
    """

    exit_code = 3


class DivergenceError(ShellScatError):
    """An iteration failed to converge although its precondition looked fine."""

    exit_code = 4


class SymbolSingularityError(ParameterError):
    """A field carries mass on the near-zero set of a Fourier symbol."""

    def __init__(self, message, modes=None):
        super().__init__(message)
        self.modes = [] if modes is None else list(modes)


class FieldIOError(ShellScatError, OSError):
    """Reading or writing a field, surface or report file failed."""

    exit_code = 5
