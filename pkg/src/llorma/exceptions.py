"""Exception hierarchy shared by the library and the command line tool."""


class LLORMAError(Exception):
    """Base class for all errors raised by this package."""


class DataError(LLORMAError, ValueError):
    """Input data could not be turned into a valid rating matrix."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RangeError(DataError):
    pass


class DuplicateError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class ShapeError(LLORMAError, ValueError):
    pass


class ConfigError(LLORMAError, ValueError):
    """Invalid or infeasible configuration."""


class InsufficientEntriesError(ConfigError):
    pass


class SizeError(ConfigError):
    """Dense solver asked to handle a matrix above the size cap."""


class NumericalError(LLORMAError, ArithmeticError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, epoch, loss=float("nan")):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")


class EmptyNeighborhoodError(NumericalError):
    """Every kernel weight around an anchor (or query) is zero."""
