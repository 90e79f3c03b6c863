"""Exception hierarchy shared by the library and mapped to exit codes by the CLI."""


class HgbicError(Exception):
    """Base class for all errors raised by hgbic."""


class DataError(HgbicError, ValueError):
    """Invalid dataset, dimension mismatch or non-finite input."""


class NumericalError(HgbicError, ArithmeticError):
    """A numerical routine could not produce a usable answer."""


class RankDeficientError(NumericalError):
    """The support submatrix does not have full column rank."""


class NotPositiveDefiniteError(NumericalError):
    """A matrix that must be positive definite is not."""


class EmptySelectionError(NumericalError):
    """Every candidate model was rejected, so nothing can be selected."""


class ConfigError(HgbicError):
    """Unreadable configuration file, unknown key or invalid value."""
