"""Exception hierarchy shared by every module."""


class BernmixError(ValueError):
    """Base class for all domain errors raised by the package."""


class ParseError(BernmixError):
    """A CSV token is not one of the accepted forms."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class StructuralError(BernmixError):
    """The input has the wrong shape (ragged rows, no data rows, ...)."""


class EmptyResultError(BernmixError):
    pass


class DimensionError(BernmixError):
    pass


class DomainError(BernmixError):
    """An argument lies outside the domain of the function."""


class InsufficientDataError(BernmixError):
    pass


class FitError(BernmixError):
    """Internal failure of the EM loop (non-finite objective)."""
