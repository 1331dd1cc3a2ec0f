"""Exception types raised across the pipeline."""


class SurroError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SurroError, ValueError):
    pass


class InvalidConfig(SurroError, ValueError):
    pass


class ShapeError(SurroError, ValueError):
    pass


class MalformedWeather(SurroError, ValueError):
    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class DegenerateFeature(SurroError, ValueError):
    pass


class InsufficientData(SurroError, ValueError):
    pass


class StaleTape(SurroError, RuntimeError):
    """backward() was called twice on the same recorded graph."""


class NumericFailure(SurroError, ArithmeticError):
    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch


class UntrainedModel(SurroError, RuntimeError):
    pass


class MalformedModel(SurroError, ValueError):
    pass


class UndefinedCorrelation(SurroError, ValueError):
    pass


class MalformedData(SurroError, ValueError):
    """A dataset directory or matrix file is missing pieces or unreadable."""
