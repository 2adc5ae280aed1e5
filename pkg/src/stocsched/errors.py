"""Exception hierarchy shared by all modules."""


class StocSchedError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(StocSchedError, ValueError):
    pass


class InvalidInstanceError(StocSchedError, ValueError):
    pass


class MissingDeadlinesError(InvalidInstanceError):
    pass


class DimensionMismatchError(StocSchedError, ValueError):
    pass


class ContractViolationError(StocSchedError, RuntimeError):
    """A policy returned a job that was not available."""


class ConfigurationError(StocSchedError, ValueError):
    pass


class StateSpaceLimitExceeded(StocSchedError, MemoryError):
    pass


class ParseError(StocSchedError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmptyCategoryError(StocSchedError, ValueError):
    pass
