class IBFGSError(Exception):
    """Base class for all errors raised by the ibfgs package."""


class DegenerateDenominatorError(IBFGSError):
    """A rank-one/rank-two update denominator is too close to zero."""


class SingularMatrixError(IBFGSError):
    pass


class RhoTooSmallError(IBFGSError):
    pass


class UnsupportedFlavorError(IBFGSError):
    pass


class InvariantViolationError(IBFGSError):
    pass


class EmptyLabeledSetError(IBFGSError):
    pass


class ConfigurationError(IBFGSError):
    pass


class NonFiniteIterateError(IBFGSError):
    """Raised when an iterate has a non-finite entry. `trace` holds the run up to that point."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class ParseError(IBFGSError):
    def __init__(self, line: int, reason: str):
        super().__init__(f'line {line}: {reason}')
        self.line = line
        self.reason = reason


class ExperimentError(IBFGSError):
    """Wraps an error raised inside one grid cell, keeping the cell coordinates."""

    def __init__(self, dataset: str, fold: int, variant: str, cause: str, c_pair: tuple[float, float] | None = None):
        where = f'dataset={dataset} fold={fold} variant={variant}'
        if c_pair is not None:
            where += f' C1={c_pair[0]:g} C2={c_pair[1]:g}'
        super().__init__(f'{where}: {cause}')
        self.dataset = dataset
        self.fold = fold
        self.variant = variant
        self.c_pair = c_pair
        self.cause = cause
