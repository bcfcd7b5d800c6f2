# dpconsider/errors.py

from typing import List, Optional


class DpConsiderError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(DpConsiderError, ValueError):
    pass


class DatasetValidationError(DpConsiderError, ValueError):
    """Raised when a dataset is used for fitting while it still has violations."""

    def __init__(self, violations: List["object"], message: Optional[str] = None):
        self.violations = list(violations)
        if message is None:
            head = "; ".join(str(v) for v in self.violations[:5])
            more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
            message = f"Dataset has {len(self.violations)} violation(s): {head}{more}"
        super().__init__(message)


class InvalidPmfError(DpConsiderError, ValueError):
    pass


class EmptyConsiderationSetError(DpConsiderError, ValueError):
    pass


class EnumerationLimitError(DpConsiderError, ValueError):
    pass


class InvalidProbabilityError(DpConsiderError, ValueError):
    pass


class UnknownSubjectError(DpConsiderError, KeyError):
    pass


class InvariantBreach(DpConsiderError, RuntimeError):
    """An internal sampler invariant no longer holds; the run cannot continue."""


class NumericalAbort(DpConsiderError, RuntimeError):
    def __init__(self, iteration: int, detail: str):
        self.iteration = iteration
        super().__init__(f"Numerical failure at iteration {iteration}: {detail}")


class ChainNotFoundError(DpConsiderError, FileNotFoundError):
    pass
