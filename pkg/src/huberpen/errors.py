"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class NumericalError(RuntimeError):
    """An iterative computation failed to reach its certificate."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class DivergenceError(NumericalError):
    """The incremental iteration produced a non-finite iterate.

    ``trace`` holds the snapshots recorded before the failure.
    """

    def __init__(self, message, k, trace=None, **diagnostics):
        super().__init__(message, k=k, **diagnostics)
        self.k = k
        self.trace = trace
