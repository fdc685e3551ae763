"""Exception types shared across the package.

Invalid arguments raise plain ValueError everywhere; the classes here cover
failure modes that callers may want to catch separately (and that the CLI
maps to distinct exit codes).
"""


class DivergenceError(RuntimeError):
    """Numerical divergence (NaN/Inf) detected during simulation or training.

    Carries the first offending timestep when known.
    """

    def __init__(self, message: str, timestep: int | None = None):
        super().__init__(message)
        self.timestep = timestep


class ConvergenceError(RuntimeError):
    """An iterative estimator failed to converge; carries the last estimate."""

    def __init__(self, message: str, estimate: float | None = None):
        super().__init__(message)
        self.estimate = estimate


class IngestionError(RuntimeError):
    """A dataset or serialized file on disk is missing or malformed."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path
