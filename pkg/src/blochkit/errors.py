"""Package-wide exception types."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance.

    Carries the last residual so callers can report how far off the
    iteration stopped.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
