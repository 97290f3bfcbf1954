"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """An input violates a documented invariant (shape, normalization, positivity...)."""


class ConvergenceError(RuntimeError):
    """An iterative estimator stopped before meeting its tolerance.

    The best iterate found so far travels with the exception so callers can
    still inspect or report it.
    """

    def __init__(self, message, best=None, loglikelihood=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.loglikelihood = loglikelihood
        self.iterations = iterations
