"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Malformed or inconsistent input (shapes, non-finite values, negative variances)."""


class DegenerateInputError(ValueError):
    """Input is well formed but the requested quantity is undefined (e.g. a zero denominator)."""


class UnsupportedRegimeError(ValueError):
    """Parameter outside the range the model supports."""


class InfeasibleInstanceError(RuntimeError):
    """No state satisfying the constraint set could be found.

    ``diagnostic`` names the constraint family that blocked feasibility.
    """

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class SubproblemInfeasibleError(RuntimeError):
    """A convex subproblem was reported infeasible by its solver."""

    def __init__(self, message, report=None, constraint_index=None):
        super().__init__(message)
        self.report = report
        self.constraint_index = constraint_index
