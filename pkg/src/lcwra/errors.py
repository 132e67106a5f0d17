"""Exception hierarchy shared by all solvers and the command line."""


class LcwraError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LcwraError, ValueError):
    """An argument lies outside the domain of a formula."""


class InputError(LcwraError, ValueError):
    """Malformed user input (files, configs, curve points)."""


class ValidationError(LcwraError):
    """An allocation violates one or more constraints beyond tolerance."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("constraint violation: " + "; ".join(self.violations))


class EligibilityError(LcwraError):
    """The scenario does not satisfy e_max >= t_max * p_max; use the DCP solver."""


class InfeasibleError(LcwraError):
    def __init__(self, message, task_id=None):
        self.task_id = task_id
        super().__init__(message)


class CapacityError(InfeasibleError):
    """A task demands more samples than its users hold."""


class UnsupportedStructureError(LcwraError):
    """Overlapping task groups where the decomposition needs disjoint ones."""


class DegenerateScenarioError(LcwraError):
    pass


class ConvergenceError(LcwraError):
    """Iterative method stopped without meeting its tolerance.

    ``best`` carries the best iterate found so far.
    """

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class SolverError(LcwraError):
    def __init__(self, message, best=None, residuals=None):
        self.best = best
        self.residuals = residuals
        super().__init__(message)
