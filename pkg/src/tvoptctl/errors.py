"""Exception types shared across the package."""


class TvoptError(Exception):
    """Base class for all package errors."""


class DomainError(TvoptError):
    """Objective evaluated outside its domain (e.g. past a barrier pole)."""


class OrderError(TvoptError):
    """A required partial tensor or output derivative is not available."""


class GainError(TvoptError):
    """Pole set is not Hurwitz or not closed under conjugation."""


class SolveError(TvoptError):
    """Hessian solve failed; the strong-convexity assumption is violated."""


class SingularityError(TvoptError):
    """Decoupling matrix is singular (WMR: forward speed too close to zero)."""


class ConfigError(TvoptError):
    """Invalid configuration or precondition on a user-supplied setting."""


class ValidationError(TvoptError):
    """Numerical validation of plant linearization data failed."""


class ConvergenceError(TvoptError):
    """Newton solve for the time-varying optimizer did not converge."""


class StiffnessError(TvoptError):
    """Adaptive step size underflowed; the closed loop looks stiff."""


class FitError(TvoptError):
    """Polynomial path constraint system is singular."""
