"""Exception types shared across the package."""


class JFlowError(Exception):
    """Base class for all package-specific errors."""


class PositivityError(JFlowError):
    """A Hermitian form field failed a required pointwise positivity check.

    Carries the offending grid index, its coordinates and the margin
    (smallest eigenvalue) found there.
    """

    def __init__(self, message, index=None, point=None, margin=None):
        super().__init__(message)
        self.index = index
        self.point = point
        self.margin = margin


class ConeConditionError(JFlowError):
    """The cohomological cone condition c*[X] - [W] > 0 failed."""

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class DegenerateStiffnessError(JFlowError):
    """Time stepping rejected too many consecutive steps."""


class MAConvergenceError(JFlowError):
    """Newton iteration for the Monge-Ampere equation failed to converge.

    ``residuals`` holds the sup-norm residual per iteration for post-mortem.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class FitError(JFlowError):
    """A regression/fit had too little data to be meaningful."""


class ConfigError(JFlowError):
    """Configuration text failed validation; ``problems`` lists every issue."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
