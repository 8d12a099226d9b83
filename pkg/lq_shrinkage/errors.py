class LqShrinkageError(Exception):
    """Parent class for user errors or input errors.

    Exceptions of this type are handled by the command line tool
    and result in clear error messages, as opposed to backtraces.
    """

    exit_code = 1


class DomainError(LqShrinkageError, ValueError):
    """A parameter lies outside its admissible range."""


class HypothesisError(DomainError):
    """q below 1/rho: the constant-factor bound does not apply."""

    def __init__(self, rule_name: str, q: float, min_q: float):
        message = (
            f"rule {rule_name} requires q >= {min_q:g} (1/rho), got q = {q:g}"
        )
        super().__init__(message)


class DimensionError(LqShrinkageError, ValueError):
    """Array shapes do not chain."""


class NotAFrameError(LqShrinkageError, ValueError):
    """Synthesis matrix is rank deficient."""


class NotABiFrameError(LqShrinkageError, ValueError):
    """Primal and dual synthesis do not reproduce the identity."""


class RangeError(LqShrinkageError, ValueError):
    """Data is not in the range of the forward operator."""

    def __init__(self, residual: float, norm: float):
        self.residual = residual
        message = (
            f"h is outside range(L): |L L# h - h| = {residual:.3e} "
            f"exceeds tolerance for |h| = {norm:.3e}"
        )
        super().__init__(message)


class CurvatureError(LqShrinkageError):
    """The regularization curve has no curvature maximum."""


class DivergenceError(LqShrinkageError, ArithmeticError):
    """Iteration produced non-finite values."""

    exit_code = 3

    def __init__(self, iteration: int, method: str = "landweber"):
        self.iteration = iteration
        super().__init__(f"{method} diverged at iteration {iteration}")


class ConfigError(LqShrinkageError):
    """Invalid experiment configuration."""

    exit_code = 2


class SchemaError(ConfigError):
    """Schema errors"""

    def __init__(self, required_fields, field):
        message = f"{sorted(required_fields)} are required inside {field}."
        super().__init__(message)


class ProblemFileError(LqShrinkageError):
    """A referenced file is missing or unreadable."""

    exit_code = 4


class SweepError(LqShrinkageError):
    """A solver error annotated with the offending regularization weight."""

    def __init__(self, alpha: float, cause: LqShrinkageError):
        self.alpha = alpha
        self.exit_code = cause.exit_code
        super().__init__(f"alpha = {alpha:g}: {cause}")
