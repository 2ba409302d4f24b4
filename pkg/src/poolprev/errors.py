"""Exception hierarchy shared across the package."""


class PoolPrevError(Exception):
    """Base class for all errors raised by poolprev."""


class ValidationError(PoolPrevError, ValueError):
    """An argument is outside its mathematical domain or inconsistent."""


class PrecisionError(PoolPrevError, ArithmeticError):
    """Signed-weight cancellation exhausted the working precision.

    Raising ``PrecisionContext.digits`` usually fixes it.
    """


class TermLimitError(PoolPrevError, RuntimeError):
    """The mixture expansion would exceed the configured term cap."""


class InfeasibleFitError(PoolPrevError, ValueError):
    """No beta distribution has the requested mean and variance."""
