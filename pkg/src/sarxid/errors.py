"""Exception types raised across the package."""


class SarxError(Exception):
    """Base class for package errors."""


class ConfigError(SarxError, ValueError):
    """Invalid configuration or violated precondition on inputs."""


class SizingError(ConfigError):
    """Vector or matrix dimensions do not match the declared orders."""


class InstabilityError(SarxError, RuntimeError):
    """Simulated output exceeded the magnitude cap."""

    def __init__(self, step, value, cap):
        self.step = step
        self.value = value
        self.cap = cap
        super().__init__(f"output magnitude {value:.3g} exceeds cap {cap:.3g} at step {step}")


class NumericalError(SarxError, ArithmeticError):
    """Base class for numerical failures."""


class DegenerateRegressor(NumericalError):
    """A regressor (or a whole window) has zero norm."""


class IllConditioned(NumericalError):
    def __init__(self, cond, limit):
        self.cond = cond
        self.limit = limit
        super().__init__(f"condition estimate {cond:.3g} exceeds {limit:.3g}")


class ExactModeTooLarge(ConfigError):
    def __init__(self, window, cap):
        self.window = window
        self.cap = cap
        super().__init__(
            f"exact bound enumeration over 2^{window} vertices exceeds the cap of 2^{cap}; "
            "use bound_mode 'monte-carlo' instead"
        )


class PoleDegeneracy(NumericalError):
    """Pole on (or numerically at) the unit circle."""
