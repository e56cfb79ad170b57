"""Exception hierarchy."""


class AttractaError(Exception):
    """Base class for all library errors."""


class InvalidDistributionError(AttractaError, ValueError):
    pass


class InvalidSystemError(AttractaError, ValueError):
    pass


class InvalidParameterError(AttractaError, ValueError):
    pass


class ConfigError(AttractaError, ValueError):
    pass


class IntegrationAccuracyError(AttractaError, ArithmeticError):
    """Quadrature of a distributed term did not reach its tolerance."""

    def __init__(self, message, defect):
        super().__init__(f"{message} (estimated defect {defect:.3e})")
        self.defect = defect


class InsufficientHistoryError(AttractaError, LookupError):
    def __init__(self, lo, hi):
        super().__init__(f"history does not cover [{lo!r}, {hi!r}]")
        self.interval = (lo, hi)


class DomainExitError(AttractaError, ArithmeticError):
    def __init__(self, component, t, value=None):
        msg = f"component x{component + 1} left the domain at t={t!r}"
        if value is not None:
            msg += f" (value {value!r})"
        super().__init__(msg)
        self.component = component
        self.t = t
        self.value = value


class StepSizeUnderflowError(AttractaError, ArithmeticError):
    def __init__(self, t, h):
        super().__init__(f"step size underflow at t={t!r} (h={h:.3e})")
        self.t = t
        self.h = h


class InternalConsistencyError(AttractaError, RuntimeError):
    pass


class EquilibriumNotFoundError(AttractaError, RuntimeError):
    pass


class OutOfScopeError(AttractaError, ValueError):
    pass


class UnsupportedModelError(OutOfScopeError):
    pass


class StepLimitError(AttractaError, RuntimeError):
    def __init__(self, t, max_steps):
        super().__init__(f"exceeded {max_steps} steps at t={t!r}")
        self.t = t
