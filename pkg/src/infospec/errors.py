"""Exception types shared across the toolkit."""


class InfoSpecError(Exception):
    """Base class for all toolkit errors."""


class ModelValidationError(InfoSpecError):
    """A model declaration violates its invariants (weights, stochasticity, alphabets)."""


class TailBudgetError(ModelValidationError):
    """Truncation cannot reach the requested tail mass within the support cap."""


class CapExceededError(InfoSpecError):
    """An enumeration, atom or oracle cap would be exceeded."""


class ZeroProbabilityError(InfoSpecError):
    """Density requested at an outcome outside the support."""


class UndefinedDensityError(InfoSpecError):
    """0/0 information density: both the kernel and the output marginal vanish."""


class MarginalUnavailableError(InfoSpecError):
    """Exact output marginal not computable and plug-in estimation is disabled."""


class ScheduleError(InfoSpecError):
    """A gamma schedule fails the sweep requirements (positive, vanishing, n*gamma divergent)."""


class InvariantViolationError(InfoSpecError):
    """A certified inequality failed numerically; indicates an implementation bug."""


class ConfigError(InfoSpecError):
    """Experiment config rejected; carries every violation, not just the first."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{ptr}: {msg}" for ptr, msg in self.violations)
        super().__init__(f"invalid config: {lines}")
