"""Exception types shared across the package."""


class HBPOError(Exception):
    """Base class for all package errors."""


class ConfigError(HBPOError, ValueError):
    """Invalid configuration value.

    ``field`` carries a dotted path (``"trainer.eps_low"``) when the error
    originates from a config document.
    """

    def __init__(self, message: str, field: str | None = None) -> None:
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DomainError(HBPOError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class BatchError(HBPOError, ValueError):
    """Malformed rollout batch (empty subgroup, too few records, ...)."""


class NumericError(HBPOError, ArithmeticError):
    """Non-finite input or intermediate value."""


class TrainingError(HBPOError, RuntimeError):
    """A failure inside the training loop, tagged with the step it happened at."""

    def __init__(self, step: int, cause: BaseException) -> None:
        self.step = step
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
