"""Exception types shared across the toolkit."""


class ConfigurationError(ValueError):
    """Invalid family, instance, or experiment parameters."""


class DomainError(ValueError):
    """Argument outside a function's mathematical domain."""


class TapeUnderflowError(RuntimeError):
    """A replay tried to consume more rewards than an arm's tape holds."""

    def __init__(self, arm: int, have: int, need: int):
        self.arm = arm
        super().__init__(
            f"tape underflow on arm {arm}: have {have} rewards, need {need}"
        )


class TapeFormatError(ValueError):
    """Malformed offline reward log."""


class ResourceLimitError(RuntimeError):
    """An exact computation exceeded its configured resource cap."""


class UnsupportedModelError(TypeError):
    """An operation was applied to a distribution kind it does not support."""


class NumericalError(RuntimeError):
    """A linear-algebra or root-finding step failed unexpectedly."""


class EvaluationError(RuntimeError):
    """A user-supplied loss evaluator raised; the offending grid point is
    named in the message and the original exception chained as the cause."""
