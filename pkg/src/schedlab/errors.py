"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A declarative config (experiment, environment, schedule) is invalid."""


class TraceFormatError(ValueError):
    """A trace CSV violates the slot,user,value contract."""


class AllocationError(ValueError):
    """An allocation violates the action box or its layout is wrong."""


class StateCapError(RuntimeError):
    """Exact solve refused: the enumerated state/action space exceeds the cap."""


class DivergenceError(RuntimeError):
    """Training produced non-finite values; a checkpoint was written if possible."""

    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
