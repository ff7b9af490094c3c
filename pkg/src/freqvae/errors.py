"""Exception types shared across the package."""


class FavaeError(Exception):
    """Base class for all errors raised by freqvae."""


class DimensionError(FavaeError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class StateError(FavaeError, RuntimeError):
    """An object is in the wrong state (e.g. normalizing twice)."""


class ArgumentError(FavaeError, ValueError):
    """A scalar argument is out of its admissible range."""


class DataError(FavaeError, ValueError):
    """Input data is missing, empty, or malformed."""


class ConfigError(FavaeError, ValueError):
    """A configuration is inconsistent."""


class TrainingError(FavaeError, RuntimeError):
    """Training diverged (NaN/Inf loss)."""

    def __init__(self, step, message="non-finite loss"):
        super().__init__(f"{message} at step {step}")
        self.step = step
