"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class SeldForgeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SeldForgeError):
    """Invalid or missing configuration."""


class DataError(SeldForgeError):
    """Unreadable, malformed, or inconsistent input data."""


class NumericalError(SeldForgeError):
    """Non-finite values or diverging computations."""


class SceneOverlapError(DataError):
    """More simultaneous events than the configured cap allows."""

    def __init__(self, time_s: float, count: int, cap: int):
        super().__init__(
            f"{count} events active at t={time_s:.6f}s exceeds overlap cap {cap}"
        )
        self.time_s = time_s
        self.count = count
        self.cap = cap


class OverlapCapError(DataError):
    """Mixing two samples would exceed the overlap cap; retry with another partner."""


class DegenerateMelBandError(ConfigError):
    """Two mel filter centers collapse onto the same FFT bin."""

    def __init__(self, indices):
        super().__init__(f"mel filter centers collide on the same bin: {list(indices)}")
        self.indices = list(indices)


class AugmentConfigError(ConfigError):
    """Augmentation policy contains an op that is not allowed in that position."""


class UnsupportedTrackCountError(ConfigError):
    """Permutation search only supports small track counts."""
