"""Exception types shared across the package."""


class FmdaError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(FmdaError):
    """Invalid configuration values, shapes, or input data."""


class UsageError(FmdaError):
    """API misuse: wrong method for an operation, stale caches, missing inputs."""


class LeakageError(FmdaError):
    """Few-shot training ids leaked into an evaluation split."""
