"""Exception types shared across the package."""


class LemoError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LemoError, ValueError):
    """Operands have incompatible or empty shapes."""


class InsufficientPointsError(LemoError, ValueError):
    """Fewer data points than the operation requires."""


class TensorFormatError(LemoError, ValueError):
    """A tensor file fails magic/version/dtype/length validation."""


class ConfigError(LemoError, ValueError):
    """A config value or combination of values is invalid."""


class NumericalError(LemoError, RuntimeError):
    """A non-finite value appeared where finite math was expected."""


class MetricUndefinedError(LemoError, ValueError):
    """The requested metric is undefined for the given inputs."""
