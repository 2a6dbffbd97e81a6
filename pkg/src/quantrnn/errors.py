"""Exception types shared across the library."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(ValueError):
    """Structurally invalid configuration, e.g. an even convolution kernel."""


class DomainError(ValueError):
    """Input lies outside the mathematical domain of the operation."""


class DataError(ValueError):
    """A data record violates its contract (bad label, out-of-range id)."""


class ParseError(ValueError):
    """A file could not be parsed; the message locates the offending spot."""


class StateError(RuntimeError):
    """Operation invoked in the wrong lifecycle state."""


class TrainingError(RuntimeError):
    """Training produced an unusable result, e.g. a non-finite loss."""
