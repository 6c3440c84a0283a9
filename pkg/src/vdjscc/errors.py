class DimensionError(ValueError):
    """Operand or stage shapes are incompatible."""


class ConfigError(ValueError):
    """A configuration value is invalid."""
