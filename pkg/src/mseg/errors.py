"""Exception types shared across the engine.

The CLI maps these onto exit codes: usage problems exit 1, data/file
problems exit 2, numeric failures exit 3.
"""


class ShapeError(ValueError):
    """An input tensor or parameter has an incompatible dimension."""


class GraphBuildError(ValueError):
    """A network description is internally inconsistent (strides, channels)."""


class NumericError(ArithmeticError):
    """A computation produced NaN/Inf or failed a numeric check."""


class WeightFormatError(ValueError):
    """An MSEG-W1 byte stream is malformed."""


class ImageFormatError(ValueError):
    """A PPM/PGM byte stream is malformed."""


class ConfigError(ValueError):
    """A preset/config file cannot be parsed or fails validation."""
