"""Error types raised by the exporter."""


class ExportError(Exception):
    """Conversion cannot proceed: bad inputs, bad map, or a contract diff."""


class MapFormatError(ExportError):
    """A name-map file violates the two-column text format."""


class ContainerFormatError(ExportError):
    """A weight container violates the MSEG-W1 layout."""
