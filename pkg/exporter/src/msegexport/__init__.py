"""msegexport: convert PyTorch checkpoints into MSEG-W1 weight containers.

The package talks to the segmentation engine only through its public
surfaces: the MSEG-W1 container layout, the engine CLI's JSON summary (for
expected entry lists), and plain image files. It never imports the engine.
"""

from .checkpoint import load_checkpoint
from .container import read_container, read_container_file, write_container
from .errors import ContainerFormatError, ExportError, MapFormatError
from .export import diff_expected, export, format_diff, load_expected
from .namemap import parse_namemap, read_namemap
from .probe import make_probe, preprocess, read_ppm, resize_bilinear

__version__ = "0.1.0"

__all__ = [
    "ContainerFormatError",
    "ExportError",
    "MapFormatError",
    "diff_expected",
    "export",
    "format_diff",
    "load_checkpoint",
    "load_expected",
    "make_probe",
    "parse_namemap",
    "preprocess",
    "read_container",
    "read_container_file",
    "read_namemap",
    "read_ppm",
    "resize_bilinear",
    "write_container",
]
