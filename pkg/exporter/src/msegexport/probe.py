"""Preprocessing probes.

A probe is a one-entry MSEG-W1 container holding the preprocessed tensor for
a given image, produced by this package's own implementation of the
consumer's input pipeline: scale uint8 RGB to [0,1], bilinear-resize with
half-pixel centers to a square size, then per-channel (x - mean) / std.
Committing a probe next to its source image gives both sides a concrete
fixture: if the consumer's preprocessing ever drifts from this tensor, the
two implementations no longer agree.
"""

from __future__ import annotations

import numpy as np

from .container import write_container
from .errors import ExportError

# Consumer defaults for photographic input.
DEFAULT_MEAN = (0.485, 0.456, 0.406)
DEFAULT_STD = (0.229, 0.224, 0.225)


def read_ppm(path):
    """Read a binary P6 image into an HWC uint8 array (maxval 255 only)."""
    with open(path, "rb") as f:
        data = f.read()

    pos = 0

    def token():
        nonlocal pos
        while True:
            while pos < len(data) and data[pos : pos + 1].isspace():
                pos += 1
            if pos < len(data) and data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos] != 0x0A:
                    pos += 1
                continue
            break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ExportError(f"{path}: truncated header")
        return data[start:pos]

    if token() != b"P6":
        raise ExportError(f"{path}: not a binary P6 image")
    w, h, maxval = int(token()), int(token()), int(token())
    if maxval != 255:
        raise ExportError(f"{path}: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + 3 * w * h]
    if len(raster) != 3 * w * h:
        raise ExportError(f"{path}: raster is short, expected {3 * w * h} bytes")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()


def _resize_axis_coords(in_size, out_size):
    # half-pixel centers: src = (dst + 0.5) * (in / out) - 0.5, clamped
    dst = np.arange(out_size, dtype=np.float64)
    src = np.clip((dst + 0.5) * (in_size / out_size) - 0.5, 0.0, in_size - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, in_size - 1)
    return i0, i1, (src - i0).astype(np.float32)


def resize_bilinear(x, out_h, out_w):
    """Separable bilinear resize of an (n,c,h,w) float32 tensor."""
    _, _, h, w = x.shape
    r0, r1, rw = _resize_axis_coords(h, out_h)
    rows = x[:, :, r0, :] + rw[None, None, :, None] * (x[:, :, r1, :] - x[:, :, r0, :])
    c0, c1, cw = _resize_axis_coords(w, out_w)
    return rows[:, :, :, c0] + cw[None, None, None, :] * (rows[:, :, :, c1] - rows[:, :, :, c0])


def preprocess(img, size, mean=DEFAULT_MEAN, std=DEFAULT_STD):
    """HWC uint8 RGB -> normalized (1,3,size,size) float32 tensor."""
    a = np.asarray(img)
    if a.dtype != np.uint8 or a.ndim != 3 or a.shape[2] != 3:
        raise ExportError(f"probe input must be HWC uint8 RGB, got {a.dtype} {a.shape}")
    if size < 64:
        raise ExportError(f"target size must be >= 64, got {size}")
    x = a.astype(np.float32).transpose(2, 0, 1)[None] / np.float32(255.0)
    x = resize_bilinear(x, size, size)
    m = np.asarray(mean, dtype=np.float32).reshape(1, 3, 1, 1)
    s = np.asarray(std, dtype=np.float32).reshape(1, 3, 1, 1)
    if np.any(s <= 0):
        raise ExportError(f"std must be positive, got {std}")
    return (x - m) / s


def make_probe(image_path, size, mean=DEFAULT_MEAN, std=DEFAULT_STD):
    """Build probe container bytes for a P6 image."""
    img = read_ppm(image_path)
    tensor = preprocess(img, size, mean=mean, std=std)
    meta = {
        "kind": "preprocess-probe",
        "source_hw": [int(img.shape[0]), int(img.shape[1])],
        "size": int(size),
        "mean": [float(v) for v in mean],
        "std": [float(v) for v in std],
    }
    return write_container([("probe", tensor)], meta=meta)
