"""Binary PPM (P6) and PGM (P5) image I/O plus network preprocessing.

Only maxval 255 is supported.  Header comments (``#`` to end of line) are
accepted anywhere whitespace is legal.  Images are numpy uint8, HWC for
color and HW for grayscale.
"""

from __future__ import annotations

import numpy as np

from .errors import ImageFormatError, ShapeError
from . import ops

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def _parse_pnm(buf: bytes, want_magic: str):
    if len(buf) < 2 or buf[:1] != b"P":
        raise ImageFormatError("not a PNM file (missing 'P' signature)")
    magic = buf[:2].decode("ascii", "replace")
    if magic != want_magic:
        raise ImageFormatError(f"expected {want_magic} data, got signature {magic!r}")
    pos, tokens = 2, []
    while len(tokens) < 3:
        if pos >= len(buf):
            raise ImageFormatError("truncated header: fewer than 3 size/maxval fields")
        c = buf[pos:pos + 1]
        if c == b"#":
            nl = buf.find(b"\n", pos)
            pos = len(buf) if nl < 0 else nl + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(buf) and not buf[end:end + 1].isspace() and buf[end:end + 1] != b"#":
                end += 1
            tokens.append(buf[pos:end])
            pos = end
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ImageFormatError(f"non-numeric header fields {tokens!r}") from None
    if w < 1 or h < 1:
        raise ImageFormatError(f"bad image size {w}x{h}")
    if maxval != 255:
        raise ImageFormatError(f"only maxval 255 is supported, got {maxval}")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise ImageFormatError("missing single whitespace between maxval and raster")
    pos += 1
    channels = 3 if want_magic == "P6" else 1
    need = w * h * channels
    raster = buf[pos:pos + need]
    if len(raster) < need:
        raise ImageFormatError(f"truncated raster: need {need} bytes, have {len(raster)}")
    arr = np.frombuffer(raster, dtype=np.uint8)
    return arr.reshape(h, w, 3) if channels == 3 else arr.reshape(h, w)


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return _parse_pnm(f.read(), "P6")


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return _parse_pnm(f.read(), "P5")


def _check_u8(img, ndim, what):
    a = np.asarray(img)
    if a.ndim != ndim or (ndim == 3 and a.shape[2] != 3):
        raise ShapeError(f"{what} must have shape {'(h,w,3)' if ndim == 3 else '(h,w)'}, got {a.shape}")
    if a.dtype != np.uint8:
        raise ShapeError(f"{what} must be uint8, got {a.dtype}")
    return a


def write_ppm(path, img) -> None:
    a = _check_u8(img, 3, "PPM image")
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (a.shape[1], a.shape[0]))
        f.write(np.ascontiguousarray(a).tobytes())


def write_pgm(path, img) -> None:
    a = _check_u8(img, 2, "PGM image")
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (a.shape[1], a.shape[0]))
        f.write(np.ascontiguousarray(a).tobytes())


def preprocess(img, size: int, mean=IMAGENET_MEAN, std=IMAGENET_STD) -> np.ndarray:
    """HWC uint8 -> normalized (1,3,size,size) float32.

    Scale to [0,1], bilinear-resize, then per-channel (x - mean) / std.
    """
    if size < 64:
        raise ShapeError(f"target size must be >= 64, got {size}")
    a = _check_u8(img, 3, "input image")
    x = a.astype(np.float32).transpose(2, 0, 1)[None] / np.float32(255.0)
    x = ops.upsample_bilinear(x, size, size)
    m = np.asarray(mean, dtype=np.float32).reshape(1, 3, 1, 1)
    s = np.asarray(std, dtype=np.float32).reshape(1, 3, 1, 1)
    if np.any(s <= 0):
        raise ShapeError(f"std must be positive, got {std}")
    return (x - m) / s


def mask_to_u8(prob: np.ndarray) -> np.ndarray:
    """Probability map in [0,1] -> uint8 grayscale, rounding half to even."""
    p = np.asarray(prob, dtype=np.float64)
    if p.ndim != 2:
        raise ShapeError(f"probability map must be 2-d, got shape {p.shape}")
    return np.clip(np.rint(p * 255.0), 0, 255).astype(np.uint8)


def mask_from_u8(img: np.ndarray) -> np.ndarray:
    """uint8 grayscale -> binary {0,1} float32 mask (threshold at 128)."""
    a = _check_u8(img, 2, "mask image")
    return (a >= 128).astype(np.float32)


def binary_to_u8(mask: np.ndarray) -> np.ndarray:
    """Binary {0,1} mask -> uint8 with exactly 0/255 values."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ShapeError(f"mask must be 2-d, got shape {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ShapeError("mask must contain only 0/1 values")
    return (m.astype(np.uint8)) * np.uint8(255)
