"""Synthetic blob segmentation data.

Each sample is a textured noise background with 1-3 soft-edged elliptical
blobs of a random bright color; the mask is the exact analytic
strictly-inside test of the same ellipses evaluated at integer pixel
coordinates, so there is no rasterization ambiguity to learn around.
Every sample is generated from its own (seed, index) stream, so datasets
are reproducible and index-parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from . import ops

AREA_LO, AREA_HI = 0.02, 0.30


@dataclass(frozen=True)
class Blob:
    cx: float
    cy: float
    ax: float          # semi-axis along the rotated x direction
    ay: float
    theta: float
    color: tuple[float, float, float]


@dataclass(frozen=True)
class BlobSample:
    image: np.ndarray      # (3, s, s) float32 in [0, 1]
    mask: np.ndarray       # (1, s, s) float32 in {0, 1}
    blobs: tuple[Blob, ...]


@dataclass(frozen=True)
class BlobDataset:
    seed: int
    size: int
    samples: tuple[BlobSample, ...]

    def __len__(self) -> int:
        return len(self.samples)

    def images(self) -> np.ndarray:
        return np.stack([s.image for s in self.samples])

    def masks(self) -> np.ndarray:
        return np.stack([s.mask for s in self.samples])


def ellipse_interior(blobs, size: int) -> np.ndarray:
    """Strict analytic interior of the blob union on the integer pixel grid."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    mask = np.zeros((size, size), dtype=bool)
    for b in blobs:
        dx, dy = xx - b.cx, yy - b.cy
        u = (dx * np.cos(b.theta) + dy * np.sin(b.theta)) / b.ax
        v = (-dx * np.sin(b.theta) + dy * np.cos(b.theta)) / b.ay
        mask |= (u * u + v * v) < 1.0
    return mask


def _texture(rng, size: int) -> np.ndarray:
    """Low-frequency dim noise field, (3, s, s) in roughly [0.1, 0.55]."""
    coarse = rng.uniform(0.0, 1.0, (1, 3, 6, 6))
    base = ops.upsample_bilinear(coarse, size, size)[0]
    fine = rng.uniform(-0.05, 0.05, (3, size, size))
    return np.clip(0.12 + 0.38 * base + fine, 0.0, 1.0)


def _sample_blobs(rng, size: int):
    for _ in range(64):
        blobs = []
        for _ in range(int(rng.integers(1, 4))):
            blobs.append(Blob(
                cx=float(rng.uniform(0.2, 0.8) * size),
                cy=float(rng.uniform(0.2, 0.8) * size),
                ax=float(rng.uniform(0.07, 0.28) * size),
                ay=float(rng.uniform(0.07, 0.28) * size),
                theta=float(rng.uniform(0.0, np.pi)),
                color=tuple(rng.uniform(0.6, 0.95, 3).round(6)),
            ))
        mask = ellipse_interior(blobs, size)
        frac = float(mask.mean())
        if AREA_LO <= frac <= AREA_HI:
            return tuple(blobs), mask
    raise ShapeError(f"no blob layout within area bounds after 64 draws (size {size})")


def _soft_alpha(blobs, size: int) -> list[np.ndarray]:
    """Per-blob soft coverage: sigmoid falloff of the ellipse quadratic."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    alphas = []
    for b in blobs:
        dx, dy = xx - b.cx, yy - b.cy
        u = (dx * np.cos(b.theta) + dy * np.sin(b.theta)) / b.ax
        v = (-dx * np.sin(b.theta) + dy * np.cos(b.theta)) / b.ay
        q = u * u + v * v
        alphas.append(ops._sigmoid(-(q - 1.0) / 0.035))
    return alphas


def gen_sample(seed: int, index: int, size: int) -> BlobSample:
    rng = np.random.default_rng((seed, index))
    img = _texture(rng, size).astype(np.float64)
    blobs, mask = _sample_blobs(rng, size)
    for b, alpha in zip(blobs, _soft_alpha(blobs, size)):
        color = np.asarray(b.color).reshape(3, 1, 1)
        shade = 1.0 + rng.uniform(-0.08, 0.08, (1, size, size))
        img = img * (1.0 - alpha) + (color * shade) * alpha
    return BlobSample(np.clip(img, 0.0, 1.0).astype(np.float32),
                      mask[None].astype(np.float32), blobs)


def gen_blobs(seed: int, n: int, size: int) -> BlobDataset:
    if size < 64:
        raise ShapeError(f"size must be >= 64, got {size}")
    if n < 1:
        raise ShapeError(f"n must be >= 1, got {n}")
    return BlobDataset(seed, size, tuple(gen_sample(seed, i, size) for i in range(n)))
