"""Synthetic single-landmark task: a bright disc on a dark textured background.

The background is a low-contrast shading pattern shared by every image (the
stand-in for the consistent structure of a face) with per-image gain and
pixel noise on top.
"""

from __future__ import annotations

import numpy as np

from .imaging import GrayImage, Region
from .tree import SampleSet

DEFAULT_BOX = Region(32.0, 32.0, 48.0)


def shading_pattern(image_size: int, seed: int = 7, levels: float = 60.0, n_waves: int = 6) -> np.ndarray:
    """Sum of random low-frequency plane waves, rescaled to ``[0, levels]``."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:image_size, 0:image_size] / image_size
    out = np.zeros((image_size, image_size))
    for _ in range(n_waves):
        fx, fy = rng.uniform(-4, 4, size=2)
        out += rng.uniform(0.5, 1.0) * np.cos(2 * np.pi * (fx * xx + fy * yy) + rng.uniform(0, 2 * np.pi))
    out -= out.min()
    return out * (levels / out.max())


def disc_dataset(n: int, seed: int, image_size: int = 64, box: Region = DEFAULT_BOX,
                 radius: float = 5.0, noise: int = 4, pattern_seed: int = 7):
    """``n`` images with a disc centered uniformly inside ``box`` (disc fully inside).

    Returns ``(images, points)`` with ``points[i]`` the disc center ``(x, y)``.
    """
    rng = np.random.default_rng(seed)
    pattern = shading_pattern(image_size, pattern_seed)
    yy, xx = np.mgrid[0:image_size, 0:image_size]
    half = box.size / 2 - radius
    images, points = [], []
    for _ in range(n):
        cx = box.center_x + rng.uniform(-half, half)
        cy = box.center_y + rng.uniform(-half, half)
        bg = pattern * rng.uniform(0.7, 1.3) + rng.integers(-noise, noise + 1, size=pattern.shape)
        inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius
        disc = rng.integers(190, 256, size=pattern.shape)
        pixels = np.clip(np.where(inside, disc, np.rint(bg)), 0, 255).astype(np.uint8)
        images.append(GrayImage(pixels))
        points.append((float(cx), float(cy)))
    return images, np.array(points, np.float64).reshape(-1, 2)


def jittered_samples(images, points, box: Region, copies: int, center_jitter: float,
                     scale_jitter=(1.0, 1.0), seed: int = 0) -> SampleSet:
    """Training samples with ``copies`` randomly perturbed boxes per image."""
    rng = np.random.default_rng(seed)
    n = len(images)
    offsets = rng.uniform(-1.0, 1.0, size=(n, copies, 2))
    scales = rng.uniform(scale_jitter[0], scale_jitter[1], size=(n, copies))
    regions = np.empty((n * copies, 3))
    regions[:, 0] = (box.center_x + offsets[..., 0] * center_jitter * box.size).ravel()
    regions[:, 1] = (box.center_y + offsets[..., 1] * center_jitter * box.size).ravel()
    regions[:, 2] = (box.size * scales).ravel()
    pts = np.repeat(points, copies, axis=0)
    half = regions[:, 2] / 2
    targets = np.stack([(pts[:, 0] - regions[:, 0]) / half, (pts[:, 1] - regions[:, 1]) / half], axis=1)
    index = np.repeat(np.arange(n), copies)
    return SampleSet(images, index, regions, targets, pts)
