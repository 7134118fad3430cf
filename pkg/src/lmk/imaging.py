"""Grayscale rasters, square regions and the normalized sampling frame.

A region is a square given by its center and side length.  Normalized
coordinates ``(u, v)`` in ``[-1, +1]^2`` map to pixel coordinates through
``center + u * size / 2``; ``u`` runs along columns (x), ``v`` along rows (y).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class InvalidParameterError(ValueError):
    """Raised when an operation receives an out-of-contract argument."""


class PGMError(ValueError):
    """Raised for unreadable or unsupported PGM files."""


def round_half_away(x: float) -> int:
    # x - trunc(x) is exact for doubles, so the .5 comparison never rounds
    t = math.trunc(x)
    if abs(x - t) >= 0.5:
        t += 1 if x > 0 else -1
    return t


class GrayImage:
    """Immutable 8-bit single-channel image stored row-major."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidParameterError(f"expected a non-empty 2-D array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.any(arr < 0) or np.any(arr > 255):
                raise InvalidParameterError("intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        self.pixels = arr

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "GrayImage":
        if width < 1 or height < 1:
            raise InvalidParameterError("width and height must be >= 1")
        if len(data) != width * height:
            raise InvalidParameterError(
                f"data length {len(data)} != width*height = {width * height}")
        return cls(np.frombuffer(data, dtype=np.uint8).reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def pixel(self, x: int, y: int) -> int:
        """Intensity at integer column ``x`` and row ``y`` (must be in bounds)."""
        return int(self.pixels[y, x])

    def mirrored(self) -> "GrayImage":
        """Horizontal flip: column ``x`` becomes ``width - 1 - x``."""
        return GrayImage(self.pixels[:, ::-1])

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))

    def __repr__(self):
        return f"GrayImage(width={self.width}, height={self.height})"


@dataclass(frozen=True)
class Region:
    """Square region; ``size`` is the side length in pixels."""

    center_x: float
    center_y: float
    size: float

    def __post_init__(self):
        if not self.size > 0:
            raise InvalidParameterError(f"region size must be > 0, got {self.size}")

    def to_pixel(self, u: float, v: float) -> tuple[float, float]:
        """Map normalized ``(u, v)`` to (real-valued) pixel coordinates."""
        return self.center_x + u * self.size / 2, self.center_y + v * self.size / 2

    def to_normalized(self, x: float, y: float) -> tuple[float, float]:
        half = self.size / 2
        return (x - self.center_x) / half, (y - self.center_y) / half


class NormLocation(NamedTuple):
    u: float
    v: float

    @classmethod
    def checked(cls, u: float, v: float) -> "NormLocation":
        if not (-1.0 <= u <= 1.0 and -1.0 <= v <= 1.0):
            raise InvalidParameterError(f"normalized location ({u}, {v}) outside [-1, 1]^2")
        return cls(u, v)


def pixel_coords(img: GrayImage, region: Region, u: float, v: float) -> tuple[int, int]:
    """Integer pixel addressed by ``(u, v)`` after rounding and border clamping."""
    x = region.center_x + u * region.size / 2
    y = region.center_y + v * region.size / 2
    # clamping first keeps huge coordinates cheap; same result as round-then-clamp
    x = min(max(x, -1.0), float(img.width))
    y = min(max(y, -1.0), float(img.height))
    xi = min(max(round_half_away(x), 0), img.width - 1)
    yi = min(max(round_half_away(y), 0), img.height - 1)
    return xi, yi


def sample_pixel(img: GrayImage, region: Region, loc) -> int:
    xi, yi = pixel_coords(img, region, loc[0], loc[1])
    return img.pixel(xi, yi)


def binary_test(img: GrayImage, region: Region, l1, l2) -> int:
    """0 if the intensity at ``l1`` is <= the intensity at ``l2``, else 1."""
    return 0 if sample_pixel(img, region, l1) <= sample_pixel(img, region, l2) else 1


def shrink_recenter(region: Region, new_center, factor: float) -> Region:
    if not 0 < factor <= 1:
        raise InvalidParameterError(f"shrink factor must be in (0, 1], got {factor}")
    return Region(float(new_center[0]), float(new_center[1]), region.size * factor)


def mirror_x(x: float, width: int) -> float:
    return (width - 1) - x


def read_pgm(path: str | os.PathLike) -> GrayImage:
    """Load a binary (P5) 8-bit PGM file."""
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_pgm(data, source=str(path))


def parse_pgm(data: bytes, source: str = "<bytes>") -> GrayImage:
    pos = 0
    tokens = []
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PGMError(f"{source}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise PGMError(f"{source}: unsupported format {tokens[0]!r}, only binary PGM (P5) is accepted")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PGMError(f"{source}: malformed PGM header") from None
    if maxval != 255:
        raise PGMError(f"{source}: only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise PGMError(f"{source}: bad dimensions {width}x{height}")
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise PGMError(f"{source}: expected {width * height} pixel bytes, found {len(raster)}")
    return GrayImage.from_bytes(width, height, raster)


def encode_pgm(img: GrayImage) -> bytes:
    return b"P5\n%d %d\n255\n" % (img.width, img.height) + img.pixels.tobytes()


def write_pgm(path: str | os.PathLike, img: GrayImage) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img))


def jitter_regions(region: Region, n: int, max_offset: float, scale_range, rng: np.random.Generator) -> np.ndarray:
    """``n`` perturbed copies of ``region`` as rows ``(center_x, center_y, size)``.

    Centers move by up to ``max_offset * size`` per axis; sizes are scaled by a
    uniform draw from ``scale_range``.
    """
    low, high = scale_range
    offsets = rng.uniform(-1.0, 1.0, size=(n, 2))
    scales = rng.uniform(low, high, size=n)
    out = np.empty((n, 3), np.float64)
    out[:, 0] = region.center_x + offsets[:, 0] * max_offset * region.size
    out[:, 1] = region.center_y + offsets[:, 1] * max_offset * region.size
    out[:, 2] = region.size * scales
    return out
