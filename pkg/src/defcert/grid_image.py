"""Images on the normalized [-1, 1]^2 grid and bilinear resampling.

Pixel column ``c`` of a ``W``-wide image sits at ``-1 + 2c/(W-1)``; the same
holds for rows. Both corners map exactly to +/-1, so one pixel step equals
``2/(N-1)`` normalized units (see :func:`pixels_per_unit`).

Samples that fall outside the frame see zero-valued pixels beyond the border,
so the image fades to black over the first out-of-frame texel and is exactly
zero from there on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ParameterError, ShapeError

# Pixel-space distance below which a sample position is snapped onto a node.
_SNAP = 1e-10


@dataclass(frozen=True, eq=False)
class Image:
    """Channel-major image with intensities in [0, 1].

    ``pixels`` has shape ``(channels, height, width)`` and is stored as a
    read-only float64 array.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or 0 in arr.shape:
            raise ShapeError(f"expected (C, H, W) pixels, got shape {arr.shape}")
        if arr.shape[0] not in (1, 3):
            raise ShapeError(f"channels must be 1 or 3, got {arr.shape[0]}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ParameterError("pixel intensities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_uint8(cls, data) -> "Image":
        return cls(np.asarray(data, dtype=np.uint8) / 255.0)

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True)
class CoordinateField:
    """Normalized coordinates of every pixel; ``x`` and ``y`` are (H, W)."""

    x: np.ndarray
    y: np.ndarray

    @property
    def width(self) -> int:
        return self.x.shape[1]

    @property
    def height(self) -> int:
        return self.x.shape[0]


def axis_coordinates(n: int) -> np.ndarray:
    if n < 1:
        raise ShapeError(f"axis length must be >= 1, got {n}")
    if n == 1:
        return np.zeros(1)
    return -1.0 + 2.0 * np.arange(n) / (n - 1)


def pixels_per_unit(n: int) -> float:
    """Conversion factor from normalized units to pixels along an axis of length n."""
    return (n - 1) / 2.0


@lru_cache(maxsize=64)
def normalized_grid(width: int, height: int) -> CoordinateField:
    if width < 1 or height < 1:
        raise ShapeError(f"invalid grid dimensions {width}x{height}")
    x, y = np.meshgrid(axis_coordinates(width), axis_coordinates(height))
    x.setflags(write=False)
    y.setflags(write=False)
    return CoordinateField(x, y)


def _snap(pos: np.ndarray) -> np.ndarray:
    nearest = np.rint(pos)
    return np.where(np.abs(pos - nearest) <= _SNAP, nearest, pos)


def _bilinear(pixels: np.ndarray, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Sample ``pixels`` (C, H, W) at pixel-space positions of shape S; returns (C,) + S."""
    C, H, W = pixels.shape
    # two texels of zero padding: a clipped top-left tap keeps all four taps in range
    padded = np.zeros((C, H + 4, W + 4))
    padded[:, 2:-2, 2:-2] = pixels
    flat = padded.reshape(C, -1)
    stride = W + 4

    cols = _snap(cols)
    rows = _snap(rows)
    c0 = np.floor(cols)
    r0 = np.floor(rows)
    fc = cols - c0
    fr = rows - r0
    # anything clipped lies at least a texel outside, where every tap is zero
    base = (np.clip(r0, -2, H).astype(np.intp) + 2) * stride + np.clip(c0, -2, W).astype(np.intp) + 2

    top = flat[:, base]
    top += fc * (flat[:, base + 1] - top)
    bottom = flat[:, base + stride]
    bottom += fc * (flat[:, base + stride + 1] - bottom)
    top += fr * (bottom - top)
    return np.clip(top, 0.0, 1.0, out=top)


def bilinear_sample(image: Image, point) -> np.ndarray:
    """Intensity per channel at a normalized point ``(x, y)``."""
    px, py = (float(p) for p in point)
    if not (np.isfinite(px) and np.isfinite(py)):
        raise ParameterError(f"non-finite sample coordinate {point!r}")
    col = (px + 1.0) * pixels_per_unit(image.width)
    row = (py + 1.0) * pixels_per_unit(image.height)
    return _bilinear(image.pixels, np.array(col), np.array(row))


def warp_pixels(pixels: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Batched warp: ``pixels`` is (C, H, W), ``u``/``v`` are (..., H, W).

    Output pixel (r, c) samples the input at grid(r, c) + (u, v). Returns
    shape ``(..., C, H, W)``.
    """
    C, H, W = pixels.shape
    if u.shape[-2:] != (H, W) or v.shape != u.shape:
        raise ShapeError(f"field of shape {u.shape} does not match image {H}x{W}")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ParameterError("vector field contains non-finite displacements")
    # displacements are converted straight to pixel units so that a zero field
    # lands exactly on the nodes
    cols = np.arange(W, dtype=np.float64) + u * pixels_per_unit(W)
    rows = np.arange(H, dtype=np.float64)[:, None] + v * pixels_per_unit(H)
    out = _bilinear(pixels, cols, rows)  # (C, ..., H, W)
    return np.moveaxis(out, 0, -3)


def warp(image: Image, field) -> Image:
    """Deform ``image`` by a vector field exposing ``u`` and ``v`` arrays."""
    u = np.asarray(field.u, dtype=np.float64)
    v = np.asarray(field.v, dtype=np.float64)
    if u.shape != (image.height, image.width):
        raise ShapeError(
            f"field is {u.shape[::-1]} but image is {image.width}x{image.height}"
        )
    return Image(warp_pixels(image.pixels, u, v))


def write_pgm(image: Image, path) -> None:
    """Binary PGM (P5, maxval 255); colour images are averaged to gray."""
    gray = image.pixels.mean(axis=0)
    data = np.rint(gray * 255.0).astype(np.uint8)
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def read_pgm(path) -> Image:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise DataFormatError(f"{path}: not a binary PGM")
    width, height, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    body = raw[len(raw) - width * height:]
    data = np.frombuffer(body, dtype=np.uint8).reshape(height, width)
    return Image(data / float(maxval))
