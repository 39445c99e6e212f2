"""Core imaging primitives shared by every degradation method.

Images are planar float64 arrays (channel, row, column) with nominal
intensity range [0, 1]. Displacement fields store per-pixel (dx, dy)
in pixels. All stochastic helpers take an explicit RandomSource so that
the same seed always reproduces the same bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal


class TurbsimError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(TurbsimError, ValueError):
    """A parameter is outside its documented domain."""


class UnsupportedInputError(TurbsimError, ValueError):
    """The input image is not supported by the requested method."""


class PipelineError(TurbsimError, RuntimeError):
    """A batch run could not produce the requested outputs."""


_MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, index: int) -> int:
    """Derive a per-item 64-bit seed from a master seed and an index.

    Split-mix style: the index is folded into the master seed with the
    64-bit golden-ratio increment and the result is bit-mixed. Distinct
    indices under the same master seed give pairwise distinct seeds
    because every step is a bijection of the 64-bit state.
    """
    z = (master_seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class RandomSource:
    """Seeded random stream. Same seed, same sequence, same bits."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ParameterError("seed must be a non-negative integer")
        self.seed = int(seed) & _MASK64
        self.gen = np.random.default_rng(self.seed)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RandomSource(seed={self.seed})"


@dataclass
class ImageBuffer:
    """Planar image: data has shape (channels, height, width), float64."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ParameterError(
                f"image data must be (channels, height, width), got shape {arr.shape}"
            )
        self.data = arr

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageBuffer":
        """Build from (H, W) grayscale or (H, W, C) interleaved arrays."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            planar = arr[None, :, :]
        elif arr.ndim == 3:
            planar = np.moveaxis(arr, -1, 0)
        else:
            raise ParameterError(f"expected 2-D or 3-D array, got shape {arr.shape}")
        return cls(planar.copy())

    def to_interleaved(self) -> np.ndarray:
        """Return (H, W) for single-channel images, else (H, W, C)."""
        if self.channels == 1:
            return self.data[0].copy()
        return np.moveaxis(self.data, 0, -1).copy()

    def validate(self) -> None:
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise ParameterError("image dimensions must be positive")
        if not np.isfinite(self.data).all():
            raise ParameterError("image contains non-finite values")

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.data.copy())


@dataclass
class MotionField:
    """Per-pixel displacement in pixels; dx is horizontal, dy vertical."""

    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        self.dx = np.asarray(self.dx, dtype=np.float64)
        self.dy = np.asarray(self.dy, dtype=np.float64)
        if self.dx.ndim != 2 or self.dx.shape != self.dy.shape:
            raise ParameterError("dx and dy must be 2-D arrays of equal shape")

    @property
    def shape(self) -> tuple:
        return self.dx.shape

    @classmethod
    def zero(cls, height: int, width: int) -> "MotionField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.dx, self.dy)

    def validate(self) -> None:
        if not (np.isfinite(self.dx).all() and np.isfinite(self.dy).all()):
            raise ParameterError("displacement field contains non-finite values")


@dataclass
class Kernel2D:
    """Square odd-sided tap grid. Blur kernels are non-negative, sum 1."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ParameterError(f"kernel must be square, got shape {w.shape}")
        if w.shape[0] % 2 == 0:
            raise ParameterError(f"kernel side must be odd, got {w.shape[0]}")
        self.weights = w

    @property
    def side(self) -> int:
        return self.weights.shape[0]


@dataclass
class NoiseParams:
    """Additive zero-mean Gaussian pixel noise."""

    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ParameterError(f"noise sigma must be >= 0, got {self.sigma}")


def default_kernel_side(sigma: float, limit: int | None = None) -> int:
    """Tap-grid side for a Gaussian of width sigma: 2*ceil(3*sigma) + 1.

    When `limit` is given the side is capped to the largest odd value
    that fits, so kernels never exceed the image they act on.
    """
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    side = 2 * math.ceil(3.0 * sigma) + 1
    if limit is not None:
        cap = limit if limit % 2 == 1 else limit - 1
        side = min(side, max(cap, 1))
    return side


def _normalized_kernel(weights: np.ndarray) -> Kernel2D:
    total = float(weights.sum())
    if not np.isfinite(total) or total <= 0.0:
        raise ParameterError("kernel weights must have a positive finite sum")
    return Kernel2D(weights / total)


def gaussian_kernel(sigma: float, side: int | None = None) -> Kernel2D:
    """Isotropic Gaussian blur kernel, normalized to unit sum.

    Parameters
    ----------
    sigma : float
        Standard deviation in pixels, >= 0. Zero gives a delta kernel.
    side : int, optional
        Odd tap-grid side. Default is ``default_kernel_side(sigma)``.
    """
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if side is None:
        side = default_kernel_side(sigma)
    if side < 1 or side % 2 == 0:
        raise ParameterError(f"kernel side must be a positive odd integer, got {side}")
    if sigma == 0.0:
        w = np.zeros((side, side))
        w[side // 2, side // 2] = 1.0
        return Kernel2D(w)
    r = np.arange(side, dtype=np.float64) - (side - 1) / 2.0
    xx, yy = np.meshgrid(r, r)
    w = np.exp(-(xx**2 + yy**2) / (2.0 * sigma**2))
    return _normalized_kernel(w)


def anisotropic_gaussian_kernel(
    sigma_x: float, sigma_y: float, angle: float, side: int
) -> Kernel2D:
    """Rotated anisotropic Gaussian kernel, normalized to unit sum.

    `angle` (radians) rotates the sigma_x axis from the row direction
    toward the column direction. Equal sigmas reduce to the isotropic
    kernel for any angle.
    """
    if sigma_x <= 0 or sigma_y <= 0:
        raise ParameterError("anisotropic sigmas must be > 0")
    if side < 1 or side % 2 == 0:
        raise ParameterError(f"kernel side must be a positive odd integer, got {side}")
    r = np.arange(side, dtype=np.float64) - (side - 1) / 2.0
    xx, yy = np.meshgrid(r, r)
    c, s = math.cos(angle), math.sin(angle)
    u = c * xx + s * yy
    v = -s * xx + c * yy
    w = np.exp(-0.5 * (u**2 / sigma_x**2 + v**2 / sigma_y**2))
    return _normalized_kernel(w)


def convolve(img: ImageBuffer, kernel: Kernel2D) -> ImageBuffer:
    """Per-channel 2-D convolution with reflect padding.

    The image is reflect-padded by the kernel radius and convolved in
    the frequency domain, so the output has the input's shape and the
    borders see mirrored content rather than zeros.
    """
    side = kernel.side
    if side > min(img.height, img.width):
        raise ParameterError(
            f"kernel side {side} exceeds image extent "
            f"{img.height}x{img.width}"
        )
    r = side // 2
    out = np.empty_like(img.data)
    for c in range(img.channels):
        if r > 0:
            padded = np.pad(img.data[c], r, mode="reflect")
        else:
            padded = img.data[c]
        out[c] = signal.fftconvolve(padded, kernel.weights, mode="valid")
    return ImageBuffer(out)


def _bilinear_gather(plane: np.ndarray, sy: np.ndarray, sx: np.ndarray) -> np.ndarray:
    """Sample a 2-D plane at float coordinates, clamping to the border."""
    h, w = plane.shape
    sy = np.clip(sy, 0.0, h - 1.0)
    sx = np.clip(sx, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    ty = sy - y0
    tx = sx - x0
    top = plane[y0, x0] * (1.0 - tx) + plane[y0, x1] * tx
    bot = plane[y1, x0] * (1.0 - tx) + plane[y1, x1] * tx
    return top * (1.0 - ty) + bot * ty


def warp(img: ImageBuffer, fld: MotionField) -> ImageBuffer:
    """Backward-warp: output(p) = img(p - field(p)), bilinear sampling.

    Out-of-bounds source coordinates clamp to the border. A zero field
    returns the input bit-for-bit.
    """
    if fld.shape != (img.height, img.width):
        raise ParameterError(
            f"field shape {fld.shape} does not match image "
            f"{img.height}x{img.width}"
        )
    yy, xx = np.meshgrid(
        np.arange(img.height, dtype=np.float64),
        np.arange(img.width, dtype=np.float64),
        indexing="ij",
    )
    sy = yy - fld.dy
    sx = xx - fld.dx
    out = np.empty_like(img.data)
    for c in range(img.channels):
        out[c] = _bilinear_gather(img.data[c], sy, sx)
    return ImageBuffer(out)


def add_noise(img: ImageBuffer, params: NoiseParams, rng: RandomSource) -> ImageBuffer:
    """Add i.i.d. Gaussian noise per pixel and channel. No clipping here."""
    if params.sigma == 0.0:
        return img.copy()
    noise = rng.gen.standard_normal(img.data.shape) * params.sigma
    return ImageBuffer(img.data + noise)


def bilinear_resize(img: ImageBuffer, height: int, width: int) -> ImageBuffer:
    """Resize with center-aligned bilinear sampling.

    A target pixel center maps to source coordinate
    (i + 0.5) * scale - 0.5, which makes same-size resizing exact.
    """
    if height < 1 or width < 1:
        raise ParameterError("target size must be positive")
    sy = (np.arange(height, dtype=np.float64) + 0.5) * (img.height / height) - 0.5
    sx = (np.arange(width, dtype=np.float64) + 0.5) * (img.width / width) - 0.5
    syy, sxx = np.meshgrid(sy, sx, indexing="ij")
    out = np.empty((img.channels, height, width))
    for c in range(img.channels):
        out[c] = _bilinear_gather(img.data[c], syy, sxx)
    return ImageBuffer(out)


def resample(img: ImageBuffer, factor: float) -> ImageBuffer:
    """Bilinear downsample by `factor` then upsample back to full size.

    factor is the linear size ratio in [1/8, 1]; 1 leaves the image
    unchanged.
    """
    if not (0.125 <= factor <= 1.0):
        raise ParameterError(f"resample factor must lie in [1/8, 1], got {factor}")
    if factor == 1.0:
        return img.copy()
    h2 = max(1, int(round(img.height * factor)))
    w2 = max(1, int(round(img.width * factor)))
    down = bilinear_resize(img, h2, w2)
    return bilinear_resize(down, img.height, img.width)


def clip01(img: ImageBuffer) -> ImageBuffer:
    """Clamp intensities into [0, 1]. Applied once per degradation."""
    return ImageBuffer(np.clip(img.data, 0.0, 1.0))


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """Collapse RGB to single-channel luma (ITU-R 601 weights)."""
    if img.channels == 1:
        return img.copy()
    if img.channels != 3:
        raise UnsupportedInputError(
            f"grayscale conversion expects 1 or 3 channels, got {img.channels}"
        )
    luma = 0.299 * img.data[0] + 0.587 * img.data[1] + 0.114 * img.data[2]
    return ImageBuffer(luma[None, :, :])


def center_crop_square(img: ImageBuffer) -> ImageBuffer:
    """Crop the centered square of side min(height, width)."""
    s = min(img.height, img.width)
    top = (img.height - s) // 2
    left = (img.width - s) // 2
    return ImageBuffer(img.data[:, top : top + s, left : left + s].copy())
