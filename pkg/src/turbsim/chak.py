"""Jitter degradation built from thousands of small random motion patches.

A motion field is assembled by superposing K small patches at uniform
random centers. Each patch is a pair of S x S white-noise planes,
smoothed inside the patch with a wide Gaussian (reflect padding) and
scaled by a per-patch amplitude drawn from a uniform range. The image
is blurred, backward-warped by the field, and noise is added; the
result is clipped once at the end.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import (
    ImageBuffer,
    MotionField,
    NoiseParams,
    ParameterError,
    RandomSource,
    add_noise,
    clip01,
    convolve,
    default_kernel_side,
    gaussian_kernel,
    warp,
)


@dataclass
class ChakParams:
    """Patch-superposition jitter parameters.

    The patch count is drawn as
    ``iteration_base + iteration_step * randint(0, iteration_levels - 1)``
    so the defaults give K in {1000, 4000, 7000, 10000, 13000}.
    """

    patch_size: int = 6
    smoothing_sigma: float = 16.0
    deformation_strength: tuple[float, float] = (0.13, 0.25)
    iteration_base: int = 1000
    iteration_step: int = 3000
    iteration_levels: int = 5
    blur_sigma: float = 1.5
    noise: NoiseParams = field(default_factory=NoiseParams)

    def __post_init__(self):
        if self.patch_size < 1:
            raise ParameterError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.smoothing_sigma < 0:
            raise ParameterError("smoothing_sigma must be >= 0")
        lo, hi = self.deformation_strength
        if not (0.0 <= lo <= hi):
            raise ParameterError(
                "deformation_strength must satisfy 0 <= lo <= hi, got "
                f"{self.deformation_strength}"
            )
        if self.iteration_base < 1 or self.iteration_step < 0 or self.iteration_levels < 1:
            raise ParameterError("iteration law parameters must be positive")
        if self.blur_sigma < 0:
            raise ParameterError("blur_sigma must be >= 0")


def _patch_kernel(params: ChakParams):
    side = default_kernel_side(params.smoothing_sigma, limit=params.patch_size)
    return gaussian_kernel(params.smoothing_sigma, side)


@lru_cache(maxsize=16)
def _smoothing_matrix(sigma: float, patch: int) -> np.ndarray:
    """Matrix form of 1-D Gaussian smoothing with reflect padding.

    Reflect padding and convolution are both linear, so smoothing a
    length-S row is a single (S, S) matrix; the separable 2-D smoothing
    becomes M @ X @ M.T, which is much faster than windowed tap sums
    when thousands of patches are processed per field.
    """
    side = default_kernel_side(sigma, limit=patch)
    r = side // 2
    if sigma == 0.0 or r == 0:
        return np.eye(patch)
    x = np.arange(side, dtype=np.float64) - (side - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    g /= g.sum()
    m = np.empty((patch, patch))
    for j in range(patch):
        e = np.zeros(patch)
        e[j] = 1.0
        m[:, j] = np.convolve(np.pad(e, r, mode="reflect"), g, mode="valid")
    return m


def _smooth_patches(raw: np.ndarray, params: ChakParams) -> np.ndarray:
    """Smooth (..., S, S) noise planes inside the patch, reflect padded.

    Shared by the single-patch op and the batched field builder so both
    produce identical bits.
    """
    m = _smoothing_matrix(params.smoothing_sigma, params.patch_size)
    return np.matmul(np.matmul(m, raw), m.T)


def draw_iteration_count(params: ChakParams, rng: RandomSource) -> int:
    """Draw the patch count K from the staircase law."""
    level = int(rng.gen.integers(0, params.iteration_levels))
    return params.iteration_base + params.iteration_step * level


def patch_motion_vector(params: ChakParams, rng: RandomSource) -> np.ndarray:
    """Draw one motion patch, shape (2, S, S): index 0 is dx, 1 is dy.

    Consumes one uniform amplitude followed by 2*S*S standard normals.
    The wide smoothing inside a small patch averages the noise hard, so
    patch magnitudes land well below the amplitude itself.
    """
    lo, hi = params.deformation_strength
    eta = float(rng.gen.uniform(lo, hi))
    raw = rng.gen.standard_normal((2, params.patch_size, params.patch_size))
    return eta * _smooth_patches(raw, params)


def accumulate_patches(
    patches: np.ndarray,
    centers_y: np.ndarray,
    centers_x: np.ndarray,
    height: int,
    width: int,
) -> MotionField:
    """Superpose (K, 2, S, S) patches at the given centers.

    Patch tap (a, b) lands on pixel (cy + a - S//2, cx + b - S//2);
    taps falling outside the image are discarded, overlaps add.
    """
    patches = np.asarray(patches, dtype=np.float64)
    k, two, s, _ = patches.shape
    if two != 2:
        raise ParameterError("patches must have shape (K, 2, S, S)")
    cy = np.asarray(centers_y, dtype=np.int64).reshape(k, 1, 1)
    cx = np.asarray(centers_x, dtype=np.int64).reshape(k, 1, 1)
    off = np.arange(s, dtype=np.int64) - s // 2
    rows = np.broadcast_to(cy + off[None, :, None], (k, s, s))
    cols = np.broadcast_to(cx + off[None, None, :], (k, s, s))
    mask = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
    dx = np.zeros((height, width))
    dy = np.zeros((height, width))
    idx = (rows[mask], cols[mask])
    np.add.at(dx, idx, patches[:, 0][mask])
    np.add.at(dy, idx, patches[:, 1][mask])
    return MotionField(dx, dy)


def build_motion_field(
    params: ChakParams,
    height: int,
    width: int,
    rng: RandomSource,
    draws: dict | None = None,
) -> MotionField:
    """Assemble the jitter field from K superposed patches.

    Draw order: K, then K row centers, K column centers, K amplitudes,
    and finally the (K, 2, S, S) noise block. The field is linear in
    the amplitudes, so collapsing the eta range and doubling it doubles
    the field exactly.
    """
    if height < params.patch_size or width < params.patch_size:
        raise ParameterError(
            f"field {height}x{width} is smaller than the patch size "
            f"{params.patch_size}"
        )
    k = draw_iteration_count(params, rng)
    if draws is not None:
        draws["iterations"] = k
    s = params.patch_size
    cy = rng.gen.integers(0, height, k)
    cx = rng.gen.integers(0, width, k)
    lo, hi = params.deformation_strength
    etas = rng.gen.uniform(lo, hi, k)
    raw = rng.gen.standard_normal((k, 2, s, s))
    patches = etas[:, None, None, None] * _smooth_patches(raw, params)
    return accumulate_patches(patches, cy, cx, height, width)


def degrade_chak(
    img: ImageBuffer,
    params: ChakParams,
    rng: RandomSource,
    draws: dict | None = None,
) -> tuple[ImageBuffer, MotionField]:
    """Blur, warp by a fresh jitter field, add noise, clip."""
    img.validate()
    fld = build_motion_field(params, img.height, img.width, rng, draws=draws)
    out = img
    if params.blur_sigma > 0:
        side = default_kernel_side(params.blur_sigma, limit=min(img.height, img.width))
        out = convolve(out, gaussian_kernel(params.blur_sigma, side))
    out = warp(out, fld)
    out = add_noise(out, params.noise, rng)
    return clip01(out), fld
