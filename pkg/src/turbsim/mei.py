"""Parametric random degradation: heavy blur, resolution loss, elastic
warp, noise.

Every knob is drawn fresh per image from configured ranges, which makes
this the broadest of the methods: kernels can be isotropic or rotated
anisotropic Gaussians with widths up to tens of pixels, resolution drops
up to 8x, and the geometric distortion is an elastic field whose peak
displacement is normalized to exactly the drawn strength.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import (
    ImageBuffer,
    MotionField,
    NoiseParams,
    ParameterError,
    RandomSource,
    add_noise,
    anisotropic_gaussian_kernel,
    clip01,
    convolve,
    gaussian_kernel,
    resample,
    warp,
)

KERNEL_TYPES = ("isotropic", "anisotropic")


@dataclass
class ElasticParams:
    """Draw ranges for the random-degradation method.

    kernel_type may be a single name or any non-empty subset of
    KERNEL_TYPES; the type is drawn uniformly per image.
    blur_sigma_range bounds the Gaussian widths (each axis
    independently for anisotropic kernels), downsample_range the linear
    resolution factor, elastic_alpha_range the peak warp displacement
    in pixels, and elastic_sigma_range the smoothing width that sets
    the warp's spatial scale.
    """

    blur_kernel_size: int = 41
    kernel_type: str | tuple[str, ...] = KERNEL_TYPES
    blur_sigma_range: tuple[float, float] = (1.0, 25.0)
    downsample_range: tuple[float, float] = (0.125, 1.0)
    elastic_alpha_range: tuple[float, float] = (0.0, 50.0)
    elastic_sigma_range: tuple[float, float] = (4.0, 5.0)
    noise: NoiseParams = field(default_factory=NoiseParams)

    def __post_init__(self) -> None:
        if self.blur_kernel_size < 3 or self.blur_kernel_size % 2 == 0:
            raise ParameterError(
                f"blur_kernel_size must be odd and >= 3, got {self.blur_kernel_size}"
            )
        if isinstance(self.kernel_type, str):
            self.kernel_type = (self.kernel_type,)
        else:
            self.kernel_type = tuple(self.kernel_type)
        if not self.kernel_type:
            raise ParameterError("kernel_type must not be empty")
        for name in self.kernel_type:
            if name not in KERNEL_TYPES:
                raise ParameterError(
                    f"unknown kernel type {name!r}; choose from {KERNEL_TYPES}"
                )
        for name in ("blur_sigma_range", "elastic_sigma_range"):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi):
                raise ParameterError(
                    f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})"
                )
        lo, hi = self.elastic_alpha_range
        if not (0.0 <= lo <= hi):
            raise ParameterError(
                f"elastic_alpha_range must satisfy 0 <= lo <= hi, got ({lo}, {hi})"
            )
        lo, hi = self.downsample_range
        if not (0.125 <= lo <= hi <= 1.0):
            raise ParameterError(
                f"downsample_range must sit inside [1/8, 1], got ({lo}, {hi})"
            )


def elastic_field(
    alpha: float, sigma: float, height: int, width: int, rng: RandomSource
) -> MotionField:
    """Smoothed white displacement field with peak magnitude alpha.

    Draws uniform [-1, 1] noise per component (dx first), smooths each
    with a Gaussian of width sigma, then rescales both components
    jointly so the largest displacement magnitude equals alpha. A zero
    alpha gives an exactly zero field.
    """
    if height < 1 or width < 1:
        raise ParameterError("field size must be positive")
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}")
    if sigma <= 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    dx = ndimage.gaussian_filter(
        rng.gen.uniform(-1.0, 1.0, (height, width)), sigma, mode="reflect"
    )
    dy = ndimage.gaussian_filter(
        rng.gen.uniform(-1.0, 1.0, (height, width)), sigma, mode="reflect"
    )
    peak = np.hypot(dx, dy).max()
    if peak == 0.0:
        return MotionField(dx * 0.0, dy * 0.0)
    scale = alpha / peak
    return MotionField(dx * scale, dy * scale)


def draw_settings(params: ElasticParams, rng: RandomSource) -> dict:
    """Draw one set of degradation knobs from the configured ranges.

    Draw order: kernel type index, blur widths (one sigma, or two plus
    an angle in [0, pi) for anisotropic), resample factor, alpha,
    elastic sigma. Returns the drawn values keyed the way they appear
    in batch manifests.
    """
    kind = params.kernel_type[int(rng.gen.integers(0, len(params.kernel_type)))]
    lo, hi = params.blur_sigma_range
    record: dict = {"kernel_type": kind}
    if kind == "isotropic":
        record["blur_sigma"] = float(rng.gen.uniform(lo, hi))
    else:
        sigma_x = float(rng.gen.uniform(lo, hi))
        sigma_y = float(rng.gen.uniform(lo, hi))
        record["blur_sigma"] = (sigma_x, sigma_y)
        record["blur_angle"] = float(rng.gen.uniform(0.0, np.pi))
    record["downsample"] = float(rng.gen.uniform(*params.downsample_range))
    record["alpha"] = float(rng.gen.uniform(*params.elastic_alpha_range))
    record["elastic_sigma"] = float(rng.gen.uniform(*params.elastic_sigma_range))
    return record


def degrade_mei(
    img: ImageBuffer,
    params: ElasticParams,
    rng: RandomSource,
    draws: dict | None = None,
) -> tuple[ImageBuffer, MotionField]:
    """Blur, resample, elastic warp, noise, clip.

    Knobs come from draw_settings; the field noise and pixel noise are
    drawn afterwards from the same stream. All drawn values land in
    `draws` when a dict is supplied.
    """
    img.validate()
    if params.blur_kernel_size > min(img.height, img.width):
        raise ParameterError(
            f"blur_kernel_size {params.blur_kernel_size} exceeds image extent "
            f"{img.height}x{img.width}"
        )
    record = draw_settings(params, rng)
    if record["kernel_type"] == "isotropic":
        kernel = gaussian_kernel(record["blur_sigma"], params.blur_kernel_size)
    else:
        sigma_x, sigma_y = record["blur_sigma"]
        kernel = anisotropic_gaussian_kernel(
            sigma_x, sigma_y, record["blur_angle"], params.blur_kernel_size
        )
    if draws is not None:
        draws.update(record)
    out = convolve(img, kernel)
    out = resample(out, record["downsample"])
    fld = elastic_field(
        record["alpha"], record["elastic_sigma"], img.height, img.width, rng
    )
    out = warp(out, fld)
    out = add_noise(out, params.noise, rng)
    return clip01(out), fld
