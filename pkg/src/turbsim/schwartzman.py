"""Tilt-only degradation driven by a target displacement autocorrelation.

The displacement field e(p) = (dx, dy) is a stationary zero-mean
Gaussian random field whose autocorrelation C(v) = E[e(p) . e(p + v)]
follows a prescribed radial profile. Fields are synthesized spectrally:
white noise is filtered so its circulant covariance matches the wrapped
target, which is exact on the torus and accurate for correlation
lengths well below the field size.

The default variance law is the classical angle-of-arrival scaling
(variance per axis proportional to cn2 * L * D^(-1/3)) mapped through
an effective focal length onto the sensor, and the correlation length
is the aperture diameter projected through the same geometry, D/L in
angle. Both constants are documented calibration choices that put the
defaults at a few pixels of jitter with a smooth, visible field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

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

# Per-axis angle-of-arrival variance coefficient: var = coeff * cn2 * L * D^(-1/3).
AOA_VARIANCE_COEFF = 2.914

# Maps angles to sensor displacement. Calibrated so the default optics
# (0.53 m aperture, 4 um pitch, cn2 3.6e-13, 2-5 km path) jitter by a
# few pixels rms.
EFFECTIVE_FOCAL_LENGTH = 0.185


@dataclass
class SchwartzmanParams:
    """Optics for the autocorrelated-field method.

    propagation_distance is a (lo, hi) range in meters; each degraded
    image draws its own path length uniformly from it.
    """

    lens_diameter: float = 0.53
    pixel_pitch: float = 4.0e-6
    propagation_distance: tuple[float, float] = (2000.0, 5000.0)
    cn2: float = 3.6e-13
    blur_sigma: float = 0.0  # optional; the method is tilt-only by default
    noise: NoiseParams = field(default_factory=NoiseParams)

    def __post_init__(self):
        if self.lens_diameter <= 0 or self.pixel_pitch <= 0:
            raise ParameterError("aperture and pixel pitch must be > 0")
        lo, hi = self.propagation_distance
        if not (0 < lo <= hi):
            raise ParameterError(f"propagation_distance must satisfy 0 < lo <= hi, got {self.propagation_distance}")
        if self.cn2 < 0:
            raise ParameterError("cn2 must be >= 0")
        if self.blur_sigma < 0:
            raise ParameterError("blur_sigma must be >= 0")


@dataclass
class AutocorrModel:
    """Target autocorrelation C(v) = variance * profile(|v|).

    variance is C(0) = E[|e|^2] summed over both components, in px^2.
    correlation_length is the profile's decay scale in pixels. profile
    defaults to the Gaussian exp(-(r/rho)^2) and must satisfy
    profile(0) = 1.
    """

    variance: float
    correlation_length: float
    profile: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.variance < 0:
            raise ParameterError(f"variance must be >= 0, got {self.variance}")
        if self.correlation_length <= 0:
            raise ParameterError("correlation_length must be > 0")
        if self.profile is None:
            rho = self.correlation_length
            self.profile = lambda r: np.exp(-((np.asarray(r, dtype=np.float64) / rho) ** 2))
        if abs(float(self.profile(0.0)) - 1.0) > 1e-9:
            raise ParameterError("profile(0) must equal 1")


def target_autocorrelation(
    params: SchwartzmanParams, distance: float | None = None
) -> AutocorrModel:
    """Build the displacement autocorrelation target for one path length.

    `distance` defaults to the midpoint of the configured range. The
    variance is linear in cn2 and distance; the correlation length
    shrinks with distance as the aperture subtends a smaller patch of
    the scene.
    """
    if distance is None:
        distance = 0.5 * (params.propagation_distance[0] + params.propagation_distance[1])
    if distance <= 0:
        raise ParameterError(f"distance must be > 0, got {distance}")
    scale = EFFECTIVE_FOCAL_LENGTH / params.pixel_pitch  # px per radian
    per_axis = (
        AOA_VARIANCE_COEFF
        * params.cn2
        * distance
        * params.lens_diameter ** (-1.0 / 3.0)
        * scale**2
    )
    rho = params.lens_diameter / distance * scale
    return AutocorrModel(variance=2.0 * per_axis, correlation_length=rho)


def _wrapped_target(model: AutocorrModel, height: int, width: int) -> np.ndarray:
    """Per-component autocovariance sampled with min-image distances."""
    ry = np.minimum(np.arange(height), height - np.arange(height)).astype(np.float64)
    rx = np.minimum(np.arange(width), width - np.arange(width)).astype(np.float64)
    r = np.hypot(ry[:, None], rx[None, :])
    return 0.5 * model.variance * model.profile(r)


def sample_distortion_field(
    model: AutocorrModel, height: int, width: int, rng: RandomSource
) -> MotionField:
    """Draw one stationary field with the target autocorrelation.

    dx and dy are synthesized independently (dx first), each carrying
    half the target variance, so the summed two-component
    autocorrelation matches the model. Requires the correlation length
    to fit the field: correlation_length < min(height, width) / 2.
    """
    if height < 1 or width < 1:
        raise ParameterError("field size must be positive")
    if model.correlation_length >= min(height, width) / 2:
        raise ParameterError(
            f"correlation length {model.correlation_length} is not resolvable "
            f"on a {height}x{width} field"
        )
    spectrum = np.fft.fft2(_wrapped_target(model, height, width)).real
    root = np.sqrt(np.maximum(spectrum, 0.0))
    planes = []
    for _ in range(2):
        white = rng.gen.standard_normal((height, width))
        planes.append(np.fft.ifft2(np.fft.fft2(white) * root).real)
    return MotionField(planes[0], planes[1])


def degrade_schwartzman(
    img: ImageBuffer,
    params: SchwartzmanParams,
    rng: RandomSource,
    draws: dict | None = None,
) -> tuple[ImageBuffer, MotionField]:
    """Draw a path length, synthesize the tilt field, warp.

    No blur stage unless blur_sigma is set; noise defaults to off.
    Zero cn2 gives a zero field and returns the input unchanged.
    """
    img.validate()
    lo, hi = params.propagation_distance
    distance = float(rng.gen.uniform(lo, hi))
    if draws is not None:
        draws["distance"] = distance
    model = target_autocorrelation(params, distance)
    fld = sample_distortion_field(model, img.height, img.width, rng)
    out = img
    if params.blur_sigma > 0:
        side = default_kernel_side(params.blur_sigma, limit=min(img.height, img.width))
        out = convolve(out, gaussian_kernel(params.blur_sigma, side))
    out = warp(out, fld)
    out = add_noise(out, params.noise, rng)
    return clip01(out), fld
