"""Physics-grounded blockwise degradation: per-block aberrated PSFs plus
a spatially correlated tilt field.

The image is tiled by a coarse block grid. Each block gets a point-spread
function built from randomly drawn Zernike aberration coefficients whose
variances follow Kolmogorov statistics at the configured Fried parameter.
Tilt (image jitter) is handled separately as a per-block 2-vector drawn
from a cross-block Gaussian whose spatial correlation decays with block
separation, then bilinearly upsampled to a dense warp field.

Grayscale input only: the PSF model is monochromatic, so callers must
convert color frames first (see core.to_grayscale).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    ImageBuffer,
    Kernel2D,
    MotionField,
    NoiseParams,
    ParameterError,
    RandomSource,
    UnsupportedInputError,
    add_noise,
    clip01,
    convolve,
    warp,
)
from .zernike import disk_grid, mode_variance, zernike_stack


@dataclass
class ChimittParams:
    """Optics and sampling knobs for the blockwise model.

    Distances are meters; cn2 is the refractive-index structure constant
    in m^(-2/3). pixel_pitch maps focal-plane displacement to pixels.
    num_zernike_modes counts Noll indices 1..M; modes 2 and 3 (tilt) are
    carried by the tilt field, modes 4..M shape the PSFs.
    intermode_covariance optionally replaces the independent Kolmogorov
    aberration draw with a joint one; it is an (M-3, M-3) covariance over
    modes 4..M in rad^2.
    """

    aperture_diameter: float = 0.2034
    wavelength: float = 525e-9
    cn2: float = 1e-14
    focal_length: float = 1.2
    propagation_length: float = 1000.0
    block_size: int = 32
    num_zernike_modes: int = 36
    pixel_pitch: float = 4e-6
    psf_side: int = 33
    pupil_scale: int = 4
    noise: NoiseParams = field(default_factory=NoiseParams)
    intermode_covariance: np.ndarray | None = None

    def __post_init__(self) -> None:
        for name in (
            "aperture_diameter",
            "wavelength",
            "focal_length",
            "propagation_length",
            "pixel_pitch",
        ):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be > 0")
        if self.cn2 < 0:
            raise ParameterError(f"cn2 must be >= 0, got {self.cn2}")
        if self.block_size < 1:
            raise ParameterError(f"block_size must be >= 1, got {self.block_size}")
        if self.num_zernike_modes < 3:
            raise ParameterError(
                f"num_zernike_modes must be >= 3, got {self.num_zernike_modes}"
            )
        if self.psf_side < 3 or self.psf_side % 2 == 0:
            raise ParameterError(f"psf_side must be odd and >= 3, got {self.psf_side}")
        # pupil grid must oversample the aperture or the PSF aliases
        if self.pupil_scale < 4 or self.pupil_scale % 2:
            raise ParameterError(
                f"pupil_scale must be an even integer >= 4, got {self.pupil_scale}"
            )
        if self.intermode_covariance is not None:
            m = self.num_zernike_modes - 3
            cov = np.asarray(self.intermode_covariance, dtype=np.float64)
            if cov.shape != (m, m):
                raise ParameterError(
                    f"intermode_covariance must be ({m}, {m}) for "
                    f"{self.num_zernike_modes} modes, got {cov.shape}"
                )
            if not np.allclose(cov, cov.T):
                raise ParameterError("intermode_covariance must be symmetric")
            self.intermode_covariance = cov


def fried_parameter(params: ChimittParams) -> float:
    """Fried parameter r0 in meters for a uniform-turbulence path."""
    if params.cn2 <= 0:
        raise ParameterError(
            "cn2 must be > 0 for a finite Fried parameter, got "
            f"{params.cn2}"
        )
    k = 2.0 * np.pi / params.wavelength
    return (0.423 * k**2 * params.cn2 * params.propagation_length) ** (-3.0 / 5.0)


def block_centers(length: int, block_size: int) -> np.ndarray:
    """Pixel coordinates of block centers along one axis.

    The grid spans the image corner to corner, so a single block sits at
    the image center and the end blocks are anchored at the borders.
    """
    if length < 1:
        raise ParameterError("length must be >= 1")
    count = max(1, round(length / block_size))
    if count == 1:
        return np.array([(length - 1) / 2.0])
    return np.linspace(0.0, length - 1.0, count)


def interp_weights(length: int, centers: np.ndarray) -> np.ndarray:
    """Dense (length, num_centers) linear-interpolation matrix.

    Rows sum to one: each pixel splits its weight between the two
    bracketing centers, clamping past the end centers.
    """
    n = len(centers)
    w = np.zeros((length, n))
    if n == 1:
        w[:, 0] = 1.0
        return w
    pos = np.arange(length, dtype=np.float64)
    idx = np.clip(np.searchsorted(centers, pos, side="right") - 1, 0, n - 2)
    span = centers[idx + 1] - centers[idx]
    t = np.clip((pos - centers[idx]) / span, 0.0, 1.0)
    w[np.arange(length), idx] = 1.0 - t
    w[np.arange(length), idx + 1] = t
    return w


def upsample_block_values(
    values: np.ndarray, height: int, width: int, block_size: int
) -> np.ndarray:
    """Bilinearly stretch per-block scalars (gy, gx) to a dense map."""
    cy = block_centers(height, block_size)
    cx = block_centers(width, block_size)
    if values.shape != (len(cy), len(cx)):
        raise ParameterError(
            f"expected block values of shape ({len(cy)}, {len(cx)}), "
            f"got {values.shape}"
        )
    wy = interp_weights(height, cy)
    wx = interp_weights(width, cx)
    return wy @ values @ wx.T


@dataclass
class TiltCorrelation:
    """Cross-block tilt statistics in phase-coefficient units.

    covariance is (2B, 2B) over [x-tilt block; y-tilt block] in rad^2;
    pixels_per_radian converts a sampled tilt coefficient to focal-plane
    pixels; grid_shape is the (gy, gx) block layout the rows refer to.
    """

    covariance: np.ndarray
    pixels_per_radian: float
    grid_shape: tuple[int, int]

    def __post_init__(self) -> None:
        b = self.grid_shape[0] * self.grid_shape[1]
        if self.covariance.shape != (2 * b, 2 * b):
            raise ParameterError(
                f"covariance must be ({2 * b}, {2 * b}) for grid "
                f"{self.grid_shape}, got {self.covariance.shape}"
            )


def build_tilt_correlation(
    params: ChimittParams, height: int, width: int
) -> TiltCorrelation:
    """Assemble the cross-block tilt covariance for an image size.

    Each tilt component has Kolmogorov variance 0.448 (D/r0)^(5/3) rad^2
    per block; correlation between blocks decays as a Gaussian in their
    pixel separation with length D/L scaled to the focal plane. The two
    components are uncorrelated. The matrix is symmetrized and eigenvalue
    clamped so downstream sampling always gets a valid covariance.
    """
    r0 = fried_parameter(params)
    var = mode_variance(2) * (params.aperture_diameter / r0) ** (5.0 / 3.0)
    px_per_rad = (
        2.0
        * params.wavelength
        / (np.pi * params.aperture_diameter)
        * params.focal_length
        / params.pixel_pitch
    )
    corr_len = (
        params.aperture_diameter
        / params.propagation_length
        * params.focal_length
        / params.pixel_pitch
    )
    cy = block_centers(height, params.block_size)
    cx = block_centers(width, params.block_size)
    yy, xx = np.meshgrid(cy, cx, indexing="ij")
    pts = np.stack([yy.ravel(), xx.ravel()], axis=1)
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    spatial = var * np.exp(-d2 / corr_len**2)
    b = pts.shape[0]
    cov = np.zeros((2 * b, 2 * b))
    cov[:b, :b] = spatial
    cov[b:, b:] = spatial
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    cov = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    return TiltCorrelation(
        covariance=cov,
        pixels_per_radian=px_per_rad,
        grid_shape=(len(cy), len(cx)),
    )


def sample_tilts(corr: TiltCorrelation, rng: RandomSource) -> np.ndarray:
    """Draw one correlated tilt realization, shape (B, 2) in pixels.

    Column 0 is the horizontal component, column 1 vertical. Consumes a
    single standard_normal(2B) block from the stream.
    """
    b = corr.covariance.shape[0] // 2
    vals, vecs = np.linalg.eigh(corr.covariance)
    if vals.min() < -1e-9 * max(vals.max(), 1e-300):
        raise ParameterError(
            "tilt covariance is not positive semidefinite: min eigenvalue "
            f"{vals.min():.3e}"
        )
    root = vecs * np.sqrt(np.maximum(vals, 0.0))
    z = rng.gen.standard_normal(2 * b)
    phase = root @ z
    tilts = np.stack([phase[:b], phase[b:]], axis=1)
    return tilts * corr.pixels_per_radian


def sample_aberrations(
    params: ChimittParams, num_blocks: int, rng: RandomSource
) -> np.ndarray:
    """Draw per-block aberration coefficients, shape (B, M-1), rad.

    Columns cover Noll modes 2..M; the first two (tilt) stay zero here
    because jitter is sampled separately. Consumes one
    standard_normal((B, M-3)) block.
    """
    m = params.num_zernike_modes
    r0 = fried_parameter(params)
    z = rng.gen.standard_normal((num_blocks, m - 3))
    coeffs = np.zeros((num_blocks, m - 1))
    if params.intermode_covariance is not None:
        vals, vecs = np.linalg.eigh(params.intermode_covariance)
        root = vecs * np.sqrt(np.maximum(vals, 0.0))
        coeffs[:, 2:] = z @ root.T
    else:
        scale = (params.aperture_diameter / r0) ** (5.0 / 3.0)
        sigmas = np.sqrt([mode_variance(j) * scale for j in range(4, m + 1)])
        coeffs[:, 2:] = z * sigmas
    return coeffs


def psf_from_coeffs(
    coeffs: np.ndarray, params: ChimittParams, psf_side: int | None = None
) -> Kernel2D:
    """Fourier-optics PSF for one aberration coefficient vector.

    coeffs covers Noll modes 2..M in rad. The pupil is a disk of radius
    N/4 on an N = pupil_scale * side grid, so the diffraction core spans
    a few output pixels; the squared inverse transform is center-cropped
    to the kernel side and renormalized to unit sum. Nonnegative by
    construction. Under this convention a positive tilt coefficient a
    moves the centroid by -4a/pi pixels along its axis.
    """
    side = params.psf_side if psf_side is None else psf_side
    if side < 3 or side % 2 == 0:
        raise ParameterError(f"psf side must be odd and >= 3, got {side}")
    m = params.num_zernike_modes
    if coeffs.shape != (m - 1,):
        raise ParameterError(
            f"expected {m - 1} coefficients for modes 2..{m}, got {coeffs.shape}"
        )
    n = params.pupil_scale * side
    pupil_res = n // 2
    stack = zernike_stack(tuple(range(2, m + 1)), pupil_res)
    mask = disk_grid(pupil_res)[2]
    phase = np.tensordot(coeffs, stack, axes=(0, 0))
    pupil = np.zeros((n, n), dtype=np.complex128)
    start = (n - pupil_res) // 2
    pupil[start : start + pupil_res, start : start + pupil_res] = mask * np.exp(
        1j * phase
    )
    amp = np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(pupil)))
    psf = np.abs(amp) ** 2
    lo = n // 2 - side // 2
    window = psf[lo : lo + side, lo : lo + side]
    total = window.sum()
    if total <= 0:
        raise ParameterError("degenerate pupil produced an empty kernel")
    return Kernel2D(window / total)


def blockwise_blur(img: ImageBuffer, psfs: np.ndarray, block_size: int) -> ImageBuffer:
    """Blend per-block convolutions into one smoothly varying blur.

    psfs has shape (gy, gx, side, side) matching the block grid for the
    image size. Each pixel mixes the convolution outputs of its (up to
    four) surrounding blocks with bilinear weights; the weights sum to
    one, so identical PSFs reduce to a single global convolution.
    """
    img.validate()
    gy = len(block_centers(img.height, block_size))
    gx = len(block_centers(img.width, block_size))
    if psfs.shape[:2] != (gy, gx):
        raise ParameterError(
            f"expected ({gy}, {gx}) kernel grid for this image, got {psfs.shape[:2]}"
        )
    wy = interp_weights(img.height, block_centers(img.height, block_size))
    wx = interp_weights(img.width, block_centers(img.width, block_size))
    out = np.zeros_like(img.data)
    for i in range(gy):
        for j in range(gx):
            conv = convolve(img, Kernel2D(psfs[i, j]))
            weight = np.outer(wy[:, i], wx[:, j])
            out += weight[None, :, :] * conv.data
    return ImageBuffer(out)


def degrade_chimitt(
    img: ImageBuffer,
    params: ChimittParams,
    rng: RandomSource,
    draws: dict | None = None,
) -> tuple[ImageBuffer, MotionField]:
    """Blockwise aberrated blur, correlated tilt warp, noise, clip.

    Draw order: aberration coefficients for all blocks (row-major grid
    order), then the tilt vector, then noise. Input must be grayscale.
    """
    img.validate()
    if img.data.shape[0] != 1:
        raise UnsupportedInputError(
            "blockwise optics run on grayscale frames; convert with to_grayscale"
        )
    if params.psf_side > min(img.height, img.width):
        raise ParameterError(
            f"psf_side {params.psf_side} exceeds image extent "
            f"{img.height}x{img.width}"
        )
    corr = build_tilt_correlation(params, img.height, img.width)
    gy, gx = corr.grid_shape
    coeffs = sample_aberrations(params, gy * gx, rng)
    psfs = np.stack(
        [psf_from_coeffs(c, params).weights for c in coeffs]
    ).reshape(gy, gx, params.psf_side, params.psf_side)
    blurred = blockwise_blur(img, psfs, params.block_size)
    tilts = sample_tilts(corr, rng)
    dx = upsample_block_values(
        tilts[:, 0].reshape(gy, gx), img.height, img.width, params.block_size
    )
    dy = upsample_block_values(
        tilts[:, 1].reshape(gy, gx), img.height, img.width, params.block_size
    )
    fld = MotionField(dx, dy)
    if draws is not None:
        draws["fried_parameter"] = fried_parameter(params)
        draws["num_blocks"] = gy * gx
    out = warp(blurred, fld)
    out = add_noise(out, params.noise, rng)
    return clip01(out), fld
