"""Fast variant of the blockwise optics model using a learned PSF basis.

Instead of convolving every block with its own kernel, the per-block
PSFs are projected onto a small orthonormal basis fitted by PCA over a
sample of kernels drawn from the same aberration statistics. The blur
then costs one convolution per basis element plus one for the mean
kernel, independent of the block count, with per-pixel mixing weights
interpolated from the block grid.

Parameters mirror the blockwise model but take the Fried parameter
directly; the equivalent structure constant is derived internally so
both models consume the random stream identically, which makes
matched-seed comparisons meaningful. The tilt field is the same as the
blockwise model's, optionally scaled by distortion_strength.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .chimitt import (
    ChimittParams,
    build_tilt_correlation,
    psf_from_coeffs,
    sample_aberrations,
    sample_tilts,
    upsample_block_values,
)
from .core import (
    ImageBuffer,
    Kernel2D,
    MotionField,
    NoiseParams,
    ParameterError,
    RandomSource,
    add_noise,
    clip01,
    convolve,
    warp,
)


@dataclass
class MaoParams:
    """Knobs for the basis-accelerated blockwise model.

    fried_parameter is r0 in meters at the configured wavelength and
    distance. The kernel dictionary is fitted from sample draws seeded
    by basis_seed, so it is a deterministic function of the parameters
    rather than per-image randomness. distortion_strength scales the
    sampled tilts; 1.0 reproduces the blockwise model's geometry
    exactly.
    """

    aperture_diameter: float = 0.1
    fried_parameter: float = 0.02
    wavelength: float = 500e-9
    focal_length: float = 1.2
    propagation_length: float = 1000.0
    block_size: int = 32
    num_zernike_modes: int = 36
    pixel_pitch: float = 4e-6
    psf_side: int = 33
    pupil_scale: int = 4
    num_basis: int = 8
    basis_seed: int = 0
    distortion_strength: float = 5.0
    noise: NoiseParams = field(default_factory=NoiseParams)

    def __post_init__(self) -> None:
        if self.fried_parameter <= 0:
            raise ParameterError(
                f"fried_parameter must be > 0, got {self.fried_parameter}"
            )
        if self.num_basis < 1:
            raise ParameterError(f"num_basis must be >= 1, got {self.num_basis}")
        if self.distortion_strength < 0:
            raise ParameterError(
                f"distortion_strength must be >= 0, got {self.distortion_strength}"
            )
        # delegate the shared optics checks
        self.to_chimitt()

    def to_chimitt(self) -> ChimittParams:
        """Equivalent blockwise-model parameters.

        Inverts the Fried relation to recover the structure constant, so
        r0 round-trips exactly through the shared machinery.
        """
        k = 2.0 * np.pi / self.wavelength
        cn2 = self.fried_parameter ** (-5.0 / 3.0) / (
            0.423 * k**2 * self.propagation_length
        )
        return ChimittParams(
            aperture_diameter=self.aperture_diameter,
            wavelength=self.wavelength,
            cn2=cn2,
            focal_length=self.focal_length,
            propagation_length=self.propagation_length,
            block_size=self.block_size,
            num_zernike_modes=self.num_zernike_modes,
            pixel_pitch=self.pixel_pitch,
            psf_side=self.psf_side,
            pupil_scale=self.pupil_scale,
        )


@dataclass
class PsfBasis:
    """Orthonormal kernel dictionary: mean plus signed components.

    The mean kernel sums to one and every component kernel sums to
    zero, so any reconstruction keeps unit DC gain regardless of the
    weights. sample_dim records the kernel side length.
    """

    kernels: np.ndarray
    mean_kernel: np.ndarray
    sample_dim: int

    def __post_init__(self) -> None:
        side = self.sample_dim
        if self.mean_kernel.shape != (side, side):
            raise ParameterError(
                f"mean kernel must be ({side}, {side}), got {self.mean_kernel.shape}"
            )
        if self.kernels.ndim != 3 or self.kernels.shape[1:] != (side, side):
            raise ParameterError(
                f"kernels must be (num_basis, {side}, {side}), got "
                f"{self.kernels.shape}"
            )

    @property
    def side(self) -> int:
        return self.sample_dim

    @property
    def num_basis(self) -> int:
        return self.kernels.shape[0]


def build_psf_basis(
    params: MaoParams, num_samples: int = 512, rng: RandomSource | None = None
) -> PsfBasis:
    """Fit the kernel dictionary by PCA over sampled block PSFs.

    Draws num_samples aberration vectors (from a stream seeded by
    basis_seed unless an rng is passed), renders their exact PSFs, and
    keeps the top principal components of the centered sample. When the
    sample cannot support the requested rank the basis is truncated to
    the effective rank, with a warning.
    """
    if num_samples < params.num_basis:
        raise ParameterError(
            f"num_samples must be >= num_basis, got {num_samples} < "
            f"{params.num_basis}"
        )
    chim = params.to_chimitt()
    if rng is None:
        rng = RandomSource(params.basis_seed)
    coeffs = sample_aberrations(chim, num_samples, rng)
    side = params.psf_side
    flat = np.empty((num_samples, side * side))
    for i in range(num_samples):
        flat[i] = psf_from_coeffs(coeffs[i], chim).weights.ravel()
    mean = flat.mean(axis=0)
    centered = flat - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.count_nonzero(svals > 1e-12 * max(svals[0], 1e-300)))
    num_basis = params.num_basis
    if rank < num_basis:
        warnings.warn(
            "PSF sample supports rank "
            f"{rank}, below the requested basis size {num_basis}; "
            "truncating the dictionary",
            stacklevel=2,
        )
        num_basis = rank
    kernels = vt[:num_basis].reshape(num_basis, side, side)
    return PsfBasis(
        kernels=kernels.copy(), mean_kernel=mean.reshape(side, side), sample_dim=side
    )


def project_onto_basis(psf: np.ndarray, basis: PsfBasis) -> np.ndarray:
    """Expansion weights of a kernel in the dictionary."""
    if psf.shape != basis.mean_kernel.shape:
        raise ParameterError(
            f"kernel shape {psf.shape} does not match basis side {basis.side}"
        )
    centered = (psf - basis.mean_kernel).ravel()
    return basis.kernels.reshape(basis.num_basis, -1) @ centered


def reconstruct_psf(weights: np.ndarray, basis: PsfBasis) -> np.ndarray:
    """Mean plus weighted components; may carry small negative taps."""
    if weights.shape != (basis.num_basis,):
        raise ParameterError(
            f"expected {basis.num_basis} weights, got {weights.shape}"
        )
    out = basis.mean_kernel + np.tensordot(weights, basis.kernels, axes=(0, 0))
    return out


def spatially_varying_blur(
    img: ImageBuffer, basis: PsfBasis, weight_maps: np.ndarray
) -> ImageBuffer:
    """Apply a per-pixel kernel expressed in the dictionary.

    weight_maps has shape (num_basis, height, width); the pixel at p is
    blurred by mean + sum_i weight_maps[i, p] * kernels[i], computed as
    num_basis + 1 full convolutions mixed pointwise.
    """
    img.validate()
    if weight_maps.shape != (basis.num_basis, img.height, img.width):
        raise ParameterError(
            f"weight maps must be ({basis.num_basis}, {img.height}, "
            f"{img.width}), got {weight_maps.shape}"
        )
    out = convolve(img, Kernel2D(basis.mean_kernel)).data.copy()
    for i in range(basis.num_basis):
        comp = convolve(img, Kernel2D(basis.kernels[i]))
        out += weight_maps[i][None, :, :] * comp.data
    return ImageBuffer(out)


def degrade_mao(
    img: ImageBuffer,
    params: MaoParams,
    rng: RandomSource,
    draws: dict | None = None,
    basis: PsfBasis | None = None,
) -> tuple[ImageBuffer, MotionField]:
    """Basis-accelerated blur, scaled tilt warp, noise, clip.

    Consumes the random stream in the same order and amount as the
    blockwise model: aberration coefficients for every block, then the
    tilt vector, then noise. Color frames share one set of weight maps
    and one tilt field across channels. Pass a prebuilt basis to
    amortize the dictionary fit across a batch; otherwise it is rebuilt
    here from basis_seed, independent of `rng`.
    """
    img.validate()
    if params.psf_side > min(img.height, img.width):
        raise ParameterError(
            f"psf_side {params.psf_side} exceeds image extent "
            f"{img.height}x{img.width}"
        )
    chim = params.to_chimitt()
    if basis is None:
        basis = build_psf_basis(params)
    elif basis.side != params.psf_side:
        raise ParameterError(
            f"prebuilt basis side {basis.side} does not match psf_side "
            f"{params.psf_side}"
        )
    corr = build_tilt_correlation(chim, img.height, img.width)
    gy, gx = corr.grid_shape
    coeffs = sample_aberrations(chim, gy * gx, rng)
    weights = np.stack(
        [project_onto_basis(psf_from_coeffs(c, chim).weights, basis) for c in coeffs]
    )
    if basis.num_basis:
        maps = np.stack(
            [
                upsample_block_values(
                    weights[:, i].reshape(gy, gx),
                    img.height,
                    img.width,
                    params.block_size,
                )
                for i in range(basis.num_basis)
            ]
        )
    else:
        maps = np.zeros((0, img.height, img.width))
    blurred = spatially_varying_blur(img, basis, maps)
    tilts = sample_tilts(corr, rng) * params.distortion_strength
    dx = upsample_block_values(
        tilts[:, 0].reshape(gy, gx), img.height, img.width, params.block_size
    )
    dy = upsample_block_values(
        tilts[:, 1].reshape(gy, gx), img.height, img.width, params.block_size
    )
    fld = MotionField(dx, dy)
    if draws is not None:
        draws["fried_parameter"] = params.fried_parameter
        draws["num_blocks"] = gy * gx
    out = warp(blurred, fld)
    out = add_noise(out, params.noise, rng)
    return clip01(out), fld
