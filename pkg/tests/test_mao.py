import numpy as np
import pytest

from oracles import svb_pointwise
from turbsim import (
    ImageBuffer,
    Kernel2D,
    ParameterError,
    RandomSource,
    convolve,
    to_grayscale,
)
from turbsim.chimitt import degrade_chimitt, psf_from_coeffs, sample_aberrations
from turbsim.fileio import read_psf_basis, write_psf_basis
from turbsim.mao import (
    MaoParams,
    PsfBasis,
    build_psf_basis,
    degrade_mao,
    project_onto_basis,
    reconstruct_psf,
    spatially_varying_blur,
)


def gray(h, w, seed=0):
    gen = np.random.default_rng(seed)
    return ImageBuffer(gen.uniform(0.0, 1.0, (1, h, w)))


def small_params(**kw):
    kw.setdefault("psf_side", 9)
    kw.setdefault("num_zernike_modes", 10)
    kw.setdefault("num_basis", 4)
    return MaoParams(**kw)


def small_basis(p, num_samples=96):
    return build_psf_basis(p, num_samples)


# --- parameter plumbing ---


def test_fried_round_trips_through_structure_constant():
    from turbsim.chimitt import fried_parameter

    p = MaoParams(fried_parameter=0.0314)
    back = fried_parameter(p.to_chimitt())
    assert back == pytest.approx(0.0314, rel=1e-12)


def test_params_validation():
    with pytest.raises(ParameterError):
        MaoParams(fried_parameter=0.0)
    with pytest.raises(ParameterError):
        MaoParams(num_basis=0)
    with pytest.raises(ParameterError):
        MaoParams(distortion_strength=-1.0)
    with pytest.raises(ParameterError):
        build_psf_basis(small_params(num_basis=8), num_samples=4)


# --- basis construction ---


def test_basis_shapes_and_determinism():
    p = small_params()
    b1 = small_basis(p)
    b2 = small_basis(p)
    assert b1.mean_kernel.shape == (9, 9)
    assert b1.kernels.shape == (4, 9, 9)
    assert b1.sample_dim == 9
    assert np.array_equal(b1.mean_kernel, b2.mean_kernel)
    assert np.array_equal(b1.kernels, b2.kernels)


def test_basis_orthonormal_and_zero_sum():
    b = small_basis(small_params())
    flat = b.kernels.reshape(b.num_basis, -1)
    gram = flat @ flat.T
    assert np.abs(gram - np.eye(b.num_basis)).max() < 1e-6
    assert b.mean_kernel.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.abs(flat.sum(axis=1)).max() < 1e-9


def test_reconstruction_keeps_unit_dc():
    b = small_basis(small_params())
    gen = np.random.default_rng(3)
    for _ in range(5):
        w = gen.standard_normal(b.num_basis) * 0.1
        assert reconstruct_psf(w, b).sum() == pytest.approx(1.0, abs=1e-9)


def test_heldout_error_shrinks_with_rank():
    # fit three dictionary sizes on the same sample seed, score each on
    # kernels drawn from a different stream
    chim = small_params().to_chimitt()
    probe_coeffs = sample_aberrations(chim, 24, RandomSource(999))
    probes = [psf_from_coeffs(c, chim).weights for c in probe_coeffs]
    errs = []
    for rank in (1, 3, 6):
        b = small_basis(small_params(num_basis=rank))
        err = 0.0
        for psf in probes:
            w = project_onto_basis(psf, b)
            err += np.sum((reconstruct_psf(w, b) - psf) ** 2)
        errs.append(err)
    assert errs[0] > errs[1] > errs[2]


def test_rank_deficiency_truncates_with_warning():
    # a two-mode model yields nearly rank-1 kernel variation around the
    # mean, so asking for many components must shrink the dictionary
    p = MaoParams(psf_side=9, num_zernike_modes=4, num_basis=8)
    with pytest.warns(UserWarning):
        b = build_psf_basis(p, num_samples=32)
    assert b.num_basis < 8


def test_full_rank_request_reconstructs_every_sample():
    # asking for as many components as samples: the centered sample has
    # rank num_samples - 1, so the dictionary shrinks by one yet still
    # spans every sample exactly
    p = small_params(num_basis=12)
    chim = p.to_chimitt()
    rng = RandomSource(21)
    coeffs = sample_aberrations(chim, 12, rng)
    samples = [psf_from_coeffs(c, chim).weights for c in coeffs]
    with pytest.warns(UserWarning):
        b = build_psf_basis(p, num_samples=12, rng=RandomSource(21))
    assert b.num_basis == 11
    for psf in samples:
        w = project_onto_basis(psf, b)
        assert np.abs(reconstruct_psf(w, b) - psf).max() < 1e-6


def test_basis_file_round_trip(tmp_path):
    b = small_basis(small_params())
    path = tmp_path / "dict.tspb"
    write_psf_basis(path, b.mean_kernel, b.kernels)
    mean, kernels = read_psf_basis(path)
    assert np.abs(mean - b.mean_kernel).max() < 1e-6
    assert np.abs(kernels - b.kernels).max() < 1e-6


def test_projection_shape_guards():
    b = small_basis(small_params())
    with pytest.raises(ParameterError):
        project_onto_basis(np.zeros((7, 7)), b)
    with pytest.raises(ParameterError):
        reconstruct_psf(np.zeros(3), b)
    with pytest.raises(ParameterError):
        PsfBasis(kernels=np.zeros((2, 9, 9)), mean_kernel=np.zeros((7, 7)), sample_dim=9)


# --- spatially varying blur ---


def test_svb_matches_pointwise_oracle():
    p = small_params()
    b = small_basis(p)
    img = gray(20, 24, seed=1)
    gen = np.random.default_rng(7)
    maps = gen.standard_normal((b.num_basis, 20, 24)) * 0.05
    fast = spatially_varying_blur(img, b, maps)
    slow = svb_pointwise(img.data[0], b.mean_kernel, b.kernels, maps)
    assert np.abs(fast.data[0] - slow).max() < 1e-10


def test_svb_zero_weights_is_mean_convolution():
    p = small_params()
    b = small_basis(p)
    img = gray(24, 24, seed=2)
    out = spatially_varying_blur(img, b, np.zeros((b.num_basis, 24, 24)))
    ref = convolve(img, Kernel2D(b.mean_kernel))
    assert np.abs(out.data - ref.data).max() < 1e-12


def test_svb_constant_weights_is_single_convolution():
    p = small_params()
    b = small_basis(p)
    img = gray(24, 24, seed=3)
    w = np.array([0.02, -0.01, 0.04, 0.005])
    maps = np.broadcast_to(w[:, None, None], (4, 24, 24)).copy()
    out = spatially_varying_blur(img, b, maps)
    merged = b.mean_kernel + np.tensordot(w, b.kernels, axes=(0, 0))
    ref = convolve(img, Kernel2D(merged))
    assert np.abs(out.data - ref.data).max() < 1e-6


def test_svb_weight_map_guard():
    b = small_basis(small_params())
    with pytest.raises(ParameterError):
        spatially_varying_blur(gray(24, 24), b, np.zeros((2, 24, 24)))


# --- full degradation ---


def test_degrade_color_matches_grayscale_per_channel():
    base = gray(48, 48, seed=14).data[0]
    rgb = ImageBuffer(np.stack([base, base, base]))
    p = small_params()
    b = small_basis(p)
    out_rgb, fld_rgb = degrade_mao(rgb, p, RandomSource(3), basis=b)
    out_gray, fld_gray = degrade_mao(to_grayscale(rgb), p, RandomSource(3), basis=b)
    assert np.array_equal(fld_rgb.dx, fld_gray.dx)
    for c in range(3):
        assert np.abs(out_rgb.data[c] - out_gray.data[0]).max() < 1e-9


def test_degrade_deterministic_with_and_without_prebuilt_basis():
    p = small_params()
    img = gray(48, 48, seed=5)
    b = build_psf_basis(p)
    out1, fld1 = degrade_mao(img, p, RandomSource(4))
    out2, fld2 = degrade_mao(img, p, RandomSource(4), basis=b)
    assert np.array_equal(out1.data, out2.data)
    assert np.array_equal(fld1.dx, fld2.dx)


def test_degrade_rejects_mismatched_basis_side():
    p = small_params()
    other = small_basis(small_params(psf_side=7))
    with pytest.raises(ParameterError):
        degrade_mao(gray(48, 48), p, RandomSource(0), basis=other)


def test_degrade_accepts_reduced_rank_basis():
    # the prebuilt dictionary decides the rank; params.num_basis only
    # matters when the basis is fitted here
    p = small_params()
    b = small_basis(small_params(num_basis=3))
    out, _ = degrade_mao(gray(48, 48, seed=15), p, RandomSource(2), basis=b)
    assert out.data.shape == (1, 48, 48)


def test_distortion_strength_scales_field():
    img = gray(48, 48, seed=6)
    p1 = small_params(distortion_strength=1.0)
    p2 = small_params(distortion_strength=2.0)
    _, f1 = degrade_mao(img, p1, RandomSource(8))
    _, f2 = degrade_mao(img, p2, RandomSource(8))
    assert np.allclose(f2.dx, 2.0 * f1.dx)
    assert np.allclose(f2.dy, 2.0 * f1.dy)


def test_zero_strength_zeroes_the_field():
    p = small_params(distortion_strength=0.0)
    _, fld = degrade_mao(gray(48, 48, seed=7), p, RandomSource(9))
    assert np.all(fld.dx == 0.0) and np.all(fld.dy == 0.0)


def test_matched_seed_tracks_blockwise_model():
    # same seed, unit strength: the two models share every draw, so the
    # outputs differ only by the dictionary truncation of the blur
    p = small_params(distortion_strength=1.0, num_basis=6)
    img = gray(64, 64, seed=10)
    ref, fld_ref = degrade_chimitt(img, p.to_chimitt(), RandomSource(55))
    fast, fld_fast = degrade_mao(img, p, RandomSource(55), basis=small_basis(p, 256))
    assert np.array_equal(fld_ref.dx, fld_fast.dx)
    assert np.array_equal(fld_ref.dy, fld_fast.dy)
    rel = np.sqrt(np.mean((fast.data - ref.data) ** 2)) / np.sqrt(
        np.mean(ref.data**2)
    )
    assert rel < 0.10


def test_degrade_output_range_and_draws():
    p = small_params()
    draws = {}
    out, _ = degrade_mao(gray(48, 48, seed=11), p, RandomSource(12), draws=draws)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0
    assert draws["fried_parameter"] == p.fried_parameter
    assert draws["num_blocks"] == 4
