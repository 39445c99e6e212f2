"""End-to-end acceptance gate.

Each test covers one shipping criterion at a pinned tolerance and
prints a single PASS/FAIL line (visible under pytest -s) before
asserting, so a red run still shows the measured numbers for every
criterion that executed.
"""

import json
import time

import numpy as np
import pytest

from oracles import conv2d_reference, svb_pointwise, warp_pointwise
from turbsim import cli
from turbsim.chak import ChakParams, build_motion_field, draw_iteration_count
from turbsim.chimitt import (
    ChimittParams,
    build_tilt_correlation,
    degrade_chimitt,
    psf_from_coeffs,
    sample_aberrations,
    sample_tilts,
)
from turbsim.core import ImageBuffer, Kernel2D, MotionField, RandomSource, convolve, warp
from turbsim.fileio import write_png
from turbsim.mao import (
    MaoParams,
    PsfBasis,
    build_psf_basis,
    degrade_mao,
    project_onto_basis,
    reconstruct_psf,
    spatially_varying_blur,
)
from turbsim.mei import ElasticParams, draw_settings, elastic_field
from turbsim.pipeline import load_manifest, replay_matches
from turbsim.schwartzman import (
    SchwartzmanParams,
    sample_distortion_field,
    target_autocorrelation,
)
from turbsim.validation import empirical_autocorrelation, radial_profile_curve
from turbsim.zernike import disk_grid, zernike_stack


def _report(name: str, ok: bool, detail: str) -> str:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return f"{name}: {detail}"


def test_convolution_matches_direct_reference():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(50):
        side = int(rng.choice([3, 5, 7, 9, 11]))
        plane = rng.random((32, 32))
        taps = rng.standard_normal((side, side))
        fast = convolve(ImageBuffer(plane[None]), Kernel2D(taps)).data[0]
        worst = max(worst, float(np.abs(fast - conv2d_reference(plane, taps)).max()))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-5 and elapsed < 10.0
    detail = _report(
        "convolution-reference", ok, f"max abs dev {worst:.2e} <= 1e-5, {elapsed:.1f}s < 10s"
    )
    assert ok, detail


def test_warp_identity_and_subpixel_reference():
    rng = np.random.default_rng(1)
    img = ImageBuffer(rng.random((1, 24, 24)))
    zero = MotionField(np.zeros((24, 24)), np.zeros((24, 24)))
    identical = np.array_equal(warp(img, zero).data, img.data)
    worst = 0.0
    for _ in range(20):
        plane = rng.random((4, 4))
        dx = rng.uniform(-0.999, 0.999, (4, 4))
        dy = rng.uniform(-0.999, 0.999, (4, 4))
        fast = warp(ImageBuffer(plane[None]), MotionField(dx, dy)).data[0]
        worst = max(worst, float(np.abs(fast - warp_pointwise(plane, dx, dy)).max()))
    ok = identical and worst <= 1e-6
    detail = _report(
        "warp-reference",
        ok,
        f"zero-field bit-identical {identical}, subpixel max dev {worst:.2e} <= 1e-6",
    )
    assert ok, detail


def test_jitter_field_scaling_and_iteration_law():
    base = build_motion_field(
        ChakParams(deformation_strength=(0.11, 0.21)), 64, 64, RandomSource(99)
    )
    double = build_motion_field(
        ChakParams(deformation_strength=(0.22, 0.42)), 64, 64, RandomSource(99)
    )
    dev = max(
        float(np.abs(double.dx - 2.0 * base.dx).max()),
        float(np.abs(double.dy - 2.0 * base.dy).max()),
    )
    rng = RandomSource(5)
    params = ChakParams()
    seen = {draw_iteration_count(params, rng) for _ in range(10_000)}
    allowed = {1000, 4000, 7000, 10000, 13000}
    ok = dev == 0.0 and seen == allowed
    detail = _report(
        "jitter-scaling",
        ok,
        f"doubling max abs dev {dev}, iteration counts {sorted(seen)}",
    )
    assert ok, detail


def test_distortion_field_statistics():
    t0 = time.perf_counter()
    params = SchwartzmanParams()
    model = target_autocorrelation(params)
    size, samples = 128, 1000
    max_lag = int(2.0 * model.correlation_length)
    rng = RandomSource(1234)
    fields = [sample_distortion_field(model, size, size, rng) for _ in range(samples)]
    emp = empirical_autocorrelation(fields, max_lag)
    target = radial_profile_curve(
        lambda r: model.variance * model.profile(r), (size, size), max_lag
    )
    rel = np.abs((emp.values - target.values) / target.values)
    elapsed = time.perf_counter() - t0
    ok = float(rel.max()) < 0.10 and float(rel[0]) < 0.05 and elapsed < 120.0
    detail = _report(
        "field-statistics",
        ok,
        f"lag0 rel err {rel[0]:.4f} < 0.05, max rel err (lags 0..{max_lag}) "
        f"{rel.max():.4f} < 0.10, {elapsed:.1f}s < 120s",
    )
    assert ok, detail


def test_tilt_covariance_psfs_and_mode_orthonormality():
    params = ChimittParams()
    corr = build_tilt_correlation(params, 64, 64)
    b = corr.covariance.shape[0] // 2
    spatial_target = corr.covariance[:b, :b] * corr.pixels_per_radian**2
    rng = RandomSource(17)
    n = 2000
    xs = np.empty((n, b))
    ys = np.empty((n, b))
    for i in range(n):
        tilts = sample_tilts(corr, rng)
        xs[i] = tilts[:, 0]
        ys[i] = tilts[:, 1]
    # x and y tilts share one spatial covariance and are independent by
    # construction, so the two component blocks are pooled and the
    # cross block is checked against zero separately.
    pooled = (xs.T @ xs + ys.T @ ys) / (2.0 * n)
    norm = np.linalg.norm(spatial_target)
    cov_err = float(np.linalg.norm(pooled - spatial_target) / norm)
    cross_err = float(np.linalg.norm(xs.T @ ys / n) / norm)

    src = RandomSource(11)
    coeffs = sample_aberrations(params, 64, src)
    min_tap, sum_dev = np.inf, 0.0
    for c in coeffs:
        taps = psf_from_coeffs(c, params).weights
        min_tap = min(min_tap, float(taps.min()))
        sum_dev = max(sum_dev, abs(float(taps.sum()) - 1.0))

    res = 256
    stack = zernike_stack(tuple(range(2, 11)), res)
    _, _, mask = disk_grid(res)
    flat = stack.reshape(stack.shape[0], -1)
    gram = flat @ flat.T / float(mask.sum())
    gram_dev = float(np.abs(gram - np.eye(9)).max())

    ok = (
        cov_err <= 0.05
        and cross_err <= 0.10
        and min_tap >= 0.0
        and sum_dev <= 1e-5
        and gram_dev <= 2e-2
    )
    detail = _report(
        "tilt-covariance-psf-modes",
        ok,
        f"2000-draw covariance rel Frobenius {cov_err:.4f} <= 0.05, "
        f"cross-block {cross_err:.4f} <= 0.10, kernel min tap {min_tap:.1e} >= 0, "
        f"kernel sum dev {sum_dev:.1e} <= 1e-5, mode gram dev {gram_dev:.4f} <= 2e-2",
    )
    assert ok, detail


def test_varying_blur_reference_and_basis_rank():
    params = MaoParams(psf_side=9, num_zernike_modes=12, num_basis=6)
    basis = build_psf_basis(params, num_samples=128)
    chim = params.to_chimitt()
    rng = np.random.default_rng(21)
    plane = rng.random((64, 64))
    corners = sample_aberrations(chim, 4, RandomSource(77))
    proj = np.stack(
        [project_onto_basis(psf_from_coeffs(c, chim).weights, basis) for c in corners]
    )
    ys, xs = np.mgrid[0:64, 0:64] / 63.0
    mix = np.stack([(1 - ys) * (1 - xs), (1 - ys) * xs, ys * (1 - xs), ys * xs])
    maps = np.tensordot(proj.T, mix, axes=(1, 0))
    fast = spatially_varying_blur(ImageBuffer(plane[None]), basis, maps).data[0]
    slow = svb_pointwise(plane, basis.mean_kernel, basis.kernels, maps)
    blur_err = float(np.sqrt(np.mean((fast - slow) ** 2)) / np.sqrt(np.mean(slow**2)))

    full = build_psf_basis(
        MaoParams(psf_side=9, num_zernike_modes=12, num_basis=8), num_samples=256
    )
    probes = sample_aberrations(chim, 64, RandomSource(3))
    kernels = np.stack([psf_from_coeffs(c, chim).weights for c in probes])
    recon_errs = []
    for rank in range(1, 9):
        sub = PsfBasis(
            kernels=full.kernels[:rank],
            mean_kernel=full.mean_kernel,
            sample_dim=full.sample_dim,
        )
        errs = [
            float(
                np.sqrt(
                    np.mean((reconstruct_psf(project_onto_basis(k, sub), sub) - k) ** 2)
                )
            )
            for k in kernels
        ]
        recon_errs.append(float(np.mean(errs)))
    decreasing = all(b < a for a, b in zip(recon_errs, recon_errs[1:]))
    ok = blur_err <= 0.05 and decreasing
    detail = _report(
        "varying-blur-reference",
        ok,
        f"blur rel RMSE {blur_err:.2e} <= 0.05, reconstruction RMSE by rank "
        f"{[f'{e:.5f}' for e in recon_errs]} strictly decreasing {decreasing}",
    )
    assert ok, detail


def test_elastic_draw_ranges_and_peak_displacement():
    params = ElasticParams()
    rng = RandomSource(4)
    out_of_range = 0
    for _ in range(10_000):
        s = draw_settings(params, rng)
        sigmas = s["blur_sigma"] if isinstance(s["blur_sigma"], tuple) else (s["blur_sigma"],)
        good = (
            s["kernel_type"] in params.kernel_type
            and all(
                params.blur_sigma_range[0] <= v <= params.blur_sigma_range[1]
                for v in sigmas
            )
            and params.downsample_range[0] <= s["downsample"] <= params.downsample_range[1]
            and params.elastic_alpha_range[0] <= s["alpha"] <= params.elastic_alpha_range[1]
            and params.elastic_sigma_range[0]
            <= s["elastic_sigma"]
            <= params.elastic_sigma_range[1]
        )
        if "blur_angle" in s:
            good = good and 0.0 <= s["blur_angle"] < np.pi
        if not good:
            out_of_range += 1

    flat = elastic_field(0.0, 4.5, 48, 48, RandomSource(9))
    flat_peak = float(np.abs(flat.dx).max() + np.abs(flat.dy).max())
    worst_peak_dev = 0.0
    for seed in range(50):
        alpha = 0.5 + seed
        fld = elastic_field(alpha, 4.0 + (seed % 10) / 10.0, 40, 56, RandomSource(seed))
        peak = float(np.hypot(fld.dx, fld.dy).max())
        worst_peak_dev = max(worst_peak_dev, abs(peak - alpha))
    ok = out_of_range == 0 and flat_peak == 0.0 and worst_peak_dev <= 1e-9
    detail = _report(
        "elastic-draws",
        ok,
        f"{out_of_range}/10000 draws out of range, zero-strength field max {flat_peak}, "
        f"max |peak - strength| {worst_peak_dev:.1e} <= 1e-9",
    )
    assert ok, detail


def test_batch_determinism_and_replay(tmp_path):
    t0 = time.perf_counter()
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    rng = np.random.default_rng(8)
    for i in range(10):
        write_png(corpus / f"frame_{i:02d}.png", ImageBuffer(rng.random((3, 90, 110))))

    all_ok = True
    notes = []
    for method in ("chak", "schwartzman", "chimitt", "mao", "mei"):
        out_dirs = []
        for run, workers in enumerate((1, 2)):
            out_dir = tmp_path / f"{method}_run{run}"
            config = {
                "method": method,
                "input_dir": str(corpus),
                "output_dir": str(out_dir),
                "image_size": 96,
                "master_seed": 7,
                "count": 10,
                "workers": workers,
                "grayscale": method == "chimitt",
            }
            cfg_path = tmp_path / f"{method}_run{run}.json"
            cfg_path.write_text(json.dumps(config))
            assert cli.main(["generate", "--config", str(cfg_path)]) == 0
            out_dirs.append(out_dir)

        first, second = out_dirs
        names = sorted(p.name for p in first.glob("*.png"))
        identical = names == sorted(p.name for p in second.glob("*.png"))
        identical = identical and all(
            (first / n).read_bytes() == (second / n).read_bytes() for n in names
        )
        identical = identical and (
            (first / "manifest.jsonl").read_bytes()
            == (second / "manifest.jsonl").read_bytes()
        )
        records = load_manifest(first / "manifest.jsonl")
        replayed = len(records) == 10 and all(replay_matches(r) for r in records)
        all_ok = all_ok and identical and replayed
        notes.append(f"{method} identical={identical} replayed={replayed}")
    elapsed = time.perf_counter() - t0
    ok = all_ok and elapsed < 60.0
    detail = _report(
        "batch-determinism", ok, f"{'; '.join(notes)}; {elapsed:.1f}s < 60s"
    )
    assert ok, detail


def test_basis_model_tracks_blockwise_model():
    rng = np.random.default_rng(7)
    img = ImageBuffer(rng.random((1, 256, 256)))
    mao_params = MaoParams(distortion_strength=1.0)
    chim_params = mao_params.to_chimitt()
    basis = build_psf_basis(mao_params)
    fast, _ = degrade_mao(img, mao_params, RandomSource(1), basis=basis)
    slow, _ = degrade_chimitt(img, chim_params, RandomSource(1))
    rel = float(
        np.sqrt(np.mean((fast.data - slow.data) ** 2)) / np.sqrt(np.mean(slow.data**2))
    )
    ok = rel <= 0.10
    detail = _report(
        "basis-vs-blockwise", ok, f"matched-seed rel RMSE {rel:.4f} <= 0.10"
    )
    assert ok, detail


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
