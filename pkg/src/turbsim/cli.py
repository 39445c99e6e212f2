"""Command-line front end: generate batches, replay records, validate stats.

Exit codes: 0 on success, 1 for usage errors (bad flags, malformed
invocations), 2 for runtime failures (unreadable corpus, bad config
values, hash mismatches).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .chak import build_motion_field
from .chimitt import build_tilt_correlation, sample_tilts, upsample_block_values
from .core import MotionField, RandomSource, TurbsimError
from .fileio import encode_png, write_png
from .mei import elastic_field
from .pipeline import (
    METHODS,
    MANIFEST_NAME,
    _jsonable,
    build_method_params,
    load_config,
    load_manifest,
    replay,
    run_pipeline,
)
from .schwartzman import sample_distortion_field, target_autocorrelation
from .validation import (
    empirical_autocorrelation,
    field_moment_report,
    radial_profile_curve,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage problems; this tool reserves 2 for
    runtime failures, so usage errors are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="turbsim",
        description="Seeded atmospheric-turbulence image degradation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="degrade a corpus per a JSON config")
    gen.add_argument("--config", required=True, help="path to the JSON config file")

    rep = sub.add_parser("replay", help="regenerate one image from a manifest")
    rep.add_argument("--manifest", required=True, help="path to manifest.jsonl")
    rep.add_argument("--index", type=int, required=True, help="record index to replay")
    rep.add_argument("--out", help="optional path to write the replayed PNG")

    val = sub.add_parser("validate", help="print field statistics as JSON")
    val.add_argument("--method", required=True, choices=sorted(METHODS))
    val.add_argument("--samples", type=int, required=True, help="fields to draw")
    val.add_argument("--size", type=int, default=128, help="field side in pixels")
    val.add_argument("--seed", type=int, default=0, help="sampling seed")
    return parser


def _cmd_generate(args) -> int:
    config = load_config(args.config)
    records = run_pipeline(config)
    manifest = Path(config.output_dir) / MANIFEST_NAME
    print(f"wrote {len(records)} images to {config.output_dir} ({manifest})")
    return 0


def _cmd_replay(args) -> int:
    records = load_manifest(args.manifest)
    by_index = {r.index: r for r in records}
    if args.index not in by_index:
        raise TurbsimError(
            f"no record with index {args.index} in {args.manifest} "
            f"(indices {min(by_index)}..{max(by_index)})"
        )
    record = by_index[args.index]
    out = replay(record)
    digest = hashlib.sha256(encode_png(out)).hexdigest()
    if args.out:
        write_png(args.out, out)
    if digest != record.output_sha256:
        raise TurbsimError(
            f"replay of index {args.index} hashes to {digest[:12]}..., manifest "
            f"says {record.output_sha256[:12]}...; record or input was altered"
        )
    print(f"replayed index {args.index}: output matches manifest ({digest[:12]}...)")
    return 0


def _sample_fields(method: str, params, samples: int, size: int, rng: RandomSource):
    """Draw distortion fields the way each degradation stage does."""
    fields = []
    if method == "chak":
        for _ in range(samples):
            fields.append(build_motion_field(params, size, size, rng))
    elif method == "schwartzman":
        model = target_autocorrelation(params)
        for _ in range(samples):
            fields.append(sample_distortion_field(model, size, size, rng))
    elif method in ("chimitt", "mao"):
        chim = params if method == "chimitt" else params.to_chimitt()
        scale = 1.0 if method == "chimitt" else params.distortion_strength
        corr = build_tilt_correlation(chim, size, size)
        gy, gx = corr.grid_shape
        for _ in range(samples):
            tilts = sample_tilts(corr, rng) * scale
            dx = upsample_block_values(
                tilts[:, 0].reshape(gy, gx), size, size, chim.block_size
            )
            dy = upsample_block_values(
                tilts[:, 1].reshape(gy, gx), size, size, chim.block_size
            )
            fields.append(MotionField(dx, dy))
    elif method == "mei":
        for _ in range(samples):
            alpha = float(rng.gen.uniform(*params.elastic_alpha_range))
            sigma = float(rng.gen.uniform(*params.elastic_sigma_range))
            fields.append(elastic_field(alpha, sigma, size, size, rng))
    return fields


def _cmd_validate(args) -> int:
    if args.samples < 1:
        raise TurbsimError(f"--samples must be >= 1, got {args.samples}")
    params = build_method_params(args.method)
    rng = RandomSource(args.seed)
    fields = _sample_fields(args.method, params, args.samples, args.size, rng)
    max_lag = args.size // 2 - 1
    report = {
        "method": args.method,
        "samples": args.samples,
        "field_size": args.size,
        "seed": args.seed,
        "moments": field_moment_report(fields),
    }
    if args.method == "schwartzman":
        model = target_autocorrelation(params)
        max_lag = min(max_lag, int(2 * model.correlation_length))
        emp = empirical_autocorrelation(fields, max_lag)
        target = radial_profile_curve(
            lambda r: model.variance * model.profile(r), (args.size, args.size), max_lag
        )
        rel = float(np.abs((emp.values - target.values) / target.values).max())
        report["autocorrelation"] = {
            "lags": emp.lags.tolist(),
            "values": emp.values.tolist(),
            "target": target.values.tolist(),
            "max_relative_error": rel,
        }
    else:
        max_lag = min(max_lag, 16)
        emp = empirical_autocorrelation(fields, max_lag)
        report["autocorrelation"] = {
            "lags": emp.lags.tolist(),
            "values": emp.values.tolist(),
        }
    print(json.dumps(_jsonable(report), indent=2))
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "replay": _cmd_replay,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (TurbsimError, OSError) as exc:
        print(f"turbsim {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
