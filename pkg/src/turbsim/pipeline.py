"""Batch dataset generation: config in, degraded corpus plus manifest out.

A run walks a directory of clean PNGs, degrades `count` images with the
configured method, and records everything needed to regenerate each
output in a JSON-lines manifest. Per-image seeds are derived from the
master seed and the image index alone, so results do not depend on
worker count or completion order, and any single image can be replayed
from its manifest record without rerunning the batch.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chak import ChakParams, degrade_chak
from .chimitt import ChimittParams, degrade_chimitt
from .core import (
    ImageBuffer,
    NoiseParams,
    ParameterError,
    PipelineError,
    RandomSource,
    bilinear_resize,
    center_crop_square,
    derive_seed,
    to_grayscale,
)
from .fileio import FileFormatError, encode_png, read_png, write_motion_field, write_psf_basis
from .mao import MaoParams, PsfBasis, build_psf_basis, degrade_mao
from .mei import ElasticParams, degrade_mei
from .schwartzman import SchwartzmanParams, degrade_schwartzman

logger = logging.getLogger("turbsim.pipeline")

MANIFEST_NAME = "manifest.jsonl"

_METHOD_PARAMS = {
    "chak": ChakParams,
    "schwartzman": SchwartzmanParams,
    "chimitt": ChimittParams,
    "mao": MaoParams,
    "mei": ElasticParams,
}

METHODS = tuple(_METHOD_PARAMS)

_RANGE_PRESETS = {"r300": 300.0, "r650": 650.0, "r1000": 1000.0}


def build_method_params(method: str, overrides: dict | None = None):
    """Construct a method's parameter object from plain JSON-ish values.

    Lists become tuples (covariance matrices become arrays), a noise
    dict becomes NoiseParams, and unknown keys are rejected so config
    typos fail loudly instead of silently using defaults.
    """
    if method not in _METHOD_PARAMS:
        raise ParameterError(
            f"unknown method {method!r}; choose from {sorted(_METHOD_PARAMS)}"
        )
    cls = _METHOD_PARAMS[method]
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in dict(overrides or {}).items():
        if key not in names:
            raise ParameterError(f"unknown {method} parameter {key!r}")
        if key == "noise" and isinstance(value, dict):
            try:
                value = NoiseParams(**value)
            except TypeError as exc:
                raise ParameterError(f"bad noise settings: {exc}") from exc
        elif key == "intermode_covariance" and value is not None:
            value = np.asarray(value, dtype=np.float64)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return _jsonable(dataclasses.asdict(value))
    return value


@dataclass
class PipelineConfig:
    """One batch run: which method, over which corpus, how reproducibly.

    count outputs are produced by cycling the sorted input corpus.
    image_size is the square side every input is center-cropped and
    resized to. Parallel workers only split the work; outputs and the
    manifest are byte-identical for any worker count.
    """

    method: str
    input_dir: str
    output_dir: str
    params: object = None
    image_size: int = 256
    master_seed: int = 0
    count: int = 1
    emit_fields: bool = False
    grayscale: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.method not in _METHOD_PARAMS:
            raise ParameterError(
                f"unknown method {self.method!r}; choose from {sorted(_METHOD_PARAMS)}"
            )
        if self.params is None:
            self.params = _METHOD_PARAMS[self.method]()
        elif not isinstance(self.params, _METHOD_PARAMS[self.method]):
            raise ParameterError(
                f"params for {self.method} must be "
                f"{_METHOD_PARAMS[self.method].__name__}, got "
                f"{type(self.params).__name__}"
            )
        if self.count < 1:
            raise ParameterError(f"count must be >= 1, got {self.count}")
        if self.image_size < 8:
            raise ParameterError(f"image_size must be >= 8, got {self.image_size}")
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")
        if not 0 <= self.master_seed < 2**64:
            raise ParameterError("master_seed must fit in an unsigned 64-bit value")


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a JSON config file into a validated PipelineConfig.

    Recognized keys: method, input_dir, output_dir, params (a dict of
    method parameters), image_size, master_seed, count, emit_fields,
    grayscale, workers, range_preset. A range preset (r300, r650,
    r1000) sets the propagation length for the methods that have one.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise PipelineError(f"could not read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParameterError("config root must be a JSON object")
    known = {
        "method",
        "input_dir",
        "output_dir",
        "params",
        "image_size",
        "master_seed",
        "count",
        "emit_fields",
        "grayscale",
        "workers",
        "range_preset",
    }
    unknown = set(raw) - known
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    for key in ("method", "input_dir", "output_dir"):
        if key not in raw:
            raise ParameterError(f"config is missing required key {key!r}")
    method = raw["method"]
    overrides = dict(raw.get("params") or {})
    preset = raw.get("range_preset")
    if preset is not None:
        if preset not in _RANGE_PRESETS:
            raise ParameterError(
                f"unknown range_preset {preset!r}; choose from "
                f"{sorted(_RANGE_PRESETS)}"
            )
        if method not in ("chimitt", "mao"):
            raise ParameterError(
                f"range_preset applies to chimitt and mao, not {method!r}"
            )
        if "propagation_length" in overrides:
            raise ParameterError(
                "give either range_preset or params.propagation_length, not both"
            )
        overrides["propagation_length"] = _RANGE_PRESETS[preset]
    params = build_method_params(method, overrides)
    return PipelineConfig(
        method=method,
        input_dir=raw["input_dir"],
        output_dir=raw["output_dir"],
        params=params,
        image_size=int(raw.get("image_size", 256)),
        master_seed=int(raw.get("master_seed", 0)),
        count=int(raw.get("count", 1)),
        emit_fields=bool(raw.get("emit_fields", False)),
        grayscale=bool(raw.get("grayscale", False)),
        workers=int(raw.get("workers", 1)),
    )


@dataclass
class DegradationRecord:
    """Everything needed to regenerate one output image exactly.

    output_path and field_path are relative to the manifest's
    directory; input_path is absolute. output_sha256 hashes the PNG
    bytes as written, so replays can prove bit-exactness.
    """

    index: int
    method: str
    seed: int
    input_path: str
    output_path: str
    image_size: int
    grayscale: bool
    params: dict
    draws: dict
    output_sha256: str
    field_path: str | None = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "DegradationRecord":
        data = json.loads(line)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ParameterError(f"unknown manifest record keys: {sorted(unknown)}")
        return cls(**data)


def _prepare_input(path: str | Path, image_size: int, grayscale: bool) -> ImageBuffer:
    img = read_png(path)
    img = center_crop_square(img)
    img = bilinear_resize(img, image_size, image_size)
    if grayscale:
        img = to_grayscale(img)
    return img


def _degrade(method: str, img: ImageBuffer, params, rng: RandomSource, draws: dict,
             basis: PsfBasis | None):
    if method == "chak":
        return degrade_chak(img, params, rng, draws=draws)
    if method == "schwartzman":
        return degrade_schwartzman(img, params, rng, draws=draws)
    if method == "chimitt":
        return degrade_chimitt(img, params, rng, draws=draws)
    if method == "mao":
        return degrade_mao(img, params, rng, draws=draws, basis=basis)
    if method == "mei":
        return degrade_mei(img, params, rng, draws=draws)
    raise ParameterError(f"unknown method {method!r}")


def _execute_task(task) -> DegradationRecord | None:
    """Degrade one image and write its artifacts; None skips a bad read.

    Runs in worker processes; everything it needs arrives in the task
    tuple, and the seed depends only on (master_seed, index), so the
    outcome is independent of scheduling.
    """
    config, index, input_path, basis = task
    try:
        img = _prepare_input(input_path, config.image_size, config.grayscale)
    except (FileFormatError, OSError) as exc:
        logger.warning("skipping unreadable input %s: %s", input_path, exc)
        return None
    seed = derive_seed(config.master_seed, index)
    rng = RandomSource(seed)
    draws: dict = {}
    out, fld = _degrade(config.method, img, config.params, rng, draws, basis)
    out_dir = Path(config.output_dir)
    output_name = f"{index:06d}_{config.method}.png"
    png = encode_png(out)
    (out_dir / output_name).write_bytes(png)
    field_name = None
    if config.emit_fields:
        field_name = f"{index:06d}_{config.method}.tsfl"
        write_motion_field(out_dir / field_name, fld)
    return DegradationRecord(
        index=index,
        method=config.method,
        seed=seed,
        input_path=str(Path(input_path).resolve()),
        output_path=output_name,
        image_size=config.image_size,
        grayscale=config.grayscale,
        params=_jsonable(config.params),
        draws=_jsonable(draws),
        output_sha256=hashlib.sha256(png).hexdigest(),
        field_path=field_name,
    )


def run_pipeline(config: PipelineConfig) -> list[DegradationRecord]:
    """Generate the batch and write its manifest; returns the records.

    The sorted PNG corpus is cycled to produce `count` outputs.
    Unreadable inputs are skipped with a logged warning; a run with no
    successes is an error. The manifest lands atomically, after every
    image it describes.
    """
    inputs = sorted(Path(config.input_dir).glob("*.png"))
    if not inputs:
        raise PipelineError(f"no PNG inputs found in {config.input_dir}")
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    basis = None
    if config.method == "mao":
        basis = build_psf_basis(config.params)
        write_psf_basis(out_dir / "psf_basis.tspb", basis.mean_kernel, basis.kernels)
    tasks = [
        (config, index, str(inputs[index % len(inputs)]), basis)
        for index in range(config.count)
    ]
    if config.workers == 1:
        results = [_execute_task(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_execute_task, tasks))
    records = [r for r in results if r is not None]
    if not records:
        raise PipelineError("no input image could be processed")
    records.sort(key=lambda r: r.index)
    tmp = out_dir / (MANIFEST_NAME + ".tmp")
    tmp.write_text("".join(r.to_json() + "\n" for r in records))
    os.replace(tmp, out_dir / MANIFEST_NAME)
    return records


def load_manifest(path: str | Path) -> list[DegradationRecord]:
    """Read a JSON-lines manifest back into records."""
    path = Path(path)
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(DegradationRecord.from_json(line))
        except (json.JSONDecodeError, TypeError) as exc:
            raise FileFormatError(
                f"bad manifest record at {path}:{lineno}: {exc}"
            ) from exc
    return records


def replay(record: DegradationRecord) -> ImageBuffer:
    """Regenerate one output image from its manifest record.

    Reads the original input, repeats the preprocessing, and reruns the
    degradation from the recorded seed and parameters. The result's PNG
    bytes hash to output_sha256 unless the record was tampered with.
    """
    params = build_method_params(record.method, record.params)
    img = _prepare_input(record.input_path, record.image_size, record.grayscale)
    rng = RandomSource(record.seed)
    basis = build_psf_basis(params) if record.method == "mao" else None
    out, _ = _degrade(record.method, img, params, rng, {}, basis)
    return out


def replay_matches(record: DegradationRecord) -> bool:
    """True when the replayed PNG bytes hash to the recorded digest."""
    out = replay(record)
    return hashlib.sha256(encode_png(out)).hexdigest() == record.output_sha256
