"""Seeded atmospheric-turbulence image degradation toolkit."""

from .chak import ChakParams, degrade_chak
from .chimitt import ChimittParams, degrade_chimitt
from .core import (
    ImageBuffer,
    Kernel2D,
    MotionField,
    NoiseParams,
    ParameterError,
    PipelineError,
    RandomSource,
    TurbsimError,
    UnsupportedInputError,
    add_noise,
    anisotropic_gaussian_kernel,
    bilinear_resize,
    center_crop_square,
    clip01,
    convolve,
    default_kernel_side,
    derive_seed,
    gaussian_kernel,
    resample,
    to_grayscale,
    warp,
)
from .mao import MaoParams, build_psf_basis, degrade_mao
from .mei import ElasticParams, degrade_mei
from .pipeline import (
    DegradationRecord,
    PipelineConfig,
    load_config,
    load_manifest,
    replay,
    replay_matches,
    run_pipeline,
)
from .schwartzman import SchwartzmanParams, degrade_schwartzman

__version__ = "0.1.0"
