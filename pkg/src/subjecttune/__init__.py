"""Inference-time subject personalization for frozen image generators.

Adapts a generator to a single reference subject image by iteratively
generating, scoring with identity-similarity metrics, and updating low-rank
adapter parameters; supports subject-driven generation and editing with an
interactive steering surface.
"""

from .adapters import AdapterParams, init_adapters, load_checkpoint, save_checkpoint
from .backbones import GeneratorHandle, LatentSeed, ToyBackbone, load_backbone
from .config import (
    EarlyStopPolicy,
    InversionConfig,
    LossWeights,
    OptimizationConfig,
    config_hash,
)
from .engine import (
    GeneratedFrame,
    RunResult,
    StopDecision,
    StopReason,
    run_optimization,
    should_stop,
)
from .extractors import (
    ExtractorHandle,
    embed,
    flatten_stub,
    get_extractor,
    mean_color_stub,
    projection_stub,
    register_extractor,
)
from .losses import LossReport, background_loss, editing_loss, similarity_loss
from .masks import SubjectMask, build_subject_mask, invert_mask
from .subject import ReferenceSubject
from .workflows import EditJob, GenerationJob, run_edit, run_generation, seed_sweep

__version__ = "0.1.0"

__all__ = [
    "AdapterParams",
    "EarlyStopPolicy",
    "EditJob",
    "ExtractorHandle",
    "GeneratedFrame",
    "GenerationJob",
    "GeneratorHandle",
    "InversionConfig",
    "LatentSeed",
    "LossReport",
    "LossWeights",
    "OptimizationConfig",
    "ReferenceSubject",
    "RunResult",
    "StopDecision",
    "StopReason",
    "SubjectMask",
    "ToyBackbone",
    "background_loss",
    "build_subject_mask",
    "config_hash",
    "editing_loss",
    "embed",
    "flatten_stub",
    "get_extractor",
    "init_adapters",
    "invert_mask",
    "load_backbone",
    "load_checkpoint",
    "mean_color_stub",
    "projection_stub",
    "register_extractor",
    "run_edit",
    "run_generation",
    "run_optimization",
    "save_checkpoint",
    "seed_sweep",
    "should_stop",
    "similarity_loss",
]
