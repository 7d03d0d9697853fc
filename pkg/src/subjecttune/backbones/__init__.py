from .base import GeneratorBackbone, GeneratorHandle, LatentSeed
from .registry import (
    BACKBONE_SPECS,
    DEFAULT_EDITING_BACKBONE,
    DEFAULT_GENERATION_BACKBONE,
    MODEL_CACHE_ENV,
    backbone_ids,
    get_backbone_spec,
    load_backbone,
)
from .toy import ToyBackbone

__all__ = [
    "GeneratorBackbone",
    "GeneratorHandle",
    "LatentSeed",
    "ToyBackbone",
    "BACKBONE_SPECS",
    "DEFAULT_EDITING_BACKBONE",
    "DEFAULT_GENERATION_BACKBONE",
    "MODEL_CACHE_ENV",
    "backbone_ids",
    "get_backbone_spec",
    "load_backbone",
]
