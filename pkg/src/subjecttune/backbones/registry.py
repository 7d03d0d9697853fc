"""Backbone id registry: stable vocabulary plus per-backbone defaults.

Only the toy backbone is loadable without external weights. Real generator
entries carry the documented step/truncation defaults so configs resolve and
hash identically everywhere, but loading them requires the optional
``diffusers`` stack plus downloaded weights in the model cache.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable

from ..errors import BackendUnavailableError, ConfigurationError
from .base import GeneratorBackbone, GeneratorHandle
from .toy import ToyBackbone

MODEL_CACHE_ENV = "SUBJECTTUNE_MODEL_CACHE"

DEFAULT_GENERATION_BACKBONE = "sdxl-turbo"
DEFAULT_EDITING_BACKBONE = "sd-turbo"


@dataclass(frozen=True)
class BackboneSpec:
    handle: GeneratorHandle
    loader: Callable[..., GeneratorBackbone] | None = None


def _unavailable(handle: GeneratorHandle):
    def loader(**_kwargs) -> GeneratorBackbone:
        cache = os.environ.get(MODEL_CACHE_ENV, "~/.cache/subjecttune")
        raise BackendUnavailableError(
            f"backbone '{handle.backbone_id}' needs the optional GPU generator stack: "
            f"install the 'diffusers' package and place the pretrained weights under "
            f"{cache} (override with ${MODEL_CACHE_ENV}). Offline runs should use "
            f"backbone 'toy'."
        )

    return loader


_TOY_HANDLE = ToyBackbone().handle

BACKBONE_SPECS: dict[str, BackboneSpec] = {
    "toy": BackboneSpec(handle=_TOY_HANDLE, loader=ToyBackbone),
    "sdxl-turbo": BackboneSpec(
        handle=GeneratorHandle(
            backbone_id="sdxl-turbo",
            distilled=True,
            default_steps=1,
            default_truncation=1,
            render_steps=4,
            latent_shape=(4, 64, 64),
            resolution=(512, 512),
        )
    ),
    "sd-turbo": BackboneSpec(
        handle=GeneratorHandle(
            backbone_id="sd-turbo",
            distilled=True,
            default_steps=1,
            default_truncation=1,
            render_steps=4,
            latent_shape=(4, 64, 64),
            resolution=(512, 512),
        )
    ),
    "flux-schnell": BackboneSpec(
        # Optimizes at a single denoise step (quality collapses at >= 2) and
        # renders at 4 steps, which removes the single-step blur.
        handle=GeneratorHandle(
            backbone_id="flux-schnell",
            distilled=True,
            default_steps=1,
            default_truncation=1,
            render_steps=4,
            latent_shape=(16, 64, 64),
            resolution=(512, 512),
        )
    ),
    "sana": BackboneSpec(
        # Non-distilled: ~20 denoise steps, gradients through the last 3.
        handle=GeneratorHandle(
            backbone_id="sana",
            distilled=False,
            default_steps=20,
            default_truncation=3,
            render_steps=20,
            latent_shape=(32, 16, 16),
            resolution=(512, 512),
        )
    ),
}


def backbone_ids() -> list[str]:
    return list(BACKBONE_SPECS.keys())


def get_backbone_spec(backbone_id: str) -> BackboneSpec:
    try:
        return BACKBONE_SPECS[backbone_id]
    except KeyError:
        raise ConfigurationError(
            f"unknown backbone '{backbone_id}'; known: {', '.join(backbone_ids())}"
        ) from None


def load_backbone(backbone_id: str, **kwargs) -> GeneratorBackbone:
    """Instantiate a backbone; raises BackendUnavailableError for entries
    whose weights are not obtainable in this environment."""
    spec = get_backbone_spec(backbone_id)
    loader = spec.loader or _unavailable(spec.handle)
    return loader(**kwargs)
