"""Pluggable registry of image-embedding backends.

Losses consume differentiable extractors; evaluation may use the same names
in inference mode. Real backends (self-supervised ViT features, instance
retrieval features, CLIP, perceptual nets) resolve weights from a local
cache and raise BackendUnavailableError when absent; stub extractors are
first-class so every test runs offline.
"""

from __future__ import annotations

import hashlib
import os
import threading
from dataclasses import dataclass
from typing import Callable

import torch
import torch.nn.functional as F

from .errors import BackendUnavailableError, ExtractorError

WEIGHT_CACHE_ENV = "SUBJECTTUNE_MODEL_CACHE"


@dataclass(frozen=True)
class Preprocessing:
    """Differentiable resize + per-channel normalization applied before the backend."""

    resolution: tuple[int, int] | None = None
    mean: tuple[float, float, float] | None = None
    std: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class ExtractorHandle:
    """An image-embedding backend with its preprocessing contract."""

    name: str
    embedding_dim: int
    differentiable: bool
    preprocessing: Preprocessing
    backend: Callable[[torch.Tensor], torch.Tensor]

    def __post_init__(self):
        if self.embedding_dim <= 0:
            raise ExtractorError(self.name, f"embedding_dim must be positive, got {self.embedding_dim}")


@dataclass(frozen=True)
class TextExtractorHandle:
    """A text-embedding backend (prompt-adherence scoring)."""

    name: str
    embedding_dim: int
    backend: Callable[[str], torch.Tensor]

    def embed_text(self, text: str) -> torch.Tensor:
        vector = self.backend(text)
        return vector / vector.norm().clamp_min(1e-12)


def preprocess(image: torch.Tensor, spec: Preprocessing) -> torch.Tensor:
    """Resize/normalize an image differentiably per the backend's contract."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ExtractorError("preprocess", f"expected (3, H, W) image, got shape {tuple(image.shape)}")
    x = image
    if spec.resolution is not None and tuple(x.shape[1:]) != tuple(spec.resolution):
        x = F.interpolate(
            x.unsqueeze(0), size=tuple(spec.resolution), mode="bilinear", align_corners=False
        ).squeeze(0)
    if spec.mean is not None:
        mean = torch.tensor(spec.mean, dtype=x.dtype).view(3, 1, 1)
        std = torch.tensor(spec.std or (1.0, 1.0, 1.0), dtype=x.dtype).view(3, 1, 1)
        x = (x - mean) / std
    return x


def embed(handle: ExtractorHandle, image: torch.Tensor) -> torch.Tensor:
    """Unit-normalized embedding of the declared dimension.

    Differentiable with respect to the image iff handle.differentiable.
    """
    try:
        x = preprocess(image, handle.preprocessing)
        if handle.differentiable:
            vector = handle.backend(x)
        else:
            with torch.no_grad():
                vector = handle.backend(x)
    except (BackendUnavailableError, ExtractorError):
        raise
    except Exception as exc:  # noqa: BLE001 - backend failures must name the backend
        raise ExtractorError(handle.name, str(exc)) from exc
    if vector.ndim != 1 or vector.shape[0] != handle.embedding_dim:
        raise ExtractorError(
            handle.name,
            f"backend returned shape {tuple(vector.shape)}, declared dim {handle.embedding_dim}",
        )
    return vector / vector.norm().clamp_min(1e-12)


# -- registry ---------------------------------------------------------------

_registry: dict[str, object] = {}
_lazy_factories: dict[str, Callable[[], object]] = {}
_lock = threading.Lock()


def register_extractor(name: str, handle, replace: bool = False):
    """Register a handle (or zero-arg factory) under a unique name."""
    with _lock:
        if not replace and (name in _registry or name in _lazy_factories):
            raise ExtractorError(name, "already registered")
        if callable(handle) and not isinstance(handle, (ExtractorHandle, TextExtractorHandle)):
            _lazy_factories[name] = handle
            _registry.pop(name, None)
            return None
        _registry[name] = handle
        _lazy_factories.pop(name, None)
        return handle


def get_extractor(name: str):
    with _lock:
        if name in _registry:
            return _registry[name]
        if name in _lazy_factories:
            handle = _lazy_factories[name]()
            _registry[name] = handle
            return handle
    raise ExtractorError(name, "not registered")


def registered_names() -> list[str]:
    with _lock:
        return sorted(set(_registry) | set(_lazy_factories))


def unregister_extractor(name: str) -> None:
    with _lock:
        _registry.pop(name, None)
        _lazy_factories.pop(name, None)


# -- stub backends ----------------------------------------------------------


def mean_color_stub(name: str = "stub-mean-color") -> ExtractorHandle:
    """Embedding = per-channel pixel means (dim 3)."""

    def backend(image: torch.Tensor) -> torch.Tensor:
        return image.mean(dim=(1, 2))

    return ExtractorHandle(name, 3, True, Preprocessing(), backend)


def flatten_stub(name: str = "stub-flatten", resolution: tuple[int, int] = (16, 16)) -> ExtractorHandle:
    """Embedding = the resized image flattened.

    The induced cosine distance is a pixel-alignment distance, useful as a
    deterministic identity-loss stand-in during toy optimization runs.
    """
    dim = 3 * resolution[0] * resolution[1]

    def backend(image: torch.Tensor) -> torch.Tensor:
        return image.reshape(-1)

    return ExtractorHandle(name, dim, True, Preprocessing(resolution=resolution), backend)


def projection_stub(
    name: str = "stub-projection",
    resolution: tuple[int, int] = (16, 16),
    embedding_dim: int = 32,
    seed: int = 0,
) -> ExtractorHandle:
    """Embedding = fixed seeded random linear projection of the image."""
    dim_in = 3 * resolution[0] * resolution[1]
    gen = torch.Generator().manual_seed(seed)
    matrix = torch.randn(embedding_dim, dim_in, generator=gen) / dim_in**0.5

    def backend(image: torch.Tensor) -> torch.Tensor:
        return matrix.to(image.dtype) @ image.reshape(-1)

    return ExtractorHandle(name, embedding_dim, True, Preprocessing(resolution=resolution), backend)


def hashed_text_stub(name: str = "stub-text", embedding_dim: int = 32) -> TextExtractorHandle:
    """Text embedding from a seeded hash; deterministic across runs."""

    def backend(text: str) -> torch.Tensor:
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF
        gen = torch.Generator().manual_seed(seed)
        return torch.randn(embedding_dim, generator=gen)

    return TextExtractorHandle(name, embedding_dim, backend)


# -- real backends (weight artifacts required) -------------------------------


def _unavailable_factory(name: str, dim: int, note: str) -> Callable[[], ExtractorHandle]:
    def factory() -> ExtractorHandle:
        cache = os.environ.get(WEIGHT_CACHE_ENV, "~/.cache/subjecttune")
        raise BackendUnavailableError(
            f"extractor '{name}' ({note}) requires downloaded weights under {cache} "
            f"(override with ${WEIGHT_CACHE_ENV}) plus its model package; offline runs "
            f"should register a stub instead."
        )

    return factory


_DEFAULT_BACKENDS: dict[str, tuple[int, str]] = {
    "dino-v2": (768, "self-supervised ViT image features"),
    "ir-features": (512, "instance-retrieval image features"),
    "clip-image": (512, "CLIP image tower"),
    "clip-text": (512, "CLIP text tower"),
    "lpips-backbone": (1, "perceptual similarity network"),
    "inception-pool3": (2048, "inception pooled features for distribution metrics"),
}

for _name, (_dim, _note) in _DEFAULT_BACKENDS.items():
    register_extractor(_name, _unavailable_factory(_name, _dim, _note))
