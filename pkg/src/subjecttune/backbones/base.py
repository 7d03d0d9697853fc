"""Uniform abstraction over differentiable image generators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import torch

from ..config import InversionConfig
from ..errors import ConfigurationError


@dataclass(frozen=True)
class GeneratorHandle:
    """Static description of a generator backbone.

    ``default_steps`` is the denoise-step count used while optimizing;
    ``render_steps`` the (possibly larger) count used for final rendering;
    ``default_truncation`` how many trailing denoise steps gradients flow
    through.
    """

    backbone_id: str
    distilled: bool
    default_steps: int
    default_truncation: int
    render_steps: int
    latent_shape: tuple[int, ...]
    resolution: tuple[int, int]
    supports_inversion: bool = True

    def validate(self) -> None:
        if self.distilled and not 1 <= self.default_steps <= 4:
            raise ConfigurationError(
                f"distilled backbone '{self.backbone_id}' must use 1-4 denoise steps, "
                f"got {self.default_steps}"
            )
        if self.default_truncation > self.default_steps:
            raise ConfigurationError(
                f"truncation depth {self.default_truncation} exceeds denoise steps "
                f"{self.default_steps} for '{self.backbone_id}'"
            )


@dataclass
class LatentSeed:
    """A starting latent plus the step index generation resumes from.

    A fresh seeded latent has ``start_step`` 0; inversion returns partially
    re-noised latents with ``start_step`` > 0 so only the remaining denoise
    steps are re-run.
    """

    seed: int | None
    state: torch.Tensor
    start_step: int = 0


@runtime_checkable
class GeneratorBackbone(Protocol):
    """Contract every generator (toy or real) implements.

    ``generate`` must be deterministic given (prompt, latent, adapters,
    steps) and differentiable with respect to the adapters through the final
    ``truncation`` denoise steps plus the decoder. Implementations bind to a
    single device; concurrent calls on one instance must be read-only safe.
    """

    handle: GeneratorHandle

    def adapter_targets(self) -> dict[str, tuple[int, int]]:
        """Injectable layer ids mapped to their (d_out, d_in) dimensions."""
        ...

    def default_target_layers(self) -> list[str]:
        ...

    def latent_from_seed(self, seed: int) -> LatentSeed:
        ...

    def generate(
        self,
        prompt: str,
        latent: LatentSeed,
        adapters,
        steps: int | None = None,
        truncation: int | None = None,
    ) -> torch.Tensor:
        ...

    def invert(
        self,
        image: torch.Tensor,
        config: InversionConfig,
        prompt: str = "",
        steps: int | None = None,
    ) -> tuple[LatentSeed, torch.Tensor]:
        ...

    def render(
        self,
        prompt: str,
        adapters,
        steps: int | None = None,
        seed: int = 0,
        latent: LatentSeed | None = None,
    ) -> torch.Tensor:
        ...
