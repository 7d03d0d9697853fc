"""Small analytic generator used for desk-scale verification.

A fixed random network maps a seeded image-shaped latent through a few
unrolled "denoise" refinements into an RGB image. Every step has its own
frozen projection pair with injectable low-rank adapters, the map is exactly
differentiable, and inversion reverses denoise steps by fixed-point
iteration, so all engine/loss invariants can be tested without GPU weights.
"""

from __future__ import annotations

import hashlib

import torch

from ..adapters import AdapterParams
from ..config import InversionConfig
from ..errors import ConfigurationError
from .base import GeneratorHandle, LatentSeed


def _prompt_seed(prompt: str) -> int:
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


class ToyBackbone:
    """Deterministic differentiable toy generator.

    The per-step update is ``state += gain * W_out tanh(W_in state + P p)``
    on a flattened (3, H, W) state; decoding clamps to [0, 1]. Injectable
    layers are ``step{k}.proj_in`` (hidden x D) and ``step{k}.proj_out``
    (D x hidden) for every step k < max_steps.
    """

    def __init__(
        self,
        resolution: tuple[int, int] = (16, 16),
        hidden_dim: int = 16,
        prompt_dim: int = 8,
        default_steps: int = 2,
        max_steps: int = 4,
        default_truncation: int | None = None,
        weights_seed: int = 0,
        step_gain: float = 0.1,
        latent_std: float = 0.15,
        dtype: torch.dtype = torch.float32,
    ):
        if not 1 <= default_steps <= max_steps:
            raise ConfigurationError("default_steps must lie in [1, max_steps]")
        h, w = resolution
        self.resolution = (int(h), int(w))
        self.hidden_dim = hidden_dim
        self.prompt_dim = prompt_dim
        self.max_steps = max_steps
        self.step_gain = step_gain
        self.latent_std = latent_std
        self.dtype = dtype
        self._dim = 3 * h * w

        self.handle = GeneratorHandle(
            backbone_id="toy",
            distilled=True,
            default_steps=default_steps,
            default_truncation=default_truncation or default_steps,
            render_steps=max_steps,
            latent_shape=(3, h, w),
            resolution=self.resolution,
        )
        self.handle.validate()

        gen = torch.Generator().manual_seed(weights_seed)
        d, m, p = self._dim, hidden_dim, prompt_dim
        self._weights = []
        for _ in range(max_steps):
            self._weights.append(
                {
                    "w_in": torch.randn(m, d, generator=gen, dtype=dtype) / d**0.5,
                    "b_in": 0.1 * torch.randn(m, generator=gen, dtype=dtype),
                    "prompt_proj": torch.randn(m, p, generator=gen, dtype=dtype) / p**0.5,
                    "w_out": torch.randn(d, m, generator=gen, dtype=dtype) / m**0.5,
                    "b_out": 0.01 * torch.randn(d, generator=gen, dtype=dtype),
                }
            )

    # -- structure ---------------------------------------------------------

    def adapter_targets(self) -> dict[str, tuple[int, int]]:
        targets: dict[str, tuple[int, int]] = {}
        for k in range(self.max_steps):
            targets[f"step{k}.proj_in"] = (self.hidden_dim, self._dim)
            targets[f"step{k}.proj_out"] = (self._dim, self.hidden_dim)
        return targets

    def default_target_layers(self) -> list[str]:
        return list(self.adapter_targets().keys())

    # -- sampling ----------------------------------------------------------

    def latent_from_seed(self, seed: int) -> LatentSeed:
        gen = torch.Generator().manual_seed(int(seed))
        state = 0.5 + self.latent_std * torch.randn(self.handle.latent_shape, generator=gen, dtype=self.dtype)
        return LatentSeed(seed=int(seed), state=state, start_step=0)

    def prompt_embedding(self, prompt: str) -> torch.Tensor:
        gen = torch.Generator().manual_seed(_prompt_seed(prompt))
        return torch.randn(self.prompt_dim, generator=gen, dtype=self.dtype)

    def _apply_step(self, k: int, state: torch.Tensor, prompt_vec: torch.Tensor, adapters: AdapterParams | None) -> torch.Tensor:
        w = self._weights[k]
        pre = w["w_in"] @ state + w["prompt_proj"] @ prompt_vec + w["b_in"]
        if adapters is not None and f"step{k}.proj_in" in adapters.layers:
            pair = adapters.layers[f"step{k}.proj_in"]
            pre = pre + pair.up @ (pair.down @ state)
        hidden = torch.tanh(pre)
        delta = w["w_out"] @ hidden + w["b_out"]
        if adapters is not None and f"step{k}.proj_out" in adapters.layers:
            pair = adapters.layers[f"step{k}.proj_out"]
            delta = delta + pair.up @ (pair.down @ hidden)
        return state + self.step_gain * delta

    def _check_run(self, latent: LatentSeed, steps: int, truncation: int) -> None:
        if not 1 <= steps <= self.max_steps:
            raise ConfigurationError(f"steps must lie in [1, {self.max_steps}], got {steps}")
        if truncation > steps:
            raise ConfigurationError(f"truncation depth {truncation} exceeds denoise steps {steps}")
        if truncation < 1:
            raise ConfigurationError("truncation depth must be >= 1")
        if not 0 <= latent.start_step <= steps:
            raise ConfigurationError(
                f"latent start_step {latent.start_step} outside [0, {steps}]"
            )

    def generate(
        self,
        prompt: str,
        latent: LatentSeed,
        adapters: AdapterParams | None = None,
        steps: int | None = None,
        truncation: int | None = None,
    ) -> torch.Tensor:
        """Image in [0, 1] of shape (3, H, W), differentiable w.r.t. adapters.

        Gradients flow only through the final ``truncation`` denoise steps
        (plus the clamp decoder); earlier state is detached.
        """
        steps = self.handle.default_steps if steps is None else steps
        truncation = self.handle.default_truncation if truncation is None else truncation
        self._check_run(latent, steps, truncation)
        if adapters is not None:
            adapters.validate_against(self.adapter_targets())
        prompt_vec = self.prompt_embedding(prompt)
        detach_at = steps - truncation
        state = latent.state.reshape(-1).to(self.dtype)
        for k in range(latent.start_step, steps):
            if k == detach_at:
                state = state.detach()
            state = self._apply_step(k, state, prompt_vec, adapters)
        return state.reshape(self.handle.latent_shape).clamp(0.0, 1.0)

    def invert(
        self,
        image: torch.Tensor,
        config: InversionConfig,
        prompt: str = "",
        steps: int | None = None,
    ) -> tuple[LatentSeed, torch.Tensor]:
        """Map an image to a partially re-noised latent plus its reconstruction.

        Reverses the last ``round(strength * steps)`` denoise steps by
        fixed-point iteration (the step map is a contraction for small
        ``step_gain``); re-running the forward path from the returned latent
        reproduces the reconstruction bit-exactly, and strength 0 returns the
        input unchanged.
        """
        config.validate()
        steps = self.handle.default_steps if steps is None else steps
        if not 1 <= steps <= self.max_steps:
            raise ConfigurationError(f"steps must lie in [1, {self.max_steps}], got {steps}")
        if image.shape != self.handle.latent_shape:
            raise ConfigurationError(
                f"image shape {tuple(image.shape)} does not match backbone {self.handle.latent_shape}"
            )
        reverse_count = round(config.strength * steps)
        start_step = steps - reverse_count
        prompt_vec = self.prompt_embedding(prompt)
        with torch.no_grad():
            state = image.reshape(-1).to(self.dtype).clone()
            for k in range(steps - 1, start_step - 1, -1):
                target = state
                w = self._weights[k]
                guess = target.clone()
                for _ in range(config.renoise_iterations):
                    pre = w["w_in"] @ guess + w["prompt_proj"] @ prompt_vec + w["b_in"]
                    delta = w["w_out"] @ torch.tanh(pre) + w["b_out"]
                    guess = target - self.step_gain * delta
                state = guess
        latent = LatentSeed(seed=None, state=state.reshape(self.handle.latent_shape), start_step=start_step)
        with torch.no_grad():
            reconstruction = self.generate(prompt, latent, adapters=None, steps=steps, truncation=1)
        return latent, reconstruction

    def render(
        self,
        prompt: str,
        adapters: AdapterParams | None = None,
        steps: int | None = None,
        seed: int = 0,
        latent: LatentSeed | None = None,
    ) -> torch.Tensor:
        """Inference with frozen adapters; no gradients, more steps allowed."""
        steps = self.handle.render_steps if steps is None else steps
        if latent is None:
            latent = self.latent_from_seed(seed)
        with torch.no_grad():
            return self.generate(prompt, latent, adapters=adapters, steps=steps, truncation=1)
