"""Differentiable objectives: identity-similarity ensemble, background
preservation, and their composite used for editing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

from .config import LossWeights
from .errors import ResolutionMismatchError
from .extractors import ExtractorHandle, embed


@dataclass
class LossReport:
    """Breakdown of one objective evaluation.

    Components are stored unweighted; ``total`` is their weighted sum. Fields
    hold 0-d tensors while a graph is alive; ``detached()`` gives floats.
    """

    total: torch.Tensor
    sim_dino: torch.Tensor
    sim_ir: torch.Tensor
    bg: torch.Tensor

    def components(self) -> dict[str, float]:
        return {
            "sim_dino": float(self.sim_dino),
            "sim_ir": float(self.sim_ir),
            "bg": float(self.bg),
        }

    def detached(self) -> "LossReport":
        return LossReport(
            total=self.total.detach(),
            sim_dino=self.sim_dino.detach(),
            sim_ir=self.sim_ir.detach(),
            bg=self.bg.detach(),
        )


def cosine_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """1 - cosine similarity of two unit vectors, floored at 0 against rounding."""
    return (1.0 - (a * b).sum()).clamp_min(0.0)


def _check_same_resolution(*images) -> None:
    shapes = {tuple(img.shape[-2:]) for img in images}
    if len(shapes) > 1:
        raise ResolutionMismatchError(f"inputs disagree on resolution: {sorted(shapes)}")


def similarity_loss(
    gen: torch.Tensor,
    ref: torch.Tensor,
    extractors: tuple[ExtractorHandle, ExtractorHandle],
    weights: LossWeights = LossWeights(),
) -> LossReport:
    """Weighted identity distance of ``gen`` to ``ref`` in two embedding spaces.

    Differentiable in ``gen``; the reference embedding carries no gradient.
    """
    _check_same_resolution(gen, ref)
    dino_handle, ir_handle = extractors
    delta_dino = cosine_distance(embed(dino_handle, gen), embed(dino_handle, ref).detach())
    delta_ir = cosine_distance(embed(ir_handle, gen), embed(ir_handle, ref).detach())
    total = weights.dino * delta_dino + weights.ir * delta_ir
    return LossReport(total=total, sim_dino=delta_dino, sim_ir=delta_ir, bg=torch.zeros_like(total))


def to_mask_tensor(mask, dtype: torch.dtype) -> torch.Tensor:
    if isinstance(mask, np.ndarray):
        mask = torch.from_numpy(mask)
    return mask.to(dtype=dtype)


def background_loss(gen: torch.Tensor, recon: torch.Tensor, subject_mask) -> torch.Tensor:
    """Mean squared error restricted to the inverse (background) of the mask.

    Returns 0 when the mask covers the whole image (nothing to preserve).
    """
    _check_same_resolution(gen, recon)
    if isinstance(subject_mask, np.ndarray):
        subject_mask = torch.from_numpy(subject_mask)
    if tuple(subject_mask.shape) != tuple(gen.shape[-2:]):
        raise ResolutionMismatchError(
            f"mask shape {tuple(subject_mask.shape)} does not match image {tuple(gen.shape[-2:])}"
        )
    inverse = (~subject_mask.bool()).to(gen.dtype)
    count = inverse.sum()
    if float(count) == 0.0:
        return torch.zeros((), dtype=gen.dtype)
    diff = (gen - recon) ** 2
    return (diff * inverse).sum() / (count * gen.shape[0])


def editing_loss(
    gen: torch.Tensor,
    ref: torch.Tensor,
    recon: torch.Tensor,
    subject_mask,
    extractors: tuple[ExtractorHandle, ExtractorHandle],
    weights: LossWeights = LossWeights(),
) -> LossReport:
    """Identity similarity plus weighted background preservation."""
    sim = similarity_loss(gen, ref, extractors, weights)
    bg = background_loss(gen, recon, subject_mask)
    return LossReport(total=sim.total + weights.background * bg, sim_dino=sim.sim_dino, sim_ir=sim.sim_ir, bg=bg)


Objective = Callable[[torch.Tensor], LossReport]


def build_similarity_objective(
    ref: torch.Tensor,
    extractors: tuple[ExtractorHandle, ExtractorHandle],
    weights: LossWeights,
) -> Objective:
    """Closure over a fixed reference with its embeddings precomputed."""
    dino_handle, ir_handle = extractors
    with torch.no_grad():
        ref_dino = embed(dino_handle, ref)
        ref_ir = embed(ir_handle, ref)

    def objective(gen: torch.Tensor) -> LossReport:
        delta_dino = cosine_distance(embed(dino_handle, gen), ref_dino.to(gen.dtype))
        delta_ir = cosine_distance(embed(ir_handle, gen), ref_ir.to(gen.dtype))
        total = weights.dino * delta_dino + weights.ir * delta_ir
        return LossReport(total, delta_dino, delta_ir, torch.zeros_like(total))

    return objective


def build_editing_objective(
    ref: torch.Tensor,
    recon: torch.Tensor,
    subject_mask,
    extractors: tuple[ExtractorHandle, ExtractorHandle],
    weights: LossWeights,
) -> Objective:
    sim_objective = build_similarity_objective(ref, extractors, weights)

    def objective(gen: torch.Tensor) -> LossReport:
        sim = sim_objective(gen)
        bg = background_loss(gen, recon.to(gen.dtype), subject_mask)
        return LossReport(sim.total + weights.background * bg, sim.sim_dino, sim.sim_ir, bg)

    return objective
