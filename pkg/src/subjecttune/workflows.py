"""End-to-end tasks: subject-driven generation (two-stage) and editing
(inversion + masked background preservation), plus seed sweeps."""

from __future__ import annotations

import concurrent.futures
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .adapters import AdapterParams
from .artifacts import SessionWriter, decision_to_dict
from .backbones import DEFAULT_EDITING_BACKBONE, DEFAULT_GENERATION_BACKBONE, load_backbone
from .config import InversionConfig, OptimizationConfig, config_hash, config_to_dict
from .engine import RunResult, run_optimization
from .errors import ConfigurationError
from .extractors import ExtractorHandle, get_extractor
from .imaging import to_numpy_image, to_tensor_image
from .losses import build_editing_objective, build_similarity_objective
from .masks import SubjectMask, box_to_mask, build_subject_mask, dilate_mask, identify_class
from .subject import ReferenceSubject

MASK_SOURCES = ("auto", "user", "box", "none")


@dataclass
class GenerationJob:
    """Optimize adapters against the subject, then render target prompts.

    With ``simplify_prompt`` (the default) stage 1 optimizes on a simple
    class-level prompt at the backbone's low step count and stage 2 renders
    every target prompt with more steps and frozen adapters. Disabling it
    optimizes directly on the (single) target prompt.
    """

    subject: ReferenceSubject
    target_prompts: list[str]
    simple_prompt: str | None = None
    config: OptimizationConfig = field(default_factory=OptimizationConfig)
    backbone_id: str = DEFAULT_GENERATION_BACKBONE
    extractor_names: tuple[str, str] = ("dino-v2", "ir-features")
    simplify_prompt: bool = True

    def optimization_prompt(self) -> str:
        if self.simplify_prompt:
            return self.simple_prompt or self.subject.simple_prompt
        if len(self.target_prompts) != 1:
            raise ConfigurationError(
                "disabling prompt simplification requires exactly one target prompt"
            )
        return self.target_prompts[0]


@dataclass
class EditJob:
    """Swap the subject of an input image while preserving its background."""

    input_image: np.ndarray
    subject: ReferenceSubject
    config: OptimizationConfig = field(default_factory=OptimizationConfig)
    backbone_id: str = DEFAULT_EDITING_BACKBONE
    inversion: InversionConfig = field(default_factory=InversionConfig)
    mask_source: str = "auto"
    user_mask: np.ndarray | None = None
    user_box: tuple[int, int, int, int] | None = None
    prompt: str | None = None
    mask_dilation: int = 3
    extractor_names: tuple[str, str] = ("dino-v2", "ir-features")

    def __post_init__(self):
        if self.mask_source not in MASK_SOURCES:
            raise ConfigurationError(
                f"mask_source must be one of {MASK_SOURCES}, got {self.mask_source!r}"
            )


@dataclass
class GenerationResult:
    adapters: AdapterParams
    renders: dict[str, np.ndarray]
    render_errors: dict[str, str]
    run: RunResult
    session_dir: Path | None = None


@dataclass
class EditResult:
    adapters: AdapterParams
    edited: np.ndarray
    mask: SubjectMask
    reconstruction: np.ndarray
    run: RunResult
    session_dir: Path | None = None


def _resolve_extractors(job, extractors) -> tuple[ExtractorHandle, ExtractorHandle]:
    if extractors is not None:
        return extractors
    return tuple(get_extractor(name) for name in job.extractor_names)


def _writer_callback(writer: SessionWriter | None, on_frame):
    def callback(frame, snapshot):
        if writer is not None:
            writer.write_frame(frame)
        if on_frame is not None:
            on_frame(frame, snapshot)

    return callback if (writer is not None or on_frame is not None) else None


def run_generation(
    job: GenerationJob,
    *,
    backbone=None,
    extractors: tuple[ExtractorHandle, ExtractorHandle] | None = None,
    stop_channel=None,
    on_frame=None,
    session_dir=None,
) -> GenerationResult:
    """Two-stage subject personalization.

    Stage-2 rendering never touches the optimized adapters; per-prompt render
    failures are collected without discarding stage-1 results.
    """
    backbone = backbone or load_backbone(job.backbone_id)
    extractors = _resolve_extractors(job, extractors)
    job.config.validate()
    prompt = job.optimization_prompt()

    dtype = getattr(backbone, "dtype", torch.float32)
    ref = to_tensor_image(job.subject.image, dtype)
    objective = build_similarity_objective(ref, extractors, job.config.loss_weights)

    writer = SessionWriter(session_dir) if session_dir is not None else None
    result = run_optimization(
        job.subject,
        backbone,
        objective,
        job.config,
        stop_channel,
        prompt=prompt,
        on_frame=_writer_callback(writer, on_frame),
    )

    renders: dict[str, np.ndarray] = {}
    render_errors: dict[str, str] = {}
    for target in job.target_prompts:
        try:
            image = backbone.render(
                target, result.adapters, steps=backbone.handle.render_steps, seed=job.config.seed
            )
            renders[target] = to_numpy_image(image)
        except Exception as exc:  # noqa: BLE001 - stage-2 failures must not lose stage 1
            render_errors[target] = str(exc)

    if writer is not None:
        cfg_hash = config_hash(job.config)
        writer.write_checkpoint(
            result.adapters,
            backbone_id=backbone.handle.backbone_id,
            config_hash=cfg_hash,
            step_index=result.best_index,
        )
        for target, image in renders.items():
            writer.write_render(target, image)
        writer.write_metadata(
            {
                "task": "generate",
                "backbone_id": backbone.handle.backbone_id,
                "class_label": job.subject.class_label,
                "prompt": prompt,
                "target_prompts": job.target_prompts,
                "config": config_to_dict(job.config),
                "config_hash": cfg_hash,
                "decision": decision_to_dict(result.decision),
                "best_index": result.best_index,
                "best_loss": result.best_loss,
                "render_errors": render_errors,
            }
        )

    return GenerationResult(
        adapters=result.adapters,
        renders=renders,
        render_errors=render_errors,
        run=result,
        session_dir=Path(session_dir) if session_dir is not None else None,
    )


def _resolve_edit_mask(job: EditJob, classifier, detector, segmenter) -> SubjectMask:
    h, w = job.input_image.shape[:2]
    if job.mask_source == "user":
        if job.user_mask is None:
            raise ConfigurationError("mask_source 'user' requires a user_mask")
        return build_subject_mask(job.input_image, job.subject.class_label, user_mask=job.user_mask)
    if job.mask_source == "box":
        if job.user_box is None:
            raise ConfigurationError("mask_source 'box' requires a user_box")
        return SubjectMask(
            box_to_mask((h, w), job.user_box),
            job.subject.class_label,
            box=job.user_box,
            box_fallback=True,
            source="box",
        )
    if job.mask_source == "none":
        return SubjectMask(np.ones((h, w), dtype=bool), job.subject.class_label, source="full")
    label = identify_class(job.subject.image, job.subject.class_label or None, classifier)
    return build_subject_mask(
        job.input_image, label, detector=detector, segmenter=segmenter
    )


def run_edit(
    job: EditJob,
    *,
    backbone=None,
    extractors: tuple[ExtractorHandle, ExtractorHandle] | None = None,
    classifier=None,
    detector=None,
    segmenter=None,
    stop_channel=None,
    on_frame=None,
    session_dir=None,
) -> EditResult:
    """Inversion, masking, then masked-objective optimization.

    Every iteration regenerates from the fixed inverted latent so the scene
    is reproduced while the adapters swap the subject; the composite loss
    keeps the (dilated-mask) background pinned to the inverted reconstruction.
    """
    backbone = backbone or load_backbone(job.backbone_id)
    if not backbone.handle.supports_inversion:
        raise ConfigurationError(
            f"backbone '{backbone.handle.backbone_id}' does not support inversion"
        )
    extractors = _resolve_extractors(job, extractors)
    job.config.validate()
    prompt = job.prompt or job.subject.simple_prompt

    dtype = getattr(backbone, "dtype", torch.float32)
    input_t = to_tensor_image(job.input_image, dtype)
    latent, recon_t = backbone.invert(input_t, job.inversion, prompt=prompt)

    mask = _resolve_edit_mask(job, classifier, detector, segmenter)
    loss_mask = dilate_mask(mask.mask, job.mask_dilation)

    ref = to_tensor_image(job.subject.image, dtype)
    objective = build_editing_objective(ref, recon_t, loss_mask, extractors, job.config.loss_weights)

    writer = SessionWriter(session_dir) if session_dir is not None else None
    if writer is not None:
        writer.write_mask(mask.mask)
        writer.write_reconstruction(to_numpy_image(recon_t))

    result = run_optimization(
        job.subject,
        backbone,
        objective,
        job.config,
        stop_channel,
        prompt=prompt,
        latent=latent,
        on_frame=_writer_callback(writer, on_frame),
    )

    steps = job.config.denoise_steps or backbone.handle.default_steps
    with torch.no_grad():
        edited_t = backbone.generate(prompt, latent, result.adapters, steps=steps, truncation=1)
    edited = to_numpy_image(edited_t)

    if writer is not None:
        cfg_hash = config_hash(job.config)
        writer.write_checkpoint(
            result.adapters,
            backbone_id=backbone.handle.backbone_id,
            config_hash=cfg_hash,
            step_index=result.best_index,
        )
        writer.write_render("edited", edited)
        writer.write_metadata(
            {
                "task": "edit",
                "backbone_id": backbone.handle.backbone_id,
                "class_label": job.subject.class_label,
                "prompt": prompt,
                "mask_source": mask.source,
                "config": config_to_dict(job.config),
                "config_hash": cfg_hash,
                "inversion": config_to_dict(job.inversion),
                "decision": decision_to_dict(result.decision),
                "best_index": result.best_index,
                "best_loss": result.best_loss,
            }
        )

    return EditResult(
        adapters=result.adapters,
        edited=edited,
        mask=mask,
        reconstruction=to_numpy_image(recon_t),
        run=result,
        session_dir=Path(session_dir) if session_dir is not None else None,
    )


def make_grid(images: list[np.ndarray], columns: int = 4) -> np.ndarray:
    """Collate equally sized images into a row-major grid."""
    if not images:
        raise ConfigurationError("cannot build a grid from zero images")
    h, w = images[0].shape[:2]
    rows = math.ceil(len(images) / columns)
    cols = min(columns, len(images))
    grid = np.zeros((rows * h, cols * w, 3), dtype=np.float32)
    for idx, image in enumerate(images):
        r, c = divmod(idx, columns)
        grid[r * h : (r + 1) * h, c * w : (c + 1) * w] = image
    return grid


def seed_sweep(
    job,
    seeds: list[int],
    *,
    workers: int = 1,
    session_root=None,
    **run_kwargs,
):
    """Independent sessions per seed; failures are isolated per seed.

    Returns (results, errors, grid) where results maps seed to the per-seed
    result, errors maps failed seeds to messages, and grid collates one
    output image per successful seed (in seed order).
    """
    if not seeds:
        raise ConfigurationError("seed sweep requires at least one seed")
    runner = run_edit if isinstance(job, EditJob) else run_generation

    def run_one(seed: int):
        seeded = dataclasses.replace(job, config=dataclasses.replace(job.config, seed=seed))
        session_dir = None
        if session_root is not None:
            session_dir = Path(session_root) / f"seed_{seed}"
        return runner(seeded, session_dir=session_dir, **run_kwargs)

    results: dict[int, object] = {}
    errors: dict[int, str] = {}
    if workers <= 1:
        for seed in seeds:
            try:
                results[seed] = run_one(seed)
            except Exception as exc:  # noqa: BLE001 - isolate per-seed failures
                errors[seed] = str(exc)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {seed: pool.submit(run_one, seed) for seed in seeds}
            for seed, future in futures.items():
                try:
                    results[seed] = future.result()
                except Exception as exc:  # noqa: BLE001
                    errors[seed] = str(exc)

    grid = None
    tiles: list[np.ndarray] = []
    for seed in seeds:
        result = results.get(seed)
        if isinstance(result, EditResult):
            tiles.append(result.edited)
        elif isinstance(result, GenerationResult) and result.renders:
            tiles.append(next(iter(result.renders.values())))
    if tiles:
        grid = make_grid(tiles)
    return results, errors, grid
