"""Core inference-time optimization loop.

Each iteration decodes an image with the current adapters, scores it with a
differentiable objective, and descends the adapter parameters with an
adaptive-moment optimizer; the loop ends on stagnation, exhaustion, an
external stop signal, or a step failure.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
import torch

from .adapters import AdapterParams, init_adapters
from .backbones.base import GeneratorBackbone, LatentSeed
from .config import OptimizationConfig
from .errors import ConfigurationError, EngineStepError
from .imaging import to_numpy_image
from .losses import LossReport
from .subject import ReferenceSubject


class StopReason(str, enum.Enum):
    EARLY_STOP = "early_stop"
    MAX_ITERATIONS = "max_iterations"
    USER_STOP = "user_stop"
    ERROR = "error"


@dataclass(frozen=True)
class StopDecision:
    reason: StopReason
    stop_index: int


@dataclass
class GeneratedFrame:
    """One iteration's decoded image with its loss breakdown.

    ``image`` is (H, W, 3) float32 clamped to [0, 1]; it is None for steps
    dropped by ``frame_stride``. ``loss_components`` are unweighted.
    """

    step_index: int
    image: np.ndarray | None
    loss_total: float
    loss_components: dict[str, float]
    wall_time: float


@dataclass
class OptimizationState:
    """Mutable per-session loop state shared across steps."""

    step_index: int
    prompt: str
    latent: LatentSeed
    optimizer: torch.optim.Optimizer
    steps: int
    truncation: int


@dataclass
class RunResult:
    """Outcome of run_optimization; unpacks as (adapters, frames, decision)."""

    adapters: AdapterParams
    frames: list[GeneratedFrame]
    decision: StopDecision
    best_index: int
    best_loss: float
    loss_history: list[float] = field(default_factory=list)
    error_message: str | None = None

    def __iter__(self) -> Iterator:
        return iter((self.adapters, self.frames, self.decision))


def should_stop(loss_history: Sequence[float], x_percent: float, n_window: int) -> bool:
    """True iff the best loss in the trailing window failed to improve on the
    best loss before the window by more than ``x_percent`` (relative).

    Ties and exact x% gains count as stagnation (strict comparison).
    """
    if len(loss_history) == 0:
        raise ValueError("loss_history must be non-empty")
    if x_percent < 0:
        raise ValueError("x_percent must be >= 0")
    if n_window < 1:
        raise ValueError("n_window must be >= 1")
    if len(loss_history) <= n_window:
        return False
    window_best = min(loss_history[-n_window:])
    prior_best = min(loss_history[:-n_window])
    # "improved by x percent" = dropped strictly below prior_best less x% of it
    threshold = prior_best - (x_percent / 100.0) * abs(prior_best)
    return window_best >= threshold


def make_optimizer(adapters: AdapterParams, config: OptimizationConfig) -> torch.optim.Optimizer:
    params = adapters.parameters()
    if config.optimizer == "sgd":
        return torch.optim.SGD(params, lr=config.learning_rate)
    return torch.optim.Adam(
        params, lr=config.learning_rate, betas=config.adam_betas, eps=config.adam_eps
    )


def optimization_step(
    state: OptimizationState,
    backbone: GeneratorBackbone,
    adapters: AdapterParams,
    loss_fn: Callable[[torch.Tensor], LossReport],
    config: OptimizationConfig,
) -> tuple[GeneratedFrame, AdapterParams]:
    """Generate with the current adapters, then descend the loss.

    Returns the frame produced by the pre-update adapters together with the
    post-update adapters. Non-finite losses or gradients abort the step.
    """
    started = time.perf_counter()
    i = state.step_index
    try:
        image = backbone.generate(
            state.prompt, state.latent, adapters, steps=state.steps, truncation=state.truncation
        )
    except EngineStepError:
        raise
    except Exception as exc:
        raise EngineStepError(i, f"backbone failure: {exc}") from exc

    report = loss_fn(image)
    total = report.total
    if not bool(torch.isfinite(total)):
        raise EngineStepError(i, f"non-finite loss {float(total)!r}")

    if total.requires_grad:
        state.optimizer.zero_grad()
        total.backward()
        for layer_id, pair in adapters.iter_named():
            for tensor in (pair.down, pair.up):
                if tensor.grad is not None and not bool(torch.isfinite(tensor.grad).all()):
                    raise EngineStepError(i, f"non-finite gradient in layer '{layer_id}'")
        state.optimizer.step()

    detached = report.detached()
    frame = GeneratedFrame(
        step_index=i,
        image=to_numpy_image(image),
        loss_total=float(detached.total),
        loss_components=detached.components(),
        wall_time=time.perf_counter() - started,
    )
    return frame, adapters


def _stop_requested(stop_channel) -> bool:
    if stop_channel is None:
        return False
    try:
        if hasattr(stop_channel, "is_set"):
            return bool(stop_channel.is_set())
        if callable(stop_channel):
            return bool(stop_channel())
    except Exception:
        # A torn-down channel counts as "no signal".
        return False
    return False


def run_optimization(
    subject: ReferenceSubject | None,
    backbone: GeneratorBackbone,
    loss_fn: Callable[[torch.Tensor], LossReport],
    config: OptimizationConfig,
    stop_channel=None,
    *,
    prompt: str | None = None,
    latent: LatentSeed | None = None,
    adapters: AdapterParams | None = None,
    on_frame: Callable[[GeneratedFrame, AdapterParams], None] | None = None,
) -> RunResult:
    """Run the full iterate-generate-score-update loop.

    Deterministic given (config, subject, backbone): the latent is derived
    from ``config.seed`` unless one is supplied (editing passes the inverted
    latent), adapter init is seeded, and the sampler is noise-free. The
    returned adapters are the snapshot that produced the lowest-total-loss
    frame. ``stop_channel`` (anything with ``is_set()`` or a bool callable)
    is polled between steps.
    """
    config.validate()
    if prompt is None:
        if subject is None:
            raise ConfigurationError("either a subject or an explicit prompt is required")
        prompt = subject.simple_prompt

    steps = config.denoise_steps if config.denoise_steps is not None else backbone.handle.default_steps
    truncation = (
        config.truncation_depth if config.truncation_depth is not None else backbone.handle.default_truncation
    )
    if truncation > steps:
        raise ConfigurationError(f"truncation depth {truncation} exceeds denoise steps {steps}")

    if latent is None:
        latent = backbone.latent_from_seed(config.seed)
    if adapters is None:
        dtype = getattr(backbone, "dtype", torch.float32)
        adapters = init_adapters(
            backbone, config.rank, config.target_layers, seed=config.seed, dtype=dtype
        )

    state = OptimizationState(
        step_index=0,
        prompt=prompt,
        latent=latent,
        optimizer=make_optimizer(adapters, config),
        steps=steps,
        truncation=truncation,
    )

    frames: list[GeneratedFrame] = []
    history: list[float] = []
    best_loss = math.inf
    best_index = -1
    best_snapshot = adapters.clone()
    decision: StopDecision | None = None
    error_message: str | None = None

    for i in range(config.max_iterations):
        if _stop_requested(stop_channel):
            decision = StopDecision(StopReason.USER_STOP, i - 1)
            break
        snapshot = adapters.clone()
        state.step_index = i
        try:
            frame, adapters = optimization_step(state, backbone, adapters, loss_fn, config)
        except EngineStepError as exc:
            decision = StopDecision(StopReason.ERROR, i - 1)
            error_message = str(exc)
            break
        history.append(frame.loss_total)
        if frame.loss_total < best_loss:
            best_loss = frame.loss_total
            best_index = i
            best_snapshot = snapshot
        if i % config.frame_stride != 0:
            frame = dataclasses.replace(frame, image=None)
        frames.append(frame)
        if on_frame is not None:
            on_frame(frame, snapshot)
        if should_stop(history, config.early_stop.min_improvement_pct, config.early_stop.window):
            decision = StopDecision(StopReason.EARLY_STOP, i)
            break

    if decision is None:
        decision = StopDecision(StopReason.MAX_ITERATIONS, config.max_iterations - 1)

    return RunResult(
        adapters=best_snapshot,
        frames=frames,
        decision=decision,
        best_index=best_index,
        best_loss=best_loss,
        loss_history=history,
        error_message=error_message,
    )
