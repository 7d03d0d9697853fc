"""Run configuration dataclasses, merging, and hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigurationError


@dataclass(frozen=True)
class LossWeights:
    """Calibration weights of the composite objective.

    ``dino`` and ``ir`` scale the two identity-distance terms; ``background``
    scales the background-preservation penalty used during editing.
    """

    dino: float = 1.0
    ir: float = 1.0
    background: float = 10.0

    def validate(self) -> None:
        for name in ("dino", "ir", "background"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigurationError(f"loss weight '{name}' must be numeric, got {value!r}")
            if not math.isfinite(float(value)):
                raise ConfigurationError(f"loss weight '{name}' must be finite, got {value!r}")


@dataclass(frozen=True)
class EarlyStopPolicy:
    """Stop when the best loss in the trailing window fails to improve.

    ``min_improvement_pct`` is the relative improvement (in percent) the
    trailing ``window`` losses must achieve over the best loss seen before the
    window; ties and smaller gains count as stagnation.
    """

    min_improvement_pct: float = 3.0
    window: int = 7

    def validate(self) -> None:
        if self.min_improvement_pct < 0:
            raise ConfigurationError("early-stop improvement percent must be >= 0")
        if self.window < 1:
            raise ConfigurationError("early-stop window must be >= 1")


@dataclass(frozen=True)
class InversionConfig:
    """Controls mapping a real image into the generator's latent trajectory.

    ``strength`` in [0, 1] is the fraction of denoise steps that are reversed
    and later re-run; 0 reproduces the input exactly, larger values trade
    reconstruction fidelity for editability.
    """

    strength: float = 0.75
    renoise_iterations: int = 5

    def validate(self) -> None:
        if not 0.0 <= self.strength <= 1.0:
            raise ConfigurationError(f"inversion strength must be in [0, 1], got {self.strength}")
        if self.renoise_iterations < 1:
            raise ConfigurationError("renoise_iterations must be >= 1")


@dataclass(frozen=True)
class OptimizationConfig:
    """Everything a single optimization session needs to be reproducible.

    ``denoise_steps`` and ``truncation_depth`` default to the backbone's
    recommended values when left as None. ``target_layers`` of None selects
    the backbone's default injection targets (all attention projections on
    real generators).
    """

    seed: int = 0
    learning_rate: float = 3e-4
    loss_weights: LossWeights = field(default_factory=LossWeights)
    max_iterations: int = 60
    early_stop: EarlyStopPolicy = field(default_factory=EarlyStopPolicy)
    truncation_depth: int | None = None
    denoise_steps: int | None = None
    resolution: tuple[int, int] = (512, 512)
    rank: int = 16
    target_layers: tuple[str, ...] | None = None
    optimizer: str = "adam"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    frame_stride: int = 1

    def validate(self) -> None:
        self.loss_weights.validate()
        self.early_stop.validate()
        if not math.isfinite(self.learning_rate) or self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive and finite, got {self.learning_rate}")
        if self.max_iterations < self.early_stop.window:
            raise ConfigurationError("max_iterations must be >= the early-stop window")
        if self.rank < 1:
            raise ConfigurationError(f"adapter rank must be >= 1, got {self.rank}")
        if self.truncation_depth is not None and self.truncation_depth < 1:
            raise ConfigurationError("truncation_depth must be >= 1")
        if self.denoise_steps is not None and self.denoise_steps < 1:
            raise ConfigurationError("denoise_steps must be >= 1")
        if (
            self.truncation_depth is not None
            and self.denoise_steps is not None
            and self.truncation_depth > self.denoise_steps
        ):
            raise ConfigurationError(
                f"truncation_depth ({self.truncation_depth}) cannot exceed denoise_steps ({self.denoise_steps})"
            )
        if len(self.resolution) != 2 or any(int(v) < 1 for v in self.resolution):
            raise ConfigurationError(f"resolution must be two positive ints, got {self.resolution}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.frame_stride < 1:
            raise ConfigurationError("frame_stride must be >= 1")


def config_to_dict(config: Any) -> dict:
    """Plain-dict view of a (possibly nested) config dataclass."""
    return dataclasses.asdict(config)


def config_hash(config: Any) -> str:
    """Stable hash of a config: identical effective configs hash identically."""
    payload = json.dumps(config_to_dict(config), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _merge_field(cls: type, name: str, value: Any) -> Any:
    # Tuples arrive as lists from JSON/YAML; coerce them back.
    hints = {f.name: f for f in dataclasses.fields(cls)}
    if name not in hints:
        raise ConfigurationError(f"unknown config field '{name}' for {cls.__name__}")
    if isinstance(value, list):
        return tuple(value)
    return value


def optimization_config_from_dict(data: dict) -> OptimizationConfig:
    """Build an OptimizationConfig from a plain dict (e.g. a parsed YAML file)."""
    data = dict(data)
    kwargs: dict[str, Any] = {}
    if "loss_weights" in data:
        lw = data.pop("loss_weights")
        kwargs["loss_weights"] = lw if isinstance(lw, LossWeights) else LossWeights(**lw)
    if "early_stop" in data:
        es = data.pop("early_stop")
        kwargs["early_stop"] = es if isinstance(es, EarlyStopPolicy) else EarlyStopPolicy(**es)
    for key, value in data.items():
        kwargs[key] = _merge_field(OptimizationConfig, key, value)
    config = OptimizationConfig(**kwargs)
    config.validate()
    return config


def apply_overrides(config: OptimizationConfig, overrides: dict) -> OptimizationConfig:
    """Return a copy of ``config`` with non-None override values applied.

    Nested fields are addressed with dotted keys ("loss_weights.dino",
    "early_stop.window").
    """
    flat: dict[str, Any] = {}
    weights = dict(dataclasses.asdict(config.loss_weights))
    early = dict(dataclasses.asdict(config.early_stop))
    for key, value in overrides.items():
        if value is None:
            continue
        if key.startswith("loss_weights."):
            weights[key.split(".", 1)[1]] = value
        elif key.startswith("early_stop."):
            early[key.split(".", 1)[1]] = value
        else:
            flat[key] = _merge_field(OptimizationConfig, key, value)
    merged = dataclasses.replace(
        config,
        loss_weights=LossWeights(**weights),
        early_stop=EarlyStopPolicy(**early),
        **flat,
    )
    merged.validate()
    return merged
