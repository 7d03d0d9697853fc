"""Low-rank adapter parameters injected into frozen generator layers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Iterator

import numpy as np
import torch

from .errors import ConfigurationError

if TYPE_CHECKING:
    from .backbones.base import GeneratorBackbone

CHECKPOINT_METADATA_KEY = "__metadata__"


@dataclass
class LowRankPair:
    """One injected layer delta, factored as ``up @ down``.

    ``down`` has shape (rank, d_in), ``up`` has shape (d_out, rank); the
    effective weight delta is the (d_out, d_in) product.
    """

    down: torch.Tensor
    up: torch.Tensor

    @property
    def rank(self) -> int:
        return self.down.shape[0]

    def delta(self) -> torch.Tensor:
        return self.up @ self.down


@dataclass
class AdapterParams:
    """Trainable low-rank factors keyed by target layer id."""

    rank: int
    layers: dict[str, LowRankPair] = field(default_factory=dict)

    @property
    def target_layers(self) -> list[str]:
        return list(self.layers.keys())

    def parameters(self) -> list[torch.Tensor]:
        params: list[torch.Tensor] = []
        for pair in self.layers.values():
            params.extend((pair.down, pair.up))
        return params

    def requires_grad_(self, flag: bool = True) -> "AdapterParams":
        for tensor in self.parameters():
            tensor.requires_grad_(flag)
        return self

    def clone(self, detach: bool = True) -> "AdapterParams":
        layers = {}
        for name, pair in self.layers.items():
            down = pair.down.detach().clone() if detach else pair.down.clone()
            up = pair.up.detach().clone() if detach else pair.up.clone()
            layers[name] = LowRankPair(down, up)
        return AdapterParams(rank=self.rank, layers=layers)

    def to_(self, dtype: torch.dtype) -> "AdapterParams":
        for pair in self.layers.values():
            pair.down.data = pair.down.data.to(dtype)
            pair.up.data = pair.up.data.to(dtype)
        return self

    def iter_named(self) -> Iterator[tuple[str, LowRankPair]]:
        return iter(self.layers.items())

    def validate_against(self, targets: dict[str, tuple[int, int]]) -> None:
        """Check each layer id exists in ``targets`` and the factors match its dims."""
        for name, pair in self.layers.items():
            if name not in targets:
                raise ConfigurationError(f"unknown adapter target layer '{name}'")
            d_out, d_in = targets[name]
            if pair.down.shape != (self.rank, d_in) or pair.up.shape != (d_out, self.rank):
                raise ConfigurationError(
                    f"adapter factors for '{name}' have shapes {tuple(pair.down.shape)}/"
                    f"{tuple(pair.up.shape)}, expected ({self.rank}, {d_in})/({d_out}, {self.rank})"
                )


def _layer_seed(seed: int, layer_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{layer_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def init_adapters(
    backbone: "GeneratorBackbone",
    rank: int,
    target_layers: Iterable[str] | None = None,
    *,
    seed: int = 0,
    dtype: torch.dtype = torch.float32,
) -> AdapterParams:
    """Fresh adapters: random down-projections, zero up-projections.

    With zero up-projections every injected delta is exactly zero, so the
    adapted generator initially reproduces the frozen generator's output.
    Unknown layer ids raise ConfigurationError naming the offending id.
    """
    if rank < 1:
        raise ConfigurationError(f"adapter rank must be >= 1, got {rank}")
    targets = backbone.adapter_targets()
    if target_layers is None:
        target_layers = backbone.default_target_layers()
    layers: dict[str, LowRankPair] = {}
    for layer_id in target_layers:
        if layer_id not in targets:
            raise ConfigurationError(
                f"unknown adapter target layer '{layer_id}' for backbone "
                f"'{backbone.handle.backbone_id}'"
            )
        d_out, d_in = targets[layer_id]
        gen = torch.Generator().manual_seed(_layer_seed(seed, layer_id))
        down = torch.randn(rank, d_in, generator=gen, dtype=dtype) / float(rank)
        up = torch.zeros(d_out, rank, dtype=dtype)
        layers[layer_id] = LowRankPair(down.requires_grad_(True), up.requires_grad_(True))
    return AdapterParams(rank=rank, layers=layers)


def save_checkpoint(
    path,
    adapters: AdapterParams,
    *,
    backbone_id: str,
    config_hash: str,
    step_index: int,
) -> None:
    """Write adapters as a keyed array container plus a metadata record.

    Arrays are stored under "{layer_id}.down" / "{layer_id}.up"; the metadata
    (rank, backbone id, config hash, step index) rides along as a JSON string.
    """
    arrays: dict[str, np.ndarray] = {}
    for name, pair in adapters.iter_named():
        arrays[f"{name}.down"] = pair.down.detach().cpu().numpy()
        arrays[f"{name}.up"] = pair.up.detach().cpu().numpy()
    metadata = {
        "rank": adapters.rank,
        "backbone_id": backbone_id,
        "config_hash": config_hash,
        "step_index": step_index,
        "layers": adapters.target_layers,
    }
    arrays[CHECKPOINT_METADATA_KEY] = np.asarray(json.dumps(metadata, sort_keys=True))
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[AdapterParams, dict]:
    """Inverse of save_checkpoint; round-trips factor values exactly."""
    data = np.load(path, allow_pickle=False)
    metadata = json.loads(str(data[CHECKPOINT_METADATA_KEY]))
    layers: dict[str, LowRankPair] = {}
    layer_ids = metadata.get("layers")
    if layer_ids is None:
        layer_ids = sorted({key.rsplit(".", 1)[0] for key in data.files if key != CHECKPOINT_METADATA_KEY})
    for layer_id in layer_ids:
        down = torch.from_numpy(data[f"{layer_id}.down"])
        up = torch.from_numpy(data[f"{layer_id}.up"])
        layers[layer_id] = LowRankPair(down, up)
    adapters = AdapterParams(rank=int(metadata["rank"]), layers=layers)
    return adapters, metadata
