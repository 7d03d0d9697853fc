"""Session directory layout: frame logs, thumbnails, checkpoints, metadata.

One directory per session: zero-padded ``frame_{i:04d}.png`` images, a
line-delimited ``losses.jsonl`` with per-step loss records, ``thumbs/`` for
stream-sized previews, plus mask/reconstruction/checkpoint/metadata files.
Loss records deliberately exclude wall-clock timing so reruns of the same
session are byte-identical.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .adapters import AdapterParams, save_checkpoint
from .engine import GeneratedFrame, StopDecision
from .imaging import make_thumbnail, save_mask_png, save_png

LOSS_LOG = "losses.jsonl"
METADATA = "metadata.json"
CHECKPOINT = "adapter.npz"
MASK_FILE = "mask.png"
RECON_FILE = "reconstruction.png"


def frame_filename(index: int) -> str:
    return f"frame_{index:04d}.png"


def thumb_filename(index: int) -> str:
    return f"thumb_{index:04d}.png"


def slugify(text: str, max_len: int = 60) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")
    return slug[:max_len] or "untitled"


class SessionWriter:
    """Persists frames and session records as they are produced."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        (self.directory / "thumbs").mkdir(exist_ok=True)
        self._loss_log = self.directory / LOSS_LOG

    def write_frame(self, frame: GeneratedFrame) -> None:
        if frame.image is not None:
            save_png(self.directory / frame_filename(frame.step_index), frame.image)
            save_png(
                self.directory / "thumbs" / thumb_filename(frame.step_index),
                make_thumbnail(frame.image),
            )
        record = {
            "step": frame.step_index,
            "loss_total": frame.loss_total,
            "components": frame.loss_components,
        }
        with open(self._loss_log, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def write_mask(self, mask: np.ndarray) -> None:
        save_mask_png(self.directory / MASK_FILE, mask)

    def write_reconstruction(self, image: np.ndarray) -> None:
        save_png(self.directory / RECON_FILE, image)

    def write_render(self, prompt: str, image: np.ndarray) -> Path:
        renders = self.directory / "renders"
        renders.mkdir(exist_ok=True)
        path = renders / f"{slugify(prompt)}.png"
        save_png(path, image)
        return path

    def write_checkpoint(
        self, adapters: AdapterParams, *, backbone_id: str, config_hash: str, step_index: int
    ) -> Path:
        path = self.directory / CHECKPOINT
        save_checkpoint(
            path, adapters, backbone_id=backbone_id, config_hash=config_hash, step_index=step_index
        )
        return path

    def write_metadata(self, metadata: dict) -> None:
        with open(self.directory / METADATA, "w", encoding="utf-8") as fh:
            json.dump(metadata, fh, sort_keys=True, indent=2)
            fh.write("\n")


def decision_to_dict(decision: StopDecision) -> dict:
    return {"reason": decision.reason.value, "stop_index": decision.stop_index}


def read_loss_records(directory) -> list[dict]:
    path = Path(directory) / LOSS_LOG
    if not path.exists():
        return []
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def read_metadata(directory) -> dict | None:
    path = Path(directory) / METADATA
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def list_sessions(root) -> list[Path]:
    root = Path(root)
    if not root.exists():
        return []
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / METADATA).exists())
