"""The reference subject: one image, a class label, optional derived mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import load_png


@dataclass
class ReferenceSubject:
    """Single subject image driving an optimization session.

    ``image`` is (H, W, 3) float32 in [0, 1]; ``mask``, when present, marks
    subject pixels in the image.
    """

    image: np.ndarray
    class_label: str
    mask: np.ndarray | None = None

    @property
    def simple_prompt(self) -> str:
        return f"image of a {self.class_label}"

    @classmethod
    def from_file(cls, path, class_label: str, mask_path=None) -> "ReferenceSubject":
        from .imaging import load_mask_png

        mask = load_mask_png(mask_path) if mask_path else None
        return cls(image=load_png(path), class_label=class_label, mask=mask)
