"""Subject-mask pipeline: class identification, detection, box-to-mask
segmentation, and mask algebra for the background-preservation loss."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, SubjectNotFoundError

Box = tuple[int, int, int, int]  # (x0, y0, x1, y1), half-open pixel bounds

DEFAULT_DETECTION_THRESHOLD = 0.3
DEFAULT_DILATION_PX = 3


class ZeroShotClassifier(Protocol):
    def classify(self, image: np.ndarray) -> str: ...


class ObjectDetector(Protocol):
    def detect(self, image: np.ndarray, class_label: str) -> list[tuple[Box, float]]: ...


class BoxSegmenter(Protocol):
    def segment(self, image: np.ndarray, box: Box) -> np.ndarray: ...


@dataclass
class SubjectMask:
    """Boolean subject mask with its provenance.

    ``source`` records which rung of the fallback ladder produced it; a
    ``box_fallback`` mask came from degrading segmentation to the raw box.
    """

    mask: np.ndarray
    class_label: str
    box: Box | None = None
    confidence: float = 1.0
    box_fallback: bool = False
    source: str = "segmenter"

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 2:
            raise ConfigurationError(f"mask must be 2-D, got shape {self.mask.shape}")

    @property
    def inverse(self) -> np.ndarray:
        return ~self.mask


def identify_class(image: np.ndarray, user_hint: str | None = None, classifier: ZeroShotClassifier | None = None) -> str:
    """User hint wins; otherwise ask the zero-shot classifier."""
    if user_hint:
        return user_hint
    if classifier is None:
        raise ConfigurationError(
            "no class hint given and no zero-shot classifier available; pass a class label"
        )
    return classifier.classify(image)


def detect_subject(
    image: np.ndarray,
    class_label: str,
    detector: ObjectDetector,
    threshold: float = DEFAULT_DETECTION_THRESHOLD,
) -> tuple[Box, float]:
    """Highest-confidence detection of the class, or SubjectNotFoundError."""
    if not class_label:
        raise ConfigurationError("class_label must be non-empty")
    candidates = [(box, conf) for box, conf in detector.detect(image, class_label) if conf >= threshold]
    if not candidates:
        raise SubjectNotFoundError(
            f"no '{class_label}' detection at or above confidence {threshold}"
        )
    return max(candidates, key=lambda item: item[1])


def box_to_mask(shape: tuple[int, int], box: Box) -> np.ndarray:
    x0, y0, x1, y1 = box
    mask = np.zeros(shape, dtype=bool)
    mask[y0:y1, x0:x1] = True
    return mask


def segment_box(
    image: np.ndarray,
    box: Box,
    segmenter: BoxSegmenter | None = None,
    class_label: str = "",
    confidence: float = 1.0,
) -> SubjectMask:
    """Segment within a detection box, degrading to the box itself on failure."""
    h, w = image.shape[:2]
    x0, y0, x1, y1 = box
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise ConfigurationError(f"box {box} outside image bounds {(w, h)}")
    if segmenter is not None:
        try:
            mask = np.asarray(segmenter.segment(image, box), dtype=bool)
            return SubjectMask(mask, class_label, box, confidence, source="segmenter")
        except Exception as exc:  # noqa: BLE001 - degrade, do not fail the pipeline
            warnings.warn(f"segmenter failed ({exc}); using box mask", stacklevel=2)
    else:
        warnings.warn("no segmenter available; using box mask", stacklevel=2)
    return SubjectMask(
        box_to_mask((h, w), box), class_label, box, confidence, box_fallback=True, source="box"
    )


def invert_mask(mask) -> np.ndarray:
    """Pixel-wise complement; accepts SubjectMask or a boolean array."""
    if isinstance(mask, SubjectMask):
        return mask.inverse
    return ~np.asarray(mask, dtype=bool)


def dilate_mask(mask: np.ndarray, pixels: int = DEFAULT_DILATION_PX) -> np.ndarray:
    """Grow the subject region so the background loss spares boundary pixels."""
    if pixels <= 0:
        return np.asarray(mask, dtype=bool)
    return ndimage.binary_dilation(np.asarray(mask, dtype=bool), iterations=pixels)


def build_subject_mask(
    image: np.ndarray,
    class_label: str,
    *,
    detector: ObjectDetector | None = None,
    segmenter: BoxSegmenter | None = None,
    user_mask: np.ndarray | None = None,
    threshold: float = DEFAULT_DETECTION_THRESHOLD,
) -> SubjectMask:
    """Fallback ladder: user mask > detector+segmenter > box > full-foreground.

    The full-foreground rung leaves no background pixels, which disables the
    background loss; a warning explains the degradation.
    """
    h, w = image.shape[:2]
    if user_mask is not None:
        user_mask = np.asarray(user_mask, dtype=bool)
        if user_mask.shape != (h, w):
            raise ConfigurationError(
                f"user mask shape {user_mask.shape} does not match image {(h, w)}"
            )
        return SubjectMask(user_mask, class_label, source="user")
    if detector is not None:
        try:
            box, confidence = detect_subject(image, class_label, detector, threshold)
            return segment_box(image, box, segmenter, class_label, confidence)
        except SubjectNotFoundError as exc:
            warnings.warn(f"{exc}; falling back to full-foreground mask", stacklevel=2)
    else:
        warnings.warn(
            "no detector available; full-foreground mask disables background preservation",
            stacklevel=2,
        )
    return SubjectMask(np.ones((h, w), dtype=bool), class_label, source="full", confidence=0.0)
