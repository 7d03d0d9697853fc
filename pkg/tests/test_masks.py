import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subjecttune.errors import ConfigurationError, SubjectNotFoundError
from subjecttune.imaging import load_mask_png, save_mask_png
from subjecttune.masks import (
    SubjectMask,
    box_to_mask,
    build_subject_mask,
    detect_subject,
    dilate_mask,
    identify_class,
    invert_mask,
    segment_box,
)

from conftest import random_image


class StubClassifier:
    def __init__(self, label):
        self.label = label

    def classify(self, image):
        return self.label


class StubDetector:
    def __init__(self, candidates):
        self.candidates = candidates

    def detect(self, image, class_label):
        return self.candidates


class DiscSegmenter:
    """Ground-truth mask: a disc centered in the box."""

    def segment(self, image, box):
        h, w = image.shape[:2]
        x0, y0, x1, y1 = box
        cy, cx = (y0 + y1) / 2, (x0 + x1) / 2
        radius = min(x1 - x0, y1 - y0) / 2
        yy, xx = np.mgrid[0:h, 0:w]
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2


class FailingSegmenter:
    def segment(self, image, box):
        raise RuntimeError("weights missing")


class TestIdentifyClass:
    def test_hint_passthrough(self):
        assert identify_class(random_image(), "cat") == "cat"

    def test_stub_classifier(self):
        assert identify_class(random_image(), None, StubClassifier("dog")) == "dog"

    def test_no_hint_no_classifier(self):
        with pytest.raises(ConfigurationError, match="class"):
            identify_class(random_image(), None, None)


class TestDetect:
    def test_stub_returns_ground_truth_box(self):
        detector = StubDetector([((2, 3, 6, 7), 0.9)])
        box, conf = detect_subject(random_image(), "dog", detector)
        assert box == (2, 3, 6, 7)
        assert conf == pytest.approx(0.9)

    def test_below_threshold_not_found(self):
        detector = StubDetector([((0, 0, 4, 4), 0.1)])
        with pytest.raises(SubjectNotFoundError):
            detect_subject(random_image(), "dog", detector, threshold=0.3)

    def test_argmax_between_candidates(self):
        detector = StubDetector([((0, 0, 4, 4), 0.5), ((1, 1, 5, 5), 0.8)])
        box, conf = detect_subject(random_image(), "dog", detector)
        assert box == (1, 1, 5, 5)
        assert conf == pytest.approx(0.8)

    def test_empty_label_rejected(self):
        with pytest.raises(ConfigurationError):
            detect_subject(random_image(), "", StubDetector([]))


class TestSegment:
    def test_disc_segmenter_iou_one(self):
        image = random_image((16, 16))
        segmenter = DiscSegmenter()
        subject = segment_box(image, (4, 4, 12, 12), segmenter, "ball")
        expected = segmenter.segment(image, (4, 4, 12, 12))
        intersection = (subject.mask & expected).sum()
        union = (subject.mask | expected).sum()
        assert intersection == union  # IoU exactly 1
        assert subject.source == "segmenter"
        assert not subject.box_fallback

    def test_one_pixel_box(self):
        image = random_image((8, 8))
        with pytest.warns(UserWarning):
            subject = segment_box(image, (3, 4, 4, 5), segmenter=None, class_label="dot")
        assert subject.mask.sum() == 1
        assert subject.mask[4, 3]

    def test_unavailable_segmenter_degrades_to_box(self):
        image = random_image((8, 8))
        with pytest.warns(UserWarning, match="box"):
            subject = segment_box(image, (1, 2, 5, 6), FailingSegmenter(), "dog")
        assert subject.box_fallback
        assert subject.source == "box"
        assert np.array_equal(subject.mask, box_to_mask((8, 8), (1, 2, 5, 6)))

    def test_box_outside_bounds_rejected(self):
        with pytest.raises(ConfigurationError):
            segment_box(random_image((8, 8)), (0, 0, 9, 4))


class TestMaskAlgebra:
    def test_all_true_inverts_to_all_false(self):
        assert not invert_mask(np.ones((4, 4), bool)).any()

    def test_checkerboard_complement(self):
        board = np.indices((6, 6)).sum(axis=0) % 2 == 0
        assert np.array_equal(invert_mask(board), ~board)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_complementarity_and_involution(self, seed):
        rng = np.random.RandomState(seed)
        mask = rng.rand(8, 8) > 0.5
        inverse = invert_mask(mask)
        assert not (mask & inverse).any()
        assert (mask | inverse).all()
        assert np.array_equal(invert_mask(inverse), mask)

    def test_subject_mask_inverse_property(self):
        mask = SubjectMask(np.eye(5, dtype=bool), "x")
        assert np.array_equal(mask.inverse, ~np.eye(5, dtype=bool))

    def test_dilation_grows_mask(self):
        mask = np.zeros((9, 9), bool)
        mask[4, 4] = True
        grown = dilate_mask(mask, 3)
        assert grown.sum() > 1
        assert grown[4, 7] and grown[7, 4]
        assert not grown[0, 0]
        assert np.array_equal(dilate_mask(mask, 0), mask)


class TestFallbackLadder:
    def test_user_mask_wins(self):
        image = random_image((8, 8))
        user = np.zeros((8, 8), bool)
        user[2:4, 2:4] = True
        subject = build_subject_mask(
            image, "dog", detector=StubDetector([((0, 0, 8, 8), 0.9)]), user_mask=user
        )
        assert subject.source == "user"
        assert np.array_equal(subject.mask, user)

    def test_detector_plus_segmenter(self):
        image = random_image((16, 16))
        subject = build_subject_mask(
            image,
            "ball",
            detector=StubDetector([((4, 4, 12, 12), 0.8)]),
            segmenter=DiscSegmenter(),
        )
        assert subject.source == "segmenter"
        assert subject.confidence == pytest.approx(0.8)

    def test_no_detection_degrades_to_full_foreground(self):
        image = random_image((8, 8))
        with pytest.warns(UserWarning, match="full-foreground"):
            subject = build_subject_mask(
                image, "dog", detector=StubDetector([((0, 0, 2, 2), 0.05)])
            )
        assert subject.source == "full"
        assert subject.mask.all()
        assert not subject.inverse.any()  # background loss sees nothing

    def test_no_backends_full_foreground(self):
        with pytest.warns(UserWarning):
            subject = build_subject_mask(random_image((8, 8)), "dog")
        assert subject.source == "full"

    def test_wrong_user_mask_shape_rejected(self):
        with pytest.raises(ConfigurationError):
            build_subject_mask(random_image((8, 8)), "dog", user_mask=np.ones((4, 4), bool))


class TestMaskIO:
    def test_png_round_trip(self, tmp_path):
        rng = np.random.RandomState(7)
        mask = rng.rand(12, 10) > 0.5
        path = tmp_path / "mask.png"
        save_mask_png(path, mask)
        assert np.array_equal(load_mask_png(path), mask)
