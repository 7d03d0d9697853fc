import numpy as np
import pytest
import torch

from subjecttune.backbones import ToyBackbone
from subjecttune.extractors import flatten_stub, projection_stub
from subjecttune.imaging import to_numpy_image
from subjecttune.subject import ReferenceSubject


@pytest.fixture
def toy8():
    return ToyBackbone(resolution=(8, 8))


@pytest.fixture
def toy8_f64():
    return ToyBackbone(resolution=(8, 8), dtype=torch.float64)


@pytest.fixture
def toy16():
    return ToyBackbone(resolution=(16, 16))


@pytest.fixture
def pixel_extractors8():
    """Pixel-alignment stub pair at the 8x8 toy resolution."""
    return (flatten_stub("t-flat-a", (8, 8)), flatten_stub("t-flat-b", (8, 8)))


@pytest.fixture
def projection_extractors8():
    return (
        projection_stub("t-proj-a", (8, 8), embedding_dim=16, seed=1),
        projection_stub("t-proj-b", (8, 8), embedding_dim=24, seed=2),
    )


@pytest.fixture
def toy_subject8(toy8):
    """A subject whose image is a toy render from an unrelated seed."""
    image = to_numpy_image(toy8.render("reference subject", seed=97))
    return ReferenceSubject(image=image, class_label="dog")


def random_image(shape=(8, 8), seed=0) -> np.ndarray:
    rng = np.random.RandomState(seed)
    return rng.uniform(0.0, 1.0, size=(shape[0], shape[1], 3)).astype(np.float32)
