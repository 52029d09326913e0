import numpy as np
import pytest

from backend.pixel_core import Image, synthesize_dataset
from backend.rng import derive_stream


def random_image(seed, size=32, purpose="test-image"):
    rng = derive_stream(seed, 0, 0, 0, purpose)
    return Image(rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8))


@pytest.fixture
def image_factory():
    return random_image


@pytest.fixture(scope="session")
def tiny_sets():
    """4 classes, 16x16: 32 train / 16 test samples."""
    train = synthesize_dataset(0, 4, 8, 16, "train")
    test = synthesize_dataset(1, 4, 4, 16, "test")
    return train, test


@pytest.fixture(scope="session")
def desk_sets():
    """The 200 / 100 synthetic set of the desk-scale runs."""
    train = synthesize_dataset(0, 4, 50, 32, "train")
    test = synthesize_dataset(1, 4, 25, 32, "test")
    return train, test
