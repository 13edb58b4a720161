import numpy as np
import pytest

from clora.continual import TrainConfig
from clora.data import SegDataset, SynthSpec, generate_arrays
from clora.nn import ModelSpec

TINY = ModelSpec(image_size=8, patch_size=4, embed_dim=8, num_heads=2, num_layers=1, mlp_ratio=2, num_classes=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    return TINY


@pytest.fixture(scope="session")
def small_data():
    """6-class synthetic set at 16 px, enough images for quick training runs."""
    spec = SynthSpec(num_classes=6, samples_per_class=6, image_size=16, seed=3)
    images, labels, train, val = generate_arrays(spec)
    return SegDataset.from_arrays(images, labels, train, val, spec.num_classes)


@pytest.fixture
def small_model_spec():
    return ModelSpec(image_size=16, patch_size=4, embed_dim=16, num_heads=2, num_layers=1, mlp_ratio=2)


@pytest.fixture
def quick_cfg():
    return TrainConfig(epochs=1, batch_size=4, rank=2)
