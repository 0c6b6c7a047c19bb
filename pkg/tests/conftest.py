import numpy as np
import pytest

from lut_retouch.core.config import ModelConfig, QuantSpec
from lut_retouch.core.imaging import ImageU8
from lut_retouch.core.lutgen import LutBundle
from lut_retouch.core.model import NETWORK_EVALUATIONS, TrainableModel


def random_image(rng: np.random.Generator, width: int, height: int) -> ImageU8:
    return ImageU8(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


def perturb(model: TrainableModel, rng: np.random.Generator, head_std: float = 0.1) -> TrainableModel:
    """Moves a freshly initialized model away from its near-identity start."""
    for branch in model.branches:
        for b in branch.biases:
            b[...] = rng.normal(0.0, 0.1, size=b.shape)
    model.head.weights[...] = rng.normal(0.0, head_std, size=model.head.weights.shape)
    model.basis[...] += rng.normal(0.0, 0.02, size=model.basis.shape)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return ModelConfig(
        channels=4,
        groups=2,
        group_length=2,
        basis_count=3,
        bins=3,
        layer_widths=(5, 6),
        train_resolution=8,
    )


@pytest.fixture
def small_config():
    return ModelConfig(
        channels=6,
        groups=3,
        group_length=2,
        basis_count=4,
        bins=5,
        layer_widths=(8, 8),
        train_resolution=16,
    )


@pytest.fixture
def small_quant():
    return QuantSpec(delta_s=2.0, offset=8.0)


@pytest.fixture
def tiny_model(tiny_config, rng):
    return perturb(TrainableModel.initialize(tiny_config, seed=7), rng)


@pytest.fixture
def small_model(small_config, rng):
    return perturb(TrainableModel.initialize(small_config, seed=11), rng)


@pytest.fixture
def identity_bundle():
    return LutBundle.identity(ModelConfig(), QuantSpec())


@pytest.fixture(autouse=True)
def reset_evaluation_counter():
    NETWORK_EVALUATIONS.reset()
    yield
    NETWORK_EVALUATIONS.reset()
