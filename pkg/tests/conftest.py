import numpy as np
import pytest

from elic import Codec, ModelConfig, WeightStore


@pytest.fixture(scope="session")
def small_config():
    """Cheap config exercising every code path (still > 128 latent chans)."""
    return ModelConfig(variant="elic-sm", num_filters=16, latent_channels=144)


@pytest.fixture(scope="session")
def small_store(small_config):
    return WeightStore.seeded(small_config, 7)


@pytest.fixture(scope="session")
def small_codec(small_store):
    return Codec(small_store)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_image(rng, h, w):
    return rng.random((3, h, w), dtype=np.float32)
