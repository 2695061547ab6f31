import numpy as np
import pytest

from cookspace import (
    EncoderDims,
    EncoderParams,
    SynthConfig,
    generate_synthetic,
    make_splits,
)


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small labeled dataset with all three splits populated."""
    cfg = SynthConfig(
        n_classes=4,
        instances_per_class=10,
        tokens_per_class=5,
        feature_dim=16,
        seed=3,
    )
    return make_splits(generate_synthetic(cfg), (0.6, 0.2, 0.2), seed=3)


@pytest.fixture(scope="session")
def tiny_dims(tiny_dataset):
    return EncoderDims(
        word_dim=8,
        hidden_dim=8,
        image_dim=tiny_dataset.feature_dim,
        embed_dim=8,
        vocab_size=len(tiny_dataset.vocab),
    )


@pytest.fixture()
def tiny_params(tiny_dims):
    return EncoderParams.initialize(tiny_dims, seed=5)


@pytest.fixture()
def rng():
    return np.random.default_rng(123)
