import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from l0attack import data, models

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def synthetic():
    return data.gen_synthetic(n_per_class=200, length=64, bump_width=8, noise_std=0.1, seed=1)


@pytest.fixture(scope="session")
def trained_mlp(synthetic):
    X, y = synthetic.train_arrays
    model = models.build("mlp", 64, 2, seed=1)
    return models.train(model, X, y, models.TrainConfig(epochs=50, seed=1)).model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
