import numpy as np
import pytest

from egogest import kinematics as kin
from egogest import training as tr


@pytest.fixture(scope="session")
def small_dataset():
    """24 sequences, 3 actors, 4 gesture classes at 20 fps."""
    actors = kin.default_actors()[:3]
    return kin.synthesize_dataset(
        actors=actors, frame_rate=20, seed=42, classes=kin.NON_NEUTRAL[:4],
        sessions_per_actor=8,
    )


@pytest.fixture(scope="session")
def small_config():
    return tr.TrainConfig(seed=11, epochs=30, hidden=64)


@pytest.fixture(scope="session")
def trained_small(small_dataset, small_config):
    """One converged small model shared by tests that need real predictions."""
    return tr.train(small_dataset, small_config)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
