import numpy as np
import pytest

from physe_inv.config_handler import RunConfig
from physe_inv.data import synthesize_series
from physe_inv.model import Architecture


@pytest.fixture
def series():
    return synthesize_series(80, seed=2)


@pytest.fixture
def tiny_config(tmp_path):
    """Small enough to train in a few seconds."""
    return RunConfig(
        synth_length=80,
        data_seed=2,
        epochs=2,
        batch_size=16,
        hidden_size=4,
        num_heads=2,
        histogram_bins=8,
        seed=3,
        out_dir=str(tmp_path / "runs"),
    )


@pytest.fixture
def tiny_arch():
    return Architecture(hidden_size=4, num_heads=2, num_layers=2, head_hidden=4)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
