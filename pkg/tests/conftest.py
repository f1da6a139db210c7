import numpy as np
import pytest

from hapsim.model import ModelConfig, Normalization, XhapModel
from hapsim.traces import Activity, generate_trace


@pytest.fixture(scope="session")
def tap_trace():
    return generate_trace(Activity.DYN_TAP, 25.0, seed=101)


@pytest.fixture(scope="session")
def tap_trace_val():
    return generate_trace(Activity.DYN_TAP, 25.0, seed=102)


@pytest.fixture(scope="session")
def rigid_tap_trace():
    return generate_trace(Activity.RB_TAP, 25.0, seed=103)


@pytest.fixture()
def small_model():
    """Untrained toy model with non-identity normalization."""
    cfg = ModelConfig(history_len=8, latent=16, heads=4, hidden=8)
    m = XhapModel.initialize(cfg, seed=5)
    m.norm = Normalization(
        force_mean=np.array([0.1, -0.2, 0.5]),
        force_std=np.array([1.5, 0.7, 2.0]),
        op_mean=np.linspace(-0.3, 0.3, 6),
        op_std=np.linspace(0.5, 2.5, 6),
    )
    return m
