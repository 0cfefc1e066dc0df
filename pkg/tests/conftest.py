import numpy as np
import pytest

from obsrl.model import example_two_state
from obsrl.synthesis import synthesize
from obsrl import sim


@pytest.fixture(scope="session")
def model():
    m = example_two_state()
    return m.with_bounds(m.derive_bounds())


@pytest.fixture(scope="session")
def gains(model):
    return synthesize(model, alpha=2.0, u_vertices=[np.zeros(1)])


@pytest.fixture(scope="session")
def full_trace(gains):
    """The 50 s benchmark run shared by the acceptance suite (expensive)."""
    cfg = sim.reproduce_example_config(gains, h=1e-3, T=50.0)
    return sim.run(cfg)
