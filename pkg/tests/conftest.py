import numpy as np
import pytest

from flocpriv.panels import JointDistribution
from flocpriv.simhash import SimHashConfig
from flocpriv.synth import SynthConfig, generate_population


@pytest.fixture(scope="session")
def sim_config():
    return SimHashConfig()


@pytest.fixture(scope="session")
def small_population():
    """400 machines x 4 weeks; shared across read-only tests."""
    return generate_population(SynthConfig(n_machines=400, n_weeks=4, seed=5))


@pytest.fixture(scope="session")
def small_table(small_population):
    return small_population.table


@pytest.fixture(scope="session")
def default_joint():
    return JointDistribution.default()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
