# tests/conftest.py
"""
Pytest configuration and shared fixtures.
"""
import pytest

from msmbayes.logger import setup_logging
from msmbayes.reference import REFERENCE_AGE_CENTER, reference_parameters
from msmbayes.schemas import ChainConfig, ModelFamily, QuadratureConfig, SimulationSpec
from msmbayes.simulator import simulate_cohort


@pytest.fixture(scope="session", autouse=True)
def quiet_logging():
    """JSON logs on stderr, warnings and above only."""
    setup_logging("WARNING", json_logs=True)


@pytest.fixture(scope="session")
def id_params():
    return reference_parameters(ModelFamily.ILLNESS_DEATH)


@pytest.fixture(scope="session")
def cr_params():
    return reference_parameters(ModelFamily.COMPETING_RISKS)


@pytest.fixture(scope="session")
def quadrature():
    return QuadratureConfig()


@pytest.fixture(scope="session")
def id_cohort(id_params):
    """2000 simulated illness-death subjects, centered at the reference age."""
    spec = SimulationSpec(
        family=ModelFamily.ILLNESS_DEATH,
        true_params=id_params,
        n_subjects=2000,
        age_center=REFERENCE_AGE_CENTER,
        seed=11,
    )
    return simulate_cohort(spec)


@pytest.fixture
def short_chain():
    """Small but adapting chain configuration for fast sampler tests."""
    return ChainConfig(n_chains=2, n_iterations=1200, n_burnin=600, seed=5)


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "integration: mark test as an integration test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow running"
    )
