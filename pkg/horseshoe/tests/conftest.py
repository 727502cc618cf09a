"""
Pytest Configuration and Fixtures

This file contains shared fixtures used across all tests.
Families, classes and suites are expensive to build, so the ones reused
by many tests are session-scoped.
"""

import os

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

# Set test environment variables BEFORE any imports read the settings
os.environ["ENVIRONMENT"] = "test"
os.environ.setdefault("OTEL_ENABLED", "false")

from horseshoe.core.run_config import BudgetConfig, FamilyConfig, RunConfig
from horseshoe.main import app
from horseshoe.services.family import make_family
from horseshoe.services.params import IntervalTree
from horseshoe.services.rclass import init_class
from horseshoe.services.suites import linear_fold_instance


@pytest.fixture
def client():
    """
    Create a test client for the FastAPI app.

    Why use it:
    - Fast: No network overhead
    - Easy: Simple request/response testing
    - Isolated: Each test gets a fresh client
    """
    with TestClient(app) as test_client:
        yield test_client


@pytest.fixture
def runner():
    """
    Click test runner for the CLI.

    Why use it:
    - Runs subcommands in-process and captures output and exit codes
    - No subprocesses or installed entrypoint needed
    """
    return CliRunner()


@pytest.fixture(scope="session")
def family():
    """The default two-symbol family (lambda_s = 0.284, eps0 = 0.02)."""
    return make_family(FamilyConfig())


@pytest.fixture(scope="session")
def third_family():
    """Pure affine family with lambda_s = 1/3: the middle-thirds Cantor set in each direction."""
    return make_family(FamilyConfig(lambda_s=1.0 / 3.0))


@pytest.fixture(scope="session")
def root_interval(family):
    """I0 = [eps0, 2 eps0]."""
    return IntervalTree(family.eps0, family.config.tau, 2).root


@pytest.fixture(scope="session")
def shallow_class(family, root_interval):
    """
    R(I0) truncated at n_max = 3.

    Why use it:
    - 30 pure elements: small enough for exhaustive checks
    - Shared read-only by the class tests
    """
    return init_class(family, root_interval, BudgetConfig(n_max=3))


@pytest.fixture(scope="session")
def coarse_class(family, root_interval):
    """R(I0) down to the 1e-3 width floor (pure words up to n = 5)."""
    return init_class(family, root_interval, BudgetConfig(width_floor=1e-3))


@pytest.fixture
def linear_instance():
    """Linear F0, F1 (lambda = 0.3) around the model fold at t = 1: corner displacement 0.4."""
    return linear_fold_instance()


@pytest.fixture
def fast_config():
    """
    Run configuration with small suites and a coarse class.

    Why use it:
    - Keeps verification runs within seconds
    - Same seed everywhere so reports are reproducible
    """
    return RunConfig(
        seed=7,
        suite_size=5,
        parabolic_suite_size=3,
        budgets=BudgetConfig(width_floor=1e-3),
        truncation={"m_trunc": 4},
    )
