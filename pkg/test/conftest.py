"""
Shared pytest setup: import path, slow marker and global state resets
Run from the repository root: pytest test
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "kdv-lri"))

from app.services.error_management import error_handler  # noqa: E402
from app.services.performance_manager import performance_manager  # noqa: E402
from app.services.spectral_core import from_modes, grid_new  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance study")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def reset_global_state():
    """Reference cache and error history are process-wide"""
    performance_manager.cache.clear()
    performance_manager.metrics.clear()
    error_handler.clear()
    yield
    performance_manager.cache.clear()
    error_handler.clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_cos():
    """2 cos x on K = 4"""
    return from_modes(grid_new(4), {1: 1.0})


@pytest.fixture
def smooth_field():
    """Small-amplitude trigonometric polynomial"""
    grid = grid_new(16)
    return from_modes(grid, {1: 0.1, 2: 0.05 - 0.02j, 3: 0.02j, 5: 0.01})
