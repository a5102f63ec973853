"""Shared fixtures for the planner test suite"""

import pytest

from dynamics import ModelId, make_model
from planner_config import PlannerConfig, PrimitiveConfig
from primitives import generate_primitives


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the seeded end-to-end planner experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def unicycle():
    return make_model(ModelId.UNICYCLE_1ST)


@pytest.fixture
def di2d():
    return make_model(ModelId.DOUBLE_INTEGRATOR_2D)


@pytest.fixture
def di3d():
    return make_model(ModelId.DOUBLE_INTEGRATOR_3D)


@pytest.fixture
def car():
    return make_model(ModelId.CAR_WITH_TRAILER)


@pytest.fixture(scope="session")
def unicycle_set():
    """Small unicycle set shared by the planner tests"""
    return generate_primitives(make_model(ModelId.UNICYCLE_1ST), 80, 10, seed=0)


@pytest.fixture(scope="session")
def di2d_set():
    return generate_primitives(make_model(ModelId.DOUBLE_INTEGRATOR_2D), 60, 10, seed=0)


@pytest.fixture
def fast_config():
    """Settings that keep single-scenario searches in the sub-second range"""
    return PlannerConfig(
        timelimit=20.0,
        est_budget=300,
        grid_resolution=0.25,
        primitives=PrimitiveConfig(count=80, horizon=10),
    )
