import os
import random
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src"))

from chern_weil.core.base.context import ComputationContext  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIOS = os.path.join(ROOT, "scenarios")


def pytest_addoption(parser):
    parser.addoption("--long", action="store_true", default=False, help="run long computations")


def pytest_configure(config):
    config.addinivalue_line("markers", "long: computation taking minutes")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--long"):
        return
    skip = pytest.mark.skip(reason="needs --long")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


@pytest.fixture
def context():
    return ComputationContext.seeded(0)


def scenario_path(name: str) -> str:
    return os.path.join(SCENARIOS, name)


def read_scenario(name: str) -> str:
    with open(scenario_path(name), 'r', encoding='utf-8') as f:
        return f.read()
