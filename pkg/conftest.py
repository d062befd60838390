"""
Shared fixtures: the shipped model files and their properties
"""
import os
import sys

import pytest

ROOT = os.path.dirname(os.path.abspath(__file__))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from services import model_service, pctl_service  # noqa: E402
from utils.rng_utils import make_rng  # noqa: E402

DATA = os.path.join(ROOT, 'data')

COMPLETE_PROPERTY = 'P>=0.5 [ true U "complete" ]'
S1_PROPERTY = 'P<=0.5 [ true U "s1" ]'
GOAL_PROPERTY = 'P>=0.5 [ true U "goal" ]'


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full-precision acceptance runs')


def data_path(name):
    return os.path.join(DATA, name)


@pytest.fixture
def fig4():
    return model_service.load_model(data_path('fig4.json'))


@pytest.fixture
def fig3():
    return model_service.load_model(data_path('fig3.json'))


@pytest.fixture
def fig2():
    return model_service.load_model(data_path('fig2.json'))


@pytest.fixture
def fig_split():
    return model_service.load_model(data_path('fig_split.json'))


@pytest.fixture
def toy2():
    return model_service.load_model(data_path('toy2.json'))


@pytest.fixture
def complete_property():
    return pctl_service.parse_property(COMPLETE_PROPERTY)


@pytest.fixture
def s1_property():
    return pctl_service.parse_property(S1_PROPERTY)


@pytest.fixture
def goal_property():
    return pctl_service.parse_property(GOAL_PROPERTY)


@pytest.fixture
def rng():
    return make_rng(11, 99)
