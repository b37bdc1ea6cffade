from pathlib import Path

import numpy as np
import pytest

from core.laglad import make_process
from core.probspace import build_space
from services import load_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / 'scenarios'


def predictable_process(space, block, at):
    """Process whose pre channel on each sibling block is block[parent]."""
    at = np.asarray(at, dtype=float)
    pre = space.broadcast_parent(np.asarray(block, dtype=float))
    pre[space.root] = at[space.root]
    return make_process(space, pre, at)


@pytest.fixture
def predictable():
    return predictable_process


@pytest.fixture
def binomial1():
    return build_space({'kind': 'binomial', 'steps': 1, 'dt': 1.0})


@pytest.fixture
def binomial2():
    return build_space({'kind': 'binomial', 'steps': 2, 'dt': 1.0})


@pytest.fixture
def trinomial1():
    return build_space({
        'kind': 'trinomial', 'steps': 1, 'dt': 1.0,
        'probabilities': [1 / 3, 1 / 3, 1 / 3], 'noise': [1.0, 0.0, -1.0],
    })


@pytest.fixture
def worked_tree():
    """The two-step tree where splitting beats every ordinary stopping time (5 vs 1.25)."""
    scenario = load_scenario(SCENARIO_DIR / 'worked_tree.json')
    return scenario.space, scenario.xi


@pytest.fixture
def scenario_path():
    def _path(name):
        return SCENARIO_DIR / f"{name}.json"
    return _path
