import functools
import time

import numpy as np
import pytest

from sympal import find_critical_points
from sympal.systems import SYSTEMS

SEARCH = {"sys_a": None, "sys_b": None, "sys_c": None, "sys_d": {"grid_per_dim": 4}}


@functools.lru_cache(maxsize=None)
def system(name):
    return SYSTEMS[name]()


@functools.lru_cache(maxsize=None)
def _search(name, p):
    t0 = time.perf_counter()
    res = find_critical_points(system(name), p, SEARCH[name])
    return res, time.perf_counter() - t0


def orbits(name, p):
    """Cached finder output for a reference system."""
    return _search(name, p)[0]


def search_time(name, p):
    return _search(name, p)[1]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
