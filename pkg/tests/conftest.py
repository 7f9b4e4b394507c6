"""Shared fixtures for the test suite.

Unit tests use small grids and tiny networks so the whole suite outside
the acceptance module stays fast.  Acceptance tests build their own
full-scale fixtures and live in test_acceptance.py.
"""

import numpy as np
import pytest

from semg.mission import EnergyModel, MeasurementSet
from semg.rf_env import EnvConfig, build_environment, ground_truth_map


@pytest.fixture
def tiny_cfg():
    return EnvConfig(width_cells=8, height_cells=8, n_transmitters=2,
                     shadowing_sigma_db=2.0, shadowing_corr_cells=1.5, seed=7)


@pytest.fixture
def tiny_env(tiny_cfg):
    return build_environment(tiny_cfg)


@pytest.fixture
def tiny_truth(tiny_env):
    return ground_truth_map(tiny_env)


@pytest.fixture
def default_energy():
    return EnergyModel()


def make_measurements(truth, cells, noise=None):
    """MeasurementSet visiting `cells` (list of (x, y)) against a truth map.

    noise is an optional sequence of per-sample dB offsets in visit order.
    """
    h, w = truth.values.shape
    mask = np.zeros((h, w), dtype=bool)
    values = np.full((h, w), np.nan)
    order = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    for k, (x, y) in enumerate(order):
        mask[y, x] = True
        values[y, x] = truth.values[y, x] + (0.0 if noise is None else noise[k])
    return MeasurementSet(mask=mask, values=values, order=order)
