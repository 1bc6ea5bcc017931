"""Shared parameter factories for the test suite.

"Floor" thetas make an arc's hazard negligible (integrated hazard below
1e-8 over 120 years) without violating the strict-interior bound checks,
so single-arc chains have exact analytic solutions to compare against.
"""

import numpy as np
import pytest

from pipechain import ChainParams, HazardFamily

FAMILIES = list(HazardFamily)

# wide bounds admitting both the floor and the active values below
WIDE_BOUNDS = {
    HazardFamily.EXPONENTIAL: ((1e-15, 2.0),),
    HazardFamily.GOMPERTZ: ((1e-15, 1.0), (1e-5, 0.5)),
    HazardFamily.WEIBULL: ((1.0, 1e12), (0.2, 10.0)),
    HazardFamily.LOG_LOGISTIC: ((1.0, 1e12), (0.2, 10.0)),
    HazardFamily.LOG_NORMAL: ((0.0, 50.0), (0.05, 3.0)),
}

FLOOR_THETA = {
    HazardFamily.EXPONENTIAL: (1e-12,),
    HazardFamily.GOMPERTZ: (1e-12, 1e-3),
    HazardFamily.WEIBULL: (1e10, 1.0),
    HazardFamily.LOG_LOGISTIC: (1e10, 1.0),
    HazardFamily.LOG_NORMAL: (30.0, 0.5),
}

ACTIVE_THETA = {
    HazardFamily.EXPONENTIAL: (0.1,),
    HazardFamily.GOMPERTZ: (0.01, 0.05),
    HazardFamily.WEIBULL: (40.0, 2.5),
    HazardFamily.LOG_LOGISTIC: (35.0, 3.0),
    HazardFamily.LOG_NORMAL: (3.8, 0.6),
}

# sampling ranges that keep the ODE mildly stiff at worst
SANE_RANGES = {
    HazardFamily.EXPONENTIAL: ((1e-3, 0.3),),
    HazardFamily.GOMPERTZ: ((1e-3, 0.1), (0.01, 0.08)),
    HazardFamily.WEIBULL: ((10.0, 150.0), (0.8, 4.0)),
    HazardFamily.LOG_LOGISTIC: ((10.0, 150.0), (0.8, 4.0)),
    HazardFamily.LOG_NORMAL: ((2.5, 5.0), (0.3, 1.5)),
}

S0_PRISTINE = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])


def floor_thetas(family):
    return np.tile(FLOOR_THETA[family], (9, 1))[:, : family.n_params]


def single_arc_params(family, arc_index=0, theta=None, s0=None):
    """All arcs floored except one; defaults to arc 1->2 active."""
    thetas = floor_thetas(family)
    thetas[arc_index] = theta if theta is not None else ACTIVE_THETA[family]
    return ChainParams(
        family, thetas, S0_PRISTINE if s0 is None else s0, WIDE_BOUNDS[family]
    )


def random_params(family, rng, s0=None):
    ranges = SANE_RANGES[family]
    thetas = np.column_stack([rng.uniform(lo, hi, size=9) for lo, hi in ranges])
    if s0 is None:
        s0 = rng.dirichlet(np.ones(6))
    return ChainParams(family, thetas, s0, WIDE_BOUNDS[family])


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)
