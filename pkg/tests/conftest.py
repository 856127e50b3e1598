"""Shared fixtures: the kinetic benchmark and small helpers."""

import numpy as np
import pytest
from hypothesis import settings

from pertou import (GaussianBump, MCParams, OperatorSpec, PerturbationSchedule, SourceFunction,
                    check_kalman)

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("default")

KINETIC_A = [[0.0, 0.0], [1.0, 0.0]]
KINETIC_B = [[1.0, 0.0], [0.0, 0.0]]


@pytest.fixture
def kinetic():
    spec = OperatorSpec(KINETIC_A, KINETIC_B, 2.0, None, 1.0)
    return spec, check_kalman(spec)


@pytest.fixture
def bump_source():
    return SourceFunction.constant_in_time([GaussianBump(1.0, [0.0, 0.0], [0.25, 0.25])], 1.0)


@pytest.fixture
def switching_schedule():
    mats = [np.diag([0.5, 0.0]), np.diag([0.0, 0.5]), [[0.4, 0.2], [0.2, 0.3]]]
    return PerturbationSchedule.alternating(mats, 4, 1.0)


def small_mc(samples=4000, seed=1, **kw):
    return MCParams(samples=samples, seed=seed, **kw)
