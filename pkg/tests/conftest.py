from pathlib import Path

import numpy as np
import pytest

from muscleseg.volume import BinaryMask, ProbabilityVolume, ScalarVolume, VolumeGeometry

FIXTURES = Path(__file__).parent / "fixtures"


def make_geometry(dims, spacing=(1.0, 1.0, 1.0)):
    return VolumeGeometry(tuple(dims), tuple(spacing))


def scalar(data, spacing=(1.0, 1.0, 1.0)):
    data = np.asarray(data, dtype=np.float64)
    return ScalarVolume(make_geometry(data.shape, spacing), data)


def mask(data, spacing=(1.0, 1.0, 1.0)):
    data = np.asarray(data, dtype=np.uint8)
    return BinaryMask(make_geometry(data.shape, spacing), data)


def prob(data, spacing=(1.0, 1.0, 1.0)):
    data = np.asarray(data, dtype=np.float64)
    return ProbabilityVolume(make_geometry(data.shape, spacing), data)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixtures_dir():
    return FIXTURES
