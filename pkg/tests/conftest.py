import numpy as np
import pytest

from dpdloc.array import load_preset, make_direction_grid


@pytest.fixture(scope="session")
def nao12():
    return load_preset("nao12")


@pytest.fixture(scope="session")
def em32():
    return load_preset("eigenmike32")


@pytest.fixture(scope="session")
def grid2():
    return make_direction_grid(2.0)


@pytest.fixture(scope="session")
def grid6():
    return make_direction_grid(6.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_directions(rng, n):
    """Uniform on the sphere, as (azimuth, elevation) arrays."""
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.mod(np.arctan2(v[:, 1], v[:, 0]), 2 * np.pi), np.arcsin(v[:, 2])


def random_psd(rng, q, rank=None):
    rank = rank or q
    a = rng.standard_normal((q, rank)) + 1j * rng.standard_normal((q, rank))
    return a @ a.conj().T
