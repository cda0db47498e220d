import numpy as np
import pytest

from hetmf import build_random_m, build_two_choice, cache_config, lb_config, zipf_popularities


@pytest.fixture(scope="session")
def fig1_cfg():
    """Four objects, Zipf(0.8) popularities, one list of size two."""
    return cache_config(zipf_popularities(4, 0.8), [2])


@pytest.fixture(scope="session")
def fig1_model(fig1_cfg):
    return build_random_m(fig1_cfg)


@pytest.fixture(scope="session")
def cache8_cfg():
    """Eight objects, Zipf(0.5), three lists of size two."""
    return cache_config(zipf_popularities(8, 0.5), [2, 2, 2])


@pytest.fixture(scope="session")
def cache8_model(cache8_cfg):
    return build_random_m(cache8_cfg)


@pytest.fixture(scope="session")
def lb_small():
    """Tiny two-choice instance for exact cross-checks."""
    return lb_config([2.0, 0.5, 1.2, 1.3], 1.0, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
