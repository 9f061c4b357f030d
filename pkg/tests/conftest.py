"""Shared fixtures: small path bundles reused across test modules."""

import pytest

from mcduality import HestonParams, RandomStream, TimeGrid, simulate_heston_market

BASE_PARAMS = HestonParams(mu=0.5, kappa=2.0, theta=1.0, sigma=0.7, v0=1.0)
SMALL_GRID = TimeGrid(horizon=1.0, steps=64)
SMALL_PATHS = 4000
SMALL_SEED = 11


@pytest.fixture(scope="session")
def bundle_rho0():
    return simulate_heston_market(BASE_PARAMS, SMALL_GRID, SMALL_PATHS,
                                  RandomStream(SMALL_SEED))


@pytest.fixture(scope="session")
def bundle_rho03():
    return simulate_heston_market(BASE_PARAMS.with_rho(0.3), SMALL_GRID,
                                  SMALL_PATHS, RandomStream(SMALL_SEED))
