import numpy as np
import pytest

from squintmusic import SystemConfig, subcarrier_grid


def desk_config(**overrides) -> SystemConfig:
    """Small wideband configuration used throughout the suite."""
    params = dict(
        f_c=300e9,
        bandwidth=30e9,
        n_subcarriers=8,
        n_antennas=32,
        n_rf=8,
        n_snapshots=128,
        n_targets=2,
        tx_power=float(8**2 * 32**2),  # reference power 1
        grid_size=2048,
        max_iters=20,
        conv_tol=1e-4,
    )
    params.update(overrides)
    return SystemConfig(**params)


def tiny_config(**overrides) -> SystemConfig:
    """Very small configuration for the cheapest checks."""
    params = dict(
        f_c=300e9,
        bandwidth=30e9,
        n_subcarriers=4,
        n_antennas=16,
        n_rf=4,
        n_snapshots=64,
        n_targets=2,
        tx_power=float(4**2 * 16**2),
        grid_size=1024,
    )
    params.update(overrides)
    return SystemConfig(**params)


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


@pytest.fixture
def desk_cfg():
    return desk_config()


@pytest.fixture
def desk_grid(desk_cfg):
    return subcarrier_grid(desk_cfg)
