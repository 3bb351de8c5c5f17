"""Tests for scenario sampling, probing, echo synthesis, and gain profiles."""

import dataclasses

import numpy as np
import pytest

from squintmusic import (
    array_gain_profile,
    generate_probing,
    load_scenario,
    sample_scenario,
    save_scenario,
    simulate_echo,
    subcarrier_grid,
)

from conftest import desk_config, tiny_config


def _make_obs(cfg, snr_db=10.0, snr_g_db=10.0, seed=1, **scen_overrides):
    grid = subcarrier_grid(cfg)
    rng = np.random.default_rng(seed)
    scen = sample_scenario(cfg, snr_db, snr_g_db, rng)
    scen = dataclasses.replace(scen, **scen_overrides)
    probing = generate_probing(cfg, rng)
    return grid, scen, probing, simulate_echo(cfg, scen, probing, grid, rng)


class TestSampleScenario:
    def test_single_target_always_succeeds(self, rng):
        cfg = tiny_config(n_targets=1)
        scen = sample_scenario(cfg, 0.0, 10.0, rng)
        assert scen.theta.shape == (1,)
        assert abs(scen.theta[0]) <= 1.0

    def test_separation_constraint(self):
        cfg = desk_config(grid_size=2**14)
        for seed in range(20):
            scen = sample_scenario(cfg, 0.0, 10.0, np.random.default_rng(seed))
            assert np.min(np.diff(np.sort(scen.theta))) >= 2 * (2 / 2**14)

    def test_unsatisfiable_separation_raises(self, rng):
        # two grid steps at grid_size=2 is the whole domain
        cfg = tiny_config(grid_size=2)
        with pytest.raises(RuntimeError):
            sample_scenario(cfg, 0.0, 10.0, rng)

    def test_fixed_seed_reproducible(self):
        cfg = tiny_config()
        a = sample_scenario(cfg, 0.0, 10.0, np.random.default_rng(9))
        b = sample_scenario(cfg, 0.0, 10.0, np.random.default_rng(9))
        assert np.array_equal(a.theta, b.theta)
        assert np.array_equal(a.beta, b.beta)
        assert np.array_equal(a.gpm, b.gpm)
        assert np.array_equal(a.combiner.W, b.combiner.W)

    def test_noise_variance_follows_snr(self):
        cfg = tiny_config()
        scen = sample_scenario(cfg, 10.0, 10.0, np.random.default_rng(0))
        # reference power is 1 by construction of the tiny config
        assert scen.sigma2 == pytest.approx(0.1)

    def test_unit_magnitude_reflections(self, rng):
        scen = sample_scenario(tiny_config(), 0.0, 10.0, rng)
        assert np.allclose(np.abs(scen.beta), 1.0)


class TestGenerateProbing:
    def test_second_moment_contract(self):
        # (1/T) X X^H diagonal ~= tx_power / (M N) within 5%
        cfg = tiny_config(n_snapshots=10_000)
        x = generate_probing(cfg, np.random.default_rng(3))
        per_entry = cfg.tx_power / (cfg.n_subcarriers * cfg.n_antennas)
        cov = x[0] @ x[0].conj().T / cfg.n_snapshots
        assert np.allclose(np.diag(cov).real, per_entry, rtol=0.05)
        off = cov - np.diag(np.diag(cov))
        assert np.max(np.abs(off)) < 0.05 * per_entry

    def test_power_scaling_linear(self):
        cfg1 = tiny_config()
        cfg4 = tiny_config(tx_power=4 * cfg1.tx_power)
        x1 = generate_probing(cfg1, np.random.default_rng(7))
        x4 = generate_probing(cfg4, np.random.default_rng(7))
        assert np.allclose(x4, 2.0 * x1)

    def test_subcarriers_draw_distinct_values(self, rng):
        x = generate_probing(tiny_config(), rng)
        assert not np.array_equal(x[0], x[1])


class TestSimulateEcho:
    def test_noiseless_single_target_rank_one(self):
        cfg = tiny_config(n_targets=1, bandwidth=0.0)
        grid, scen, probing, obs = _make_obs(
            cfg, sigma2=0.0, gpm=np.ones((4, 16), dtype=complex)
        )
        for m in range(cfg.n_subcarriers):
            s = np.linalg.svd(obs.Y[m], compute_uv=False)
            assert s[1] < 1e-10 * s[0]

    def test_noiseless_rank_at_most_k(self):
        cfg = tiny_config()
        grid, scen, probing, obs = _make_obs(cfg, sigma2=0.0)
        k = cfg.n_targets
        for m in range(cfg.n_subcarriers):
            s = np.linalg.svd(obs.Y[m], compute_uv=False)
            assert s[k] < 1e-10 * s[0]

    def test_noise_only_power_level(self):
        # with silent targets, E[(1/T) ||Y||_F^2] ~= sigma2 * n_rf
        cfg = tiny_config(n_snapshots=4096)
        grid, scen, probing, obs = _make_obs(cfg, beta=np.zeros((4, 2), dtype=complex))
        for m in range(cfg.n_subcarriers):
            power = np.linalg.norm(obs.Y[m]) ** 2 / cfg.n_snapshots
            assert power == pytest.approx(scen.sigma2 * cfg.n_rf, rel=0.1)

    def test_noise_only_covariance_nearly_isotropic(self):
        # exact whitening needs the scaled-unitary combiner; random-phase
        # blocks only approximate it
        cfg = tiny_config(n_snapshots=8192)
        grid = subcarrier_grid(cfg)
        rng = np.random.default_rng(1)
        scen = sample_scenario(cfg, 10.0, 10.0, rng, combiner_kind="scaled-unitary")
        scen = dataclasses.replace(scen, beta=np.zeros((4, 2), dtype=complex))
        obs = simulate_echo(cfg, scen, generate_probing(cfg, rng), grid, rng)
        R = obs.Y[0] @ obs.Y[0].conj().T / cfg.n_snapshots
        w = np.linalg.eigvalsh(R)
        assert w[-1] / w[0] < 1.5

    def test_bit_identical_for_fixed_seed(self):
        cfg = tiny_config()
        _, _, _, obs1 = _make_obs(cfg, seed=5)
        _, _, _, obs2 = _make_obs(cfg, seed=5)
        assert np.array_equal(obs1.Y, obs2.Y)
        assert np.array_equal(obs1.X, obs2.X)

    def test_signal_linear_in_reflections(self):
        cfg = tiny_config()
        grid, scen, probing, obs1 = _make_obs(cfg, seed=11, sigma2=0.0)
        obs2 = simulate_echo(
            cfg,
            dataclasses.replace(scen, beta=3.0 * scen.beta),
            probing,
            grid,
            np.random.default_rng(0),
        )
        assert np.allclose(obs2.Y, 3.0 * obs1.Y)

    def test_dimension_mismatch_rejected(self, rng):
        cfg = tiny_config()
        grid = subcarrier_grid(cfg)
        scen = sample_scenario(cfg, 0.0, 10.0, rng)
        bad = generate_probing(tiny_config(n_antennas=8, n_rf=4, tx_power=1.0), rng)
        with pytest.raises(ValueError):
            simulate_echo(cfg, scen, bad, grid, rng)


class TestArrayGainProfile:
    def test_narrowband_peaks_at_target(self):
        cfg = tiny_config(bandwidth=0.0)
        grid = subcarrier_grid(cfg)
        directions = np.linspace(-1, 1, 4001)
        theta_t = 0.35
        gains = array_gain_profile(theta_t, cfg, grid, directions)
        nearest = np.argmin(np.abs(directions - theta_t))
        assert np.all(np.argmax(gains, axis=1) == nearest)

    def test_peaks_at_squinted_directions(self):
        # peak-location oracle: row m peaks within a grid step of
        # eta_m * theta_target, with gain ~1 there
        cfg = desk_config()
        grid = subcarrier_grid(cfg)
        directions = np.linspace(-1, 1, 2**13)
        theta_t = 0.5
        gains = array_gain_profile(theta_t, cfg, grid, directions)
        step = directions[1] - directions[0]
        for m in range(cfg.n_subcarriers):
            peak = directions[np.argmax(gains[m])]
            assert abs(peak - grid.eta[m] * theta_t) <= step
            assert gains[m].max() <= 1.0 + 1e-12
            assert gains[m].max() > 0.99

    def test_wideband_spread_for_sixty_degree_target(self):
        # full-scale subcarrier count: edge peaks several degrees apart
        cfg = desk_config(n_subcarriers=32)
        grid = subcarrier_grid(cfg)
        directions = np.linspace(-1, 1, 2**14)
        gains = array_gain_profile(np.sin(np.radians(60.0)), cfg, grid, directions)
        peaks_deg = np.degrees(np.arcsin(directions[np.argmax(gains, axis=1)]))
        spread = peaks_deg.max() - peaks_deg.min()
        assert 4.0 < spread < 12.0


class TestScenarioRoundTrip:
    def test_save_load_identity(self, rng, tmp_path):
        scen = sample_scenario(tiny_config(), 0.0, 10.0, rng)
        path = tmp_path / "scen.json"
        save_scenario(scen, path)
        back = load_scenario(path)
        assert np.array_equal(back.theta, scen.theta)
        assert np.array_equal(back.beta, scen.beta)
        assert np.array_equal(back.gpm, scen.gpm)
        assert np.array_equal(back.combiner.W, scen.combiner.W)
        assert back.combiner.kind == scen.combiner.kind
        assert back.sigma2 == scen.sigma2
        assert back.snr_db == scen.snr_db

    def test_schema_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"schema": "other"}')
        with pytest.raises(ValueError):
            load_scenario(path)
