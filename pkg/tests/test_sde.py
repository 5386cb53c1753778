import numpy as np
import pytest

from switchem import (
    ConfigError,
    SimulationConfig,
    Theta,
    euler_path,
    self_convergence_test,
    simulate_path,
    validate_generator,
)

BENCH_Q = [[-0.009, 0.009], [0.005, -0.005]]


@pytest.fixture
def bench_cfg():
    theta = Theta(np.array([6.0, 3.0]), 2.0, 1.0)
    g = validate_generator(BENCH_Q)
    return SimulationConfig(theta, 0.3, g, 100.0, 0.1, seed=17)


class TestSimulationConfig:
    def test_defaults(self, bench_cfg):
        assert bench_cfg.n_obs == 1000
        assert bench_cfg.fine_step == pytest.approx(0.01)
        # default initial regime is the one with the largest level b
        assert bench_cfg.initial_state == 1

    def test_rejects_noninteger_grid(self):
        theta = Theta(np.array([6.0, 3.0]), 2.0, 1.0)
        g = validate_generator(BENCH_Q)
        with pytest.raises(ConfigError, match="integer"):
            SimulationConfig(theta, 0.3, g, 100.05, 0.1)

    def test_rejects_step_guard_violation(self):
        theta = Theta(np.array([6.0, 3.0]), 2.0, 1.0)
        g = validate_generator([[-30.0, 30.0], [10.0, -10.0]])
        with pytest.raises(ConfigError, match="step"):
            SimulationConfig(theta, 0.3, g, 10.0, 0.5, fine_factor=10)

    def test_dimension_mismatch(self):
        theta = Theta(np.array([6.0, 3.0, 1.0]), 2.0, 1.0)
        with pytest.raises(ConfigError):
            SimulationConfig(theta, 0.3, validate_generator(BENCH_Q), 10.0, 0.1)


class TestSimulatePath:
    def test_shapes_and_grids(self, bench_cfg):
        obs, chain_obs, chain_fine = simulate_path(bench_cfg)
        assert obs.n == 1000
        assert obs.x.shape == (1001,)
        assert chain_obs.states.shape == (1001,)
        assert chain_fine.states.shape == (10001,)
        assert obs.x[0] == 0.0
        np.testing.assert_array_equal(chain_fine.states[::10], chain_obs.states)

    def test_deterministic_given_seed(self, bench_cfg):
        x1 = simulate_path(bench_cfg)[0].x
        x2 = simulate_path(bench_cfg)[0].x
        np.testing.assert_array_equal(x1, x2)

    def test_custom_increments_reproduce_euler(self, bench_cfg):
        rng = np.random.default_rng(4)
        inc = rng.normal(0.0, 0.05, bench_cfg.n_obs * bench_cfg.fine_factor)
        obs, _, chain_fine = simulate_path(
            bench_cfg, np.random.default_rng(bench_cfg.seed), increments=inc
        )
        x = euler_path(
            bench_cfg.x0,
            bench_cfg.theta_true,
            chain_fine.states,
            inc,
            bench_cfg.fine_step,
        )
        np.testing.assert_array_equal(obs.x, x[::10])

    def test_increments_length_checked(self, bench_cfg):
        with pytest.raises(ConfigError):
            simulate_path(bench_cfg, increments=np.zeros(7))

    def test_mean_reversion_without_noise(self):
        # with zero noise and a single regime the path tracks the ODE
        # solution toward b, so X_t = b (1 - (1 - lam*step)^k)
        theta = Theta(np.array([5.0]), 1.0, 1.0)
        with pytest.warns(RuntimeWarning, match="absorbing"):
            g = validate_generator([[0.0]], allow_single_state=True)
        cfg = SimulationConfig(theta, 0.3, g, 10.0, 0.1, fine_factor=10, seed=0)
        obs, _, chain = simulate_path(cfg, increments=np.zeros(1000))
        k = np.arange(0, 1001, 10)
        expected = 5.0 * (1.0 - (1.0 - 1.0 * 0.01) ** k)
        np.testing.assert_allclose(obs.x, expected, rtol=1e-10)

    def test_stationary_mean_tracks_regime_mix(self):
        # over a long horizon the path mean approaches the pi-weighted
        # average of the levels; with pi = (5/14, 9/14) that is 4.0714...
        theta = Theta(np.array([6.0, 3.0]), 2.0, 1.0)
        g = validate_generator(BENCH_Q)
        cfg = SimulationConfig(theta, 0.3, g, 5000.0, 0.1, seed=99)
        obs, chain_obs, _ = simulate_path(cfg)
        mix = 6.0 * np.mean(chain_obs.states == 1) + 3.0 * np.mean(chain_obs.states == 2)
        assert np.mean(obs.x) == pytest.approx(mix, abs=0.25)


class TestSelfConvergence:
    def test_zero_noise_second_order(self):
        # without noise the drift discretization error is the whole story
        # and the coupled gap shrinks like step^2 (ratio ~ 4 for halving)
        theta = Theta(np.array([6.0, 3.0]), 2.0, 1.0)
        g = validate_generator(BENCH_Q)
        cfg = SimulationConfig(theta, 0.3, g, 50.0, 0.1, fine_factor=2, seed=5)
        rep = self_convergence_test(cfg, levels=3, n_reps=50, zero_noise=True)
        assert rep.gaps.shape == (3,)
        assert np.all(np.diff(rep.gaps) < 0.0)
        assert np.all(rep.ratios > 3.0)

    def test_gaps_decrease_with_noise(self):
        theta = Theta(np.array([6.0, 3.0]), 2.0, 1.0)
        g = validate_generator(BENCH_Q)
        cfg = SimulationConfig(theta, 0.3, g, 20.0, 0.1, fine_factor=2, seed=6)
        rep = self_convergence_test(cfg, levels=2, n_reps=100)
        assert rep.n_reps == 100
        assert np.all(rep.gaps > 0.0)
        assert rep.gaps[1] < rep.gaps[0]

    def test_rejects_bad_levels(self):
        theta = Theta(np.array([6.0, 3.0]), 2.0, 1.0)
        g = validate_generator(BENCH_Q)
        cfg = SimulationConfig(theta, 0.3, g, 10.0, 0.1, fine_factor=2, seed=1)
        with pytest.raises(ConfigError):
            self_convergence_test(cfg, levels=0)
