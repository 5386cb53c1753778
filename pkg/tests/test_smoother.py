import warnings

import numpy as np
import pytest

from switchem import (
    ConfigError,
    NumericalFailure,
    ObservationSeries,
    Theta,
    backward_smooth,
    forward_filter,
    smooth_regimes,
    smoothed_marginals,
    transition_matrix_approx,
    validate_generator,
)

from oracles import enumerate_filter_smoother


def small_instance(rng, n=5, m=2):
    h = float(rng.uniform(0.05, 0.2))
    b = np.sort(rng.uniform(-2.0, 8.0, m))[::-1].copy()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        theta = Theta(b, float(rng.uniform(0.3, 3.0)), float(rng.uniform(0.3, 2.0)))
    q = rng.uniform(0.1, 2.0, (m, m))
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    g = validate_generator(q)
    obs = ObservationSeries(np.cumsum(rng.standard_normal(n + 1)), h)
    return theta, g, obs


class TestForwardFilter:
    def test_matches_enumeration_exactly(self):
        rng = np.random.default_rng(100)
        for _ in range(10):
            m = int(rng.integers(2, 4))
            n = int(rng.integers(3, 7))
            theta, g, obs = small_instance(rng, n=n, m=m)
            fs = forward_filter(theta, g, obs)
            a = transition_matrix_approx(g, obs.h)
            p0 = np.full(m, 1.0 / m)
            ref_filt, _, _ = enumerate_filter_smoother(
                obs.x, obs.h, theta.b, theta.lam, theta.delta, a, p0
            )
            np.testing.assert_allclose(fs.filtered, ref_filt, atol=1e-12)

    def test_slices_are_distributions(self):
        rng = np.random.default_rng(5)
        theta, g, obs = small_instance(rng, n=200)
        fs = forward_filter(theta, g, obs)
        np.testing.assert_allclose(fs.filtered.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(fs.filtered >= 0.0) and np.all(fs.filtered <= 1.0)
        np.testing.assert_allclose(fs.predicted_pair[1:].sum(axis=(1, 2)), 1.0, atol=1e-12)
        np.testing.assert_allclose(
            fs.predicted_pair.sum(axis=1), fs.predicted_marginal, atol=1e-15
        )

    def test_custom_initial_probs(self):
        rng = np.random.default_rng(6)
        theta, g, obs = small_instance(rng)
        fs = forward_filter(theta, g, obs, initial_probs=[1.0, 0.0])
        np.testing.assert_array_equal(fs.filtered[0], [1.0, 0.0])
        with pytest.raises(ConfigError):
            forward_filter(theta, g, obs, initial_probs=[0.7, 0.7])

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(2)
        theta, g, obs = small_instance(rng, m=2)
        bad = Theta(np.array([1.0, 2.0, 3.0]), 1.0, 1.0)
        with pytest.raises(ConfigError):
            forward_filter(bad, g, obs)

    def test_breakdown_reports_index(self):
        # an absurd outlier overflows every squared residual, so all
        # emission densities vanish and the failing step is reported
        theta = Theta(np.array([6.0, 3.0]), 2.0, 1.0)
        g = validate_generator([[-0.009, 0.009], [0.005, -0.005]])
        x = np.array([0.0, 0.4, 1e200, 0.5, 0.7])
        with np.errstate(over="ignore"):
            with pytest.raises(NumericalFailure) as exc_info:
                forward_filter(theta, g, ObservationSeries(x, 0.1))
        assert exc_info.value.index == 2


class TestBackwardSmooth:
    def test_pair_slices_are_distributions(self):
        rng = np.random.default_rng(12)
        theta, g, obs = small_instance(rng, n=150)
        fs = forward_filter(theta, g, obs)
        w = backward_smooth(fs, theta, g, obs)
        np.testing.assert_allclose(w.w[1:].sum(axis=(1, 2)), 1.0, atol=1e-12)
        assert np.all(w.w >= 0.0) and np.all(w.w <= 1.0)

    def test_terminal_marginal_is_filtered(self):
        rng = np.random.default_rng(13)
        theta, g, obs = small_instance(rng, n=60)
        fs = forward_filter(theta, g, obs)
        w = backward_smooth(fs)
        sm = smoothed_marginals(fs, w)
        np.testing.assert_allclose(sm[-1], fs.filtered[-1], atol=1e-12)
        # marginalizing the pair weights over i reproduces the smoothed
        # marginal at the later time point
        np.testing.assert_allclose(w.w[1:].sum(axis=1), sm[1:], atol=1e-10)

    def test_close_to_enumeration_when_weakly_informative(self):
        # the backward pass drops the next emission's information about
        # the earlier state, so it is approximate; when single steps carry
        # little regime information (lam*|db| << delta) it stays close to
        # the exact smoother
        from switchem import SimulationConfig, simulate_path

        rng = np.random.default_rng(14)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            theta = Theta(np.array([0.8, 0.2]), 0.3, 2.0)
        g = validate_generator([[-0.05, 0.05], [0.03, -0.03]])
        cfg = SimulationConfig(theta, 0.3, g, 0.5, 0.1, seed=3)
        obs, _, _ = simulate_path(cfg)
        fs = forward_filter(theta, g, obs)
        w = backward_smooth(fs)
        a = transition_matrix_approx(g, obs.h)
        _, ref_pair, _ = enumerate_filter_smoother(
            obs.x, obs.h, theta.b, theta.lam, theta.delta, a, np.full(2, 0.5)
        )
        assert np.max(np.abs(w.w[1:] - ref_pair[1:])) < 1e-2

    def test_approximation_error_can_be_large(self):
        # with strongly discriminating observations the dropped emission
        # factor matters; record that the gap is then genuinely non-small
        rng = np.random.default_rng(14)
        theta, g, obs = small_instance(rng, n=5)
        fs = forward_filter(theta, g, obs)
        w = backward_smooth(fs)
        a = transition_matrix_approx(g, obs.h)
        _, ref_pair, _ = enumerate_filter_smoother(
            obs.x, obs.h, theta.b, theta.lam, theta.delta, a, np.full(2, 0.5)
        )
        gap = np.max(np.abs(w.w[1:] - ref_pair[1:]))
        assert gap > 1e-2  # the approximation is not exact in general

    def test_dimension_checks(self):
        rng = np.random.default_rng(15)
        theta, g, obs = small_instance(rng)
        fs = forward_filter(theta, g, obs)
        other = ObservationSeries(np.zeros(3), 0.1)
        with pytest.raises(ConfigError):
            backward_smooth(fs, obs=other)


class TestSmoothRegimes:
    def test_wrapper_consistency(self):
        rng = np.random.default_rng(20)
        theta, g, obs = small_instance(rng, n=80)
        fs, sm, w = smooth_regimes(theta, g, obs)
        fs2 = forward_filter(theta, g, obs)
        np.testing.assert_array_equal(fs.filtered, fs2.filtered)
        np.testing.assert_allclose(sm.sum(axis=1), 1.0, atol=1e-12)
