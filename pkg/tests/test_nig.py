import numpy as np
import pytest
from scipy import integrate

from switchem import (
    NigParams,
    UnderflowWarning,
    bessel_k1,
    nig_density,
    sample_nig,
    std_cauchy_density,
    std_cauchy_limit_check,
)

from oracles import k1_quadrature, nig_density_direct


class TestBesselK1:
    # frozen reference values, computed once from the integral
    # representation int_0^inf exp(-x cosh t) cosh t dt
    FROZEN = {
        1.0: 0.6019072301972346,
        0.1: 9.853844780870606,
        10.0: 1.8648773453825582e-05,
    }

    def test_frozen_values(self):
        for x, ref in self.FROZEN.items():
            assert bessel_k1(x) == pytest.approx(ref, rel=1e-12)

    def test_against_quadrature(self):
        for x in np.geomspace(1e-6, 300.0, 40):
            assert bessel_k1(float(x)) == pytest.approx(k1_quadrature(float(x)), rel=1e-10)

    def test_array_input(self):
        x = np.array([0.5, 1.0, 2.0])
        out = bessel_k1(x)
        assert out.shape == (3,)
        assert out[1] == pytest.approx(self.FROZEN[1.0])

    def test_monotone_decreasing(self):
        x = np.linspace(0.01, 50.0, 500)
        assert np.all(np.diff(bessel_k1(x)) < 0.0)

    @pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(ValueError):
            bessel_k1(bad)

    def test_underflow_warns(self):
        with pytest.warns(UnderflowWarning):
            out = bessel_k1(1e6)
        assert out == 0.0


class TestNigParams:
    def test_scale(self):
        p = NigParams(0.3, 1.0, 0.1)
        assert p.scale == pytest.approx(0.1)

    @pytest.mark.parametrize("kw", [{"a": 0.0}, {"delta": -1.0}, {"t": 0.0}])
    def test_rejects_nonpositive(self, kw):
        args = {"a": 0.3, "delta": 1.0, "t": 1.0, **kw}
        with pytest.raises(ValueError):
            NigParams(**args)


class TestNigDensity:
    def test_matches_direct_formula(self):
        p = NigParams(0.3, 1.0, 0.1)
        for z in [-5.0, -0.3, 0.0, 0.01, 2.0, 40.0]:
            assert nig_density(z, p) == pytest.approx(
                nig_density_direct(z, p.a, p.scale), rel=1e-9
            )

    def test_symmetric_and_positive(self):
        p = NigParams(1.0, 0.5, 1.0)
        z = np.linspace(-20, 20, 401)
        f = nig_density(z, p)
        assert np.all(f > 0.0)
        np.testing.assert_allclose(f, f[::-1], rtol=1e-13)

    def test_integrates_to_one(self):
        for a, d, t in [(0.3, 1.0, 0.1), (0.3, 1.0, 1.0), (1.0, 0.5, 0.1)]:
            p = NigParams(a, d, t)
            mass, _ = integrate.quad(lambda z: nig_density(z, p), -np.inf, np.inf, limit=400)
            assert mass == pytest.approx(1.0, abs=1e-8)

    def test_large_argument_no_overflow(self):
        # the exp(a*s) prefactor alone would overflow for a*s > 709
        p = NigParams(800.0, 1.0, 1.0)
        assert np.isfinite(nig_density(0.5, p))


class TestSampleNig:
    def test_deterministic_given_seed(self):
        p = NigParams(0.3, 1.0, 0.1)
        z1 = sample_nig(p, 100, np.random.default_rng(5))
        z2 = sample_nig(p, 100, np.random.default_rng(5))
        np.testing.assert_array_equal(z1, z2)

    def test_mean_and_variance(self):
        p = NigParams(0.3, 1.0, 1.0)
        z = sample_nig(p, 200_000, np.random.default_rng(11))
        # Var = scale / a for the symmetric centered law
        assert abs(np.mean(z)) < 0.05
        assert np.var(z) == pytest.approx(p.scale / p.a, rel=0.05)

    def test_rejects_bad_count(self):
        with pytest.raises(ValueError):
            sample_nig(NigParams(0.3, 1.0), 0, np.random.default_rng(0))


class TestCauchyLimit:
    def test_gaps_decrease(self):
        gaps = std_cauchy_limit_check(0.3, 1.0, [0.4, 0.2, 0.1, 0.05])
        assert np.all(np.diff(gaps) < 0.0)

    def test_rejects_nondecreasing_h(self):
        with pytest.raises(ValueError):
            std_cauchy_limit_check(0.3, 1.0, [0.1, 0.2])

    def test_cauchy_density_value(self):
        assert std_cauchy_density(0.0) == pytest.approx(1.0 / np.pi)
