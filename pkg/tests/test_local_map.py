import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from cmlfactors.diagnostics import durbin_watson
from cmlfactors.errors import DomainError, ParameterError
from cmlfactors.local_map import (LocalMapParams, MapState, U_EPS, bernoulli_step, clamp_unit,
                                  forward_transform, initial_returns, inverse_transform,
                                  local_map_step, orbit, orbits, sech_pdf)

P = LocalMapParams()


def sech_oracle(gamma, r0):
    # scipy's hyperbolic secant law has density sech(x)/pi; rescaled to gamma
    return stats.hypsecant(loc=r0, scale=1.0 / gamma)


class TestParams:
    def test_defaults(self):
        assert (P.gamma, P.r0, P.delta) == (60.0, 0.001, 0.011)
        assert P.std == pytest.approx(math.pi / 120)
        assert P.excess_kurtosis == 2.0

    @pytest.mark.parametrize("kw", [dict(gamma=0), dict(gamma=-1), dict(delta=0),
                                    dict(delta=1.0), dict(r0=math.inf), dict(gamma=math.nan)])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            LocalMapParams(**kw)

    def test_moments_match_scipy(self):
        law = sech_oracle(P.gamma, P.r0)
        assert law.mean() == pytest.approx(P.mean, abs=1e-15)
        assert law.var() == pytest.approx(P.variance, rel=1e-12)
        assert law.stats(moments="k") == pytest.approx(P.excess_kurtosis)


class TestDensity:
    def test_peak(self):
        assert sech_pdf(P.r0, P) == pytest.approx(60 / math.pi, rel=1e-14)

    def test_symmetric(self):
        d = np.linspace(0, 0.2, 50)
        np.testing.assert_allclose(sech_pdf(P.r0 + d, P), sech_pdf(P.r0 - d, P), rtol=1e-14)

    def test_integrates_to_one(self):
        val, _ = integrate.quad(lambda r: sech_pdf(r, P), -np.inf, np.inf)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_matches_scipy(self):
        r = np.linspace(-0.3, 0.3, 101)
        np.testing.assert_allclose(sech_pdf(r, P), sech_oracle(60, 0.001).pdf(r), rtol=1e-12)


class TestTransforms:
    def test_forward_examples(self):
        assert forward_transform(P.r0, P) == 0.5
        assert forward_transform(P.r0 + math.asinh(1) / 60, P) == pytest.approx(0.75, abs=1e-15)

    def test_forward_is_integral_of_density(self):
        for r in (-0.05, -0.01, 0.0, 0.001, 0.02, 0.08):
            val, _ = integrate.quad(lambda s: sech_pdf(s, P), -np.inf, r)
            assert forward_transform(r, P) == pytest.approx(val, abs=1e-9)

    def test_forward_matches_scipy_cdf(self):
        r = np.linspace(-0.2, 0.2, 401)
        np.testing.assert_allclose(forward_transform(r, P), sech_oracle(60, 0.001).cdf(r),
                                   atol=1e-14)

    def test_forward_monotone(self, rng):
        a, b = rng.uniform(-0.3, 0.3, (2, 1000))
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        assert np.all(forward_transform(lo, P) <= forward_transform(hi, P))

    def test_inverse_examples(self):
        assert inverse_transform(0.5, P) == P.r0
        assert inverse_transform(0.75, P) == pytest.approx(0.001 + math.log(1 + math.sqrt(2)) / 60,
                                                           abs=1e-15)

    def test_inverse_matches_scipy_ppf(self):
        u = np.linspace(0.001, 0.999, 999)
        np.testing.assert_allclose(inverse_transform(u, P), sech_oracle(60, 0.001).ppf(u),
                                   atol=1e-13)

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5, math.nan])
    def test_inverse_domain(self, u):
        with pytest.raises(DomainError):
            inverse_transform(u, P)

    def test_forward_inverse_identity(self, rng):
        u = rng.uniform(1e-12, 1 - 1e-12, 10_000)
        np.testing.assert_allclose(forward_transform(inverse_transform(u, P), P), u,
                                   rtol=0, atol=1e-10)

    @pytest.mark.parametrize("gamma,half_width", [(20.0, 0.5), (60.0, 0.25)])
    def test_inverse_forward_identity(self, rng, gamma, half_width):
        # |gamma (r - r0)| stays below ~15, where 1 - u still resolves r to 1e-10
        p = LocalMapParams(gamma=gamma)
        r = p.r0 + rng.uniform(-half_width, half_width, 10_000)
        np.testing.assert_allclose(inverse_transform(forward_transform(r, p), p), r,
                                   rtol=0, atol=1e-10)

    def test_extreme_uniforms_stay_finite(self):
        u = np.array([U_EPS, 1e-300, 0.5, 1 - 1e-16])
        r, flag = inverse_transform(u, P, return_flag=True)
        assert np.isfinite(r).all() and not flag.any()
        assert r[0] < P.r0 < r[-1]


class TestBernoulli:
    @pytest.mark.parametrize("u,delta,expected", [(0.5, 0.5, 0.0), (0.3, 0.5, 0.6),
                                                  (0.0, 0.011, 0.0), (0.9, 0.1, 0.0)])
    def test_examples(self, u, delta, expected):
        got = bernoulli_step(u, LocalMapParams(delta=delta))
        assert min(abs(got - expected), abs(got - expected - 1)) < 1e-12

    def test_range(self, rng):
        out = bernoulli_step(rng.uniform(0, 1, 10_000), P)
        assert np.all((out >= 0) & (out < 1))

    @pytest.mark.parametrize("u", [1.0, -1e-9, math.nan])
    def test_domain(self, u):
        with pytest.raises(DomainError):
            bernoulli_step(u, P)

    @pytest.mark.parametrize("delta", [0.011, 0.1, 0.5])
    def test_preserves_uniform_law(self, delta):
        u = np.random.default_rng(7).uniform(size=100_000)
        out = bernoulli_step(u, LocalMapParams(delta=delta))
        d = stats.kstest(out, "uniform").statistic
        assert d < 1.628 / math.sqrt(out.size)  # asymptotic 1% critical value

    def test_clamp(self):
        assert clamp_unit(0.0) == U_EPS
        assert clamp_unit(1.0) == 1 - U_EPS
        assert clamp_unit(0.3) == 0.3


class TestMapStep:
    def test_boundary_hit_is_finite_and_flagged(self):
        # r0 maps to u = 1/2, which delta = 1/2 sends exactly to 0
        r, hit = local_map_step(P.r0, LocalMapParams(delta=0.5), return_flag=True)
        assert hit and math.isfinite(r)

    def test_matches_composition(self, rng):
        r = P.r0 + rng.uniform(-0.1, 0.1, 200)
        u = bernoulli_step(forward_transform(r, P), P)
        expected = inverse_transform(clamp_unit(u), P)
        np.testing.assert_allclose(local_map_step(r, P), expected, rtol=0, atol=1e-15)

    def test_map_state(self):
        s = MapState.from_return(0.02, P)
        nxt = s.step(P)
        assert nxt.r == pytest.approx(local_map_step(0.02, P), abs=1e-15)
        assert nxt.u == pytest.approx(forward_transform(nxt.r, P), abs=1e-12)
        assert MapState.from_uniform(0.5, P).r == P.r0


class TestOrbits:
    def test_default_moments(self):
        x = orbit(P, 100_000, seed=1)
        assert 0.025 <= np.std(x, ddof=1) <= 0.027
        assert 1.5 <= stats.kurtosis(x) <= 2.5

    @settings(max_examples=12)
    @given(gamma=st.floats(10, 100), r0=st.floats(-0.02, 0.02), seed=st.integers(0, 2**32))
    def test_stationary_moments_other_parameters(self, gamma, r0, seed):
        p = LocalMapParams(gamma=gamma, r0=r0, delta=0.011)
        x = orbit(p, 100_000, seed=seed)
        sigma = p.std
        assert abs(x.mean() - r0) < 5 * sigma / math.sqrt(x.size)
        assert 0.95 * sigma <= x.std(ddof=1) <= 1.05 * sigma
        assert 1.5 <= stats.kurtosis(x) <= 2.5

    def test_orbit_follows_sech_law(self):
        x = orbit(P, 20_000, seed=3)
        assert stats.kstest(x, sech_oracle(60, 0.001).cdf).pvalue > 0.001

    def test_uniform_coordinate_is_uniform(self):
        u = forward_transform(orbit(P, 50_000, seed=4), P)
        assert stats.kstest(u, "uniform").statistic < 1.628 / math.sqrt(u.size)

    def test_reproducible(self):
        np.testing.assert_array_equal(orbit(P, 500, seed=9), orbit(P, 500, seed=9))

    def test_scalar_and_vector_paths_agree_briefly(self):
        # chaos amplifies last-bit differences by 1/delta per step, so compare a few steps
        x0 = 0.0123
        a = orbit(P, 4, r_init=x0)
        b = orbits(P.gamma, P.r0, P.delta, 4, np.array([x0]))[:, 0]
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)

    def test_burn_in_shifts(self):
        a = orbit(P, 10, r_init=0.01, burn_in=5)
        b = orbit(P, 15, r_init=0.01)
        np.testing.assert_array_equal(a, b[5:])

    def test_orbits_broadcast_and_hits(self):
        X, hits = orbits(60.0, 0.001, np.array([0.5, 0.011]), 50, np.array([0.001, 0.01]),
                         return_boundary_hits=True)
        assert X.shape == (50, 2)
        assert hits[0] and np.isfinite(X).all()

    def test_initial_returns_accepts_zero(self):
        assert np.isfinite(initial_returns(np.array([0.0, 0.5]), 60.0, 0.001)).all()

    def test_autocorrelation_regimes(self):
        white = orbit(P, 5000, seed=11)
        sticky = orbit(LocalMapParams(delta=0.5), 5000, seed=11)
        assert 1.8 < durbin_watson(white) < 2.2
        assert durbin_watson(sticky) < 1.0

    def test_invalid_length(self):
        with pytest.raises(ParameterError):
            orbit(P, 0)
