import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cmlfactors.errors import DegenerateInputError, DimensionError, ParameterError
from cmlfactors.factor_analysis import (HEAVISIDE, LEADING_RUN, SpectrumReport, analyze_panel,
                                        baseline_spectrum, detect_factors, explained_variance,
                                        fit_loadings, loading_entropy, loading_weights,
                                        mean_spectrum, pca_spectrum)
from cmlfactors.local_map import LocalMapParams
from cmlfactors.network import NetworkParams, build_coupling
from cmlfactors.simulator import ReturnPanel, SimConfig, simulate_panel

MAP = LocalMapParams()


def spec(*phi):
    return SpectrumReport.from_normalized(phi)


def default_panel(eps=0.45, seed=0):
    net = build_coupling(NetworkParams(3, 10, seed=seed))
    cfg = SimConfig(MAP, net.params, eps, sim_seed=seed + 1)
    return cfg, net, simulate_panel(cfg, net)


class TestSpectrum:
    def test_identical_columns(self, rng):
        x = rng.standard_normal(100)
        s = pca_spectrum(np.column_stack([x, x]))
        np.testing.assert_allclose(s.normalized, [1.0, 0.0], atol=1e-12)

    def test_matches_direct_covariance(self, rng):
        X = rng.standard_normal((80, 6)) @ rng.standard_normal((6, 6))
        s = pca_spectrum(X)
        lam = np.sort(np.linalg.eigvalsh(np.cov(X, rowvar=False)))[::-1]
        np.testing.assert_allclose(s.eigenvalues, lam, rtol=1e-10)
        assert s.normalized.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.trace(np.cov(X, rowvar=False)) == pytest.approx(s.eigenvalues.sum(), rel=1e-12)

    def test_uncoupled_is_noise_like(self):
        net = build_coupling(NetworkParams(3, 10, seed=0))
        p = simulate_panel(SimConfig(MAP, net.params, 0.0, T=5000, sim_seed=3), net)
        phi = pca_spectrum(p).normalized
        q = 30 / 5000
        assert phi[0] < (1 + math.sqrt(q)) ** 2 / 30 * 1.1
        assert phi[-1] > (1 - math.sqrt(q)) ** 2 / 30 * 0.9

    @given(arrays(float, (20, 4), elements=st.floats(-5, 5)))
    def test_normalization_property(self, X):
        if np.linalg.matrix_rank(X - X.mean(0)) < 1 or np.var(X) < 1e-6:
            return
        s = pca_spectrum(X)
        assert s.normalized.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(s.eigenvalues) <= 1e-12)
        assert np.all(s.normalized >= 0)

    def test_warns_when_short(self, rng):
        with pytest.warns(RuntimeWarning):
            pca_spectrum(rng.standard_normal((4, 6)))

    def test_rejects_degenerate(self):
        with pytest.raises(DegenerateInputError):
            pca_spectrum(np.ones((10, 3)))
        with pytest.raises(DegenerateInputError):
            pca_spectrum(ReturnPanel(np.zeros((3, 2)), stable=False))
        with pytest.raises(DimensionError):
            pca_spectrum(np.ones(10))


class TestDetect:
    def test_examples(self):
        assert detect_factors(spec(0.5, 0.3, 0.1, 0.1), spec(0.3, 0.3, 0.2, 0.2)) == 1
        assert detect_factors(spec(0.25, 0.25, 0.25, 0.25), spec(0.25, 0.25, 0.25, 0.25)) == 0

    def test_non_contiguous(self):
        coupled, base = spec(0.4, 0.2, 0.2, 0.2), spec(0.3, 0.3, 0.25, 0.15)
        assert detect_factors(coupled, base, HEAVISIDE) == 2
        assert detect_factors(coupled, base, LEADING_RUN) == 1

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            detect_factors(spec(0.5, 0.5), spec(0.4, 0.3, 0.3))
        with pytest.raises(ParameterError):
            detect_factors(spec(0.5, 0.5), spec(0.5, 0.5), "bogus")


class TestBaseline:
    def test_single_realization_is_itself(self):
        cfg, net, _ = default_panel()
        base = baseline_spectrum(cfg, net, 1)
        assert base.normalized.sum() == pytest.approx(1.0, abs=1e-12)
        again = baseline_spectrum(cfg, net, 1)
        np.testing.assert_array_equal(base.normalized, again.normalized)

    def test_average(self):
        cfg, net, _ = default_panel()
        base = baseline_spectrum(cfg, net, 10)
        assert base.normalized.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(base.normalized) < 0)

    def test_mean_of_identical(self):
        s = spec(0.6, 0.3, 0.1)
        np.testing.assert_allclose(mean_spectrum([s, s]).normalized, s.normalized)

    def test_rejects_zero(self):
        cfg, net, _ = default_panel()
        with pytest.raises(ParameterError):
            baseline_spectrum(cfg, net, 0)


class TestLoadings:
    def test_exact_model(self, rng):
        F = rng.standard_normal((60, 2))
        F -= F.mean(0)
        B = np.array([[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]])
        got, resid = fit_loadings(F @ B, F)
        np.testing.assert_allclose(got, B, atol=1e-12)
        np.testing.assert_allclose(resid, 0, atol=1e-12)

    def test_residual_orthogonal(self, rng):
        X = rng.standard_normal((50, 5))
        F = rng.standard_normal((50, 2))
        F -= F.mean(0)
        _, resid = fit_loadings(X, F)
        np.testing.assert_allclose(F.T @ resid, 0, atol=1e-10)

    def test_full_rank_reconstruction(self, rng):
        X = rng.standard_normal((40, 5))
        s = pca_spectrum(X)
        F = (X - X.mean(0)) @ s.components
        _, resid = fit_loadings(X, F)
        np.testing.assert_allclose(resid, 0, atol=1e-12)

    def test_rank_deficient(self, rng):
        f = rng.standard_normal(30)
        with pytest.raises(DegenerateInputError):
            fit_loadings(rng.standard_normal((30, 3)), np.column_stack([f, 2 * f]))


class TestEntropy:
    def test_examples(self):
        assert loading_entropy([1, 1, 1]) == pytest.approx(1.0)
        assert loading_entropy([1, 0, 0]) == 0.0
        assert loading_entropy([2, -2]) == pytest.approx(1.0)
        np.testing.assert_allclose(loading_weights([1, -3]), [0.25, 0.75])

    def test_undefined(self):
        assert math.isnan(loading_entropy([0.7]))
        assert math.isnan(loading_entropy([0.0, 0.0, 0.0]))

    @given(arrays(float, st.integers(2, 8), elements=st.floats(-100, 100, allow_subnormal=False)),
           st.floats(0.01, 100))
    def test_bounds_and_scale(self, b, c):
        h = loading_entropy(b)
        if math.isnan(h):
            assert np.all(b == 0)
            return
        assert 0 <= h <= 1
        assert loading_entropy(c * b) == pytest.approx(h, abs=1e-9)
        assert loading_entropy(-b) == pytest.approx(h, abs=1e-12)

    @given(st.integers(2, 8), st.floats(0.01, 100))
    def test_equal_weights_give_one(self, m, v):
        assert loading_entropy(np.full(m, v)) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("b", [[1, 2], [1, 1, 1.001], [0, 1, 1]])
    def test_unequal_weights_below_one(self, b):
        assert loading_entropy(b) < 1.0


class TestExplainedVariance:
    def test_examples(self):
        s = spec(0.6, 0.3, 0.1)
        assert explained_variance(s, 0) == 0.0
        assert explained_variance(s, 2) == pytest.approx(0.9)
        assert explained_variance(s, 3) == pytest.approx(1.0)

    def test_monotone(self):
        s = spec(0.4, 0.3, 0.2, 0.1)
        vals = [explained_variance(s, m) for m in range(5)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_range(self):
        with pytest.raises(ParameterError):
            explained_variance(spec(0.5, 0.5), 3)


class TestAnalyze:
    def test_default_configuration(self):
        cfg, net, panel = default_panel()
        fit = analyze_panel(panel, baseline_spectrum(cfg, net))
        assert fit.m_hat == 3
        assert fit.loadings.shape == (3, 30) and fit.factors.shape == (251, 3)
        defined = fit.entropy[~np.isnan(fit.entropy)]
        assert np.all((defined >= 0) & (defined <= 1))

    def test_half_coupling_is_exact(self):
        cfg, net, panel = default_panel(eps=0.5)
        fit = analyze_panel(panel, baseline_spectrum(cfg, net))
        assert fit.m_hat == 3 and fit.explained_variance >= 0.999

    def test_self_baseline_finds_nothing(self):
        cfg, net, _ = default_panel(eps=0.0)
        panel = simulate_panel(cfg, net)
        fit = analyze_panel(panel, pca_spectrum(panel))
        assert fit.m_hat == 0 and fit.explained_variance == 0.0
        assert np.all(np.isnan(fit.entropy))

    def test_single_factor_entropy_undefined(self, rng):
        x = rng.standard_normal(100)
        X = np.column_stack([x, x + 1e-3 * rng.standard_normal(100)])
        fit = analyze_panel(X, SpectrumReport.uniform(2))
        assert fit.m_hat == 1 and fit.n_entropy_defined == 0 and math.isnan(fit.mean_entropy)

    def test_uniform_baseline(self):
        np.testing.assert_array_equal(SpectrumReport.uniform(4).normalized, [0.25] * 4)

    def test_quiet_for_long_panels(self):
        cfg, net, panel = default_panel()
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            analyze_panel(panel, baseline_spectrum(cfg, net))
