import math

import numpy as np
import pytest
from scipy import integrate, stats

from ratecast import lrd
from ratecast.lrd import (
    FarimaGarchModel,
    LrdError,
    estimate_d,
    frac_diff,
    frac_diff_coeffs,
    garch_filter,
    innovation_logpdf,
    innovation_sample,
    model_log_lik,
)
from ratecast.synth import sim_farima_garch


class TestFracDiffCoeffs:
    def test_recurrence_oracle(self):
        for d in (-0.3, 0.0, 0.25, 0.4, 1.0):
            coeffs = frac_diff_coeffs(d, 51)
            c = 1.0
            assert coeffs[0] == 1.0
            for k in range(1, 51):
                c = c * (k - 1 - d) / k
                assert coeffs[k] == pytest.approx(c, rel=1e-14, abs=1e-300)

    def test_known_values(self):
        coeffs = frac_diff_coeffs(0.4, 4)
        assert coeffs[1] == pytest.approx(-0.4)
        assert coeffs[2] == pytest.approx(-0.12)
        assert coeffs[3] == pytest.approx(-0.12 * (2 - 0.4) / 3)


class TestFracDiff:
    def test_d_zero_is_identity(self):
        x = np.random.default_rng(0).normal(size=50)
        np.testing.assert_allclose(frac_diff(x, 0.0), x)

    def test_d_one_is_first_difference(self):
        x = np.random.default_rng(1).normal(size=50)
        out = frac_diff(x, 1.0)
        assert out[0] == x[0]
        np.testing.assert_allclose(out[1:], np.diff(x), atol=1e-12)

    def test_roundtrip(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=300)
        for d in (0.2, 0.45):
            back = frac_diff(frac_diff(x, d), -d)
            np.testing.assert_allclose(back, x, rtol=1e-8, atol=1e-8)

    def test_validation(self):
        with pytest.raises(LrdError):
            frac_diff([], 0.3)
        with pytest.raises(LrdError):
            frac_diff([1.0], 1.5)


class TestEstimateD:
    def test_long_memory_series(self):
        y = sim_farima_garch(4096, seed=3, d=0.3, omega=1.0, alpha=(),
                             beta=(), dist="sged", shape=2.0, skew=1.0)
        assert estimate_d(y).d == pytest.approx(0.3, abs=0.1)

    def test_white_noise(self):
        rng = np.random.default_rng(4)
        assert estimate_d(rng.normal(size=4096)).d == pytest.approx(0.0,
                                                                    abs=0.1)

    def test_hurst_relation(self):
        est = lrd.LrdEstimate(d=0.3, stderr=0.05)
        assert est.hurst == pytest.approx(0.8)

    def test_constant_series_errors(self):
        with pytest.raises(LrdError):
            estimate_d(np.full(256, 3.0))


class TestInnovationDensities:
    def test_sstd_skew_one_reduces_to_student_t(self):
        nu = 5.0
        scale = math.sqrt(nu / (nu - 2))  # unit-variance standardization
        for z in (0.0, 1.5, -1.5):
            expected = stats.t.logpdf(z * scale, df=nu) + math.log(scale)
            assert innovation_logpdf("sstd", z, nu, 1.0) == pytest.approx(
                expected, abs=1e-9)

    def test_sstd_symmetry_at_skew_one(self):
        assert innovation_logpdf("sstd", 1.5, 6.0, 1.0) == pytest.approx(
            innovation_logpdf("sstd", -1.5, 6.0, 1.0), abs=1e-12)

    def test_sged_shape_two_is_normal(self):
        assert innovation_logpdf("sged", 0.0, 2.0, 1.0) == pytest.approx(
            -0.5 * math.log(2 * math.pi), abs=1e-9)
        for z in (0.7, -2.1):
            assert innovation_logpdf("sged", z, 2.0, 1.0) == pytest.approx(
                stats.norm.logpdf(z), abs=1e-9)

    def test_density_integrates_to_one(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            dist = "sstd" if rng.uniform() < 0.5 else "sged"
            shape = rng.uniform(2.5, 12.0) if dist == "sstd" else rng.uniform(0.8, 4.0)
            skew = rng.uniform(0.5, 2.0)
            total, _ = integrate.quad(
                lambda z: math.exp(innovation_logpdf(dist, z, shape, skew)),
                -np.inf, np.inf, limit=400)
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_standardization_moments(self):
        for dist, shape, skew in (("sstd", 6.0, 1.4), ("sged", 1.5, 0.7)):
            mean, _ = integrate.quad(
                lambda z: z * math.exp(innovation_logpdf(dist, z, shape, skew)),
                -np.inf, np.inf, limit=400)
            var, _ = integrate.quad(
                lambda z: z * z * math.exp(innovation_logpdf(dist, z, shape, skew)),
                -np.inf, np.inf, limit=400)
            assert mean == pytest.approx(0.0, abs=1e-6)
            assert var == pytest.approx(1.0, abs=1e-5)

    def test_sampler_matches_density_moments(self):
        rng = np.random.default_rng(6)
        z = innovation_sample("sstd", 200_000, 8.0, 1.3, rng)
        assert z.mean() == pytest.approx(0.0, abs=0.01)
        assert z.var() == pytest.approx(1.0, abs=0.02)

    def test_parameter_validation(self):
        with pytest.raises(LrdError):
            innovation_logpdf("sstd", 0.0, 2.0, 1.0)
        with pytest.raises(LrdError):
            innovation_logpdf("sged", 0.0, 1.0, -1.0)
        with pytest.raises(LrdError):
            innovation_logpdf("cauchy", 0.0, 1.0, 1.0)


def _loop_garch(eps, omega, alpha, beta, s0):
    """Independent straightforward-loop conditional-variance oracle."""
    n = len(eps)
    out = [s0]
    for t in range(1, n):
        s = omega
        for j, a in enumerate(alpha):
            s += a * (eps[t - 1 - j] ** 2 if t - 1 - j >= 0 else s0)
        for j, b in enumerate(beta):
            s += b * (out[t - 1 - j] if t - 1 - j >= 0 else s0)
        out.append(s)
    return np.array(out)


class TestGarchFilter:
    def _model(self, variant="M'1", **kw):
        base = dict(variant=variant, mu=0.0, lam=0.0, d=0.0,
                    garch_w=0.1, garch_alpha=[0.2], garch_beta=[0.7])
        base.update(kw)
        return FarimaGarchModel(**base)

    def test_one_step_by_hand(self):
        model = self._model()
        s2 = garch_filter(model, np.array([1.0, 0.0]), 1.0)
        assert s2[1] == pytest.approx(0.1 + 0.2 + 0.7)

    def test_constant_variance_when_unparameterized(self):
        model = self._model(garch_alpha=[0.0], garch_beta=[0.0], garch_w=0.3)
        s2 = garch_filter(model, np.zeros(10), 5.0)
        assert s2[0] == 5.0
        np.testing.assert_allclose(s2[1:], 0.3)

    def test_thousand_step_path_matches_loop_oracle(self):
        rng = np.random.default_rng(7)
        eps = rng.normal(size=1000)
        model = self._model(garch_alpha=[0.1, 0.05], garch_beta=[0.6])
        got = garch_filter(model, eps, 1.3)
        ref = _loop_garch(eps, 0.1, [0.1, 0.05], [0.6], 1.3)
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)

    def test_igarch_persistence_is_one_by_construction(self):
        # the unconstrained-vector decoder pins alpha + beta = 1 for the
        # integrated variants
        rng = np.random.default_rng(8)
        for _ in range(20):
            vec = rng.normal(size=9)
            model = lrd._vec_to_model(vec, "M'3", 0.2, (1, 1, 1, 1), 1.0, 100)
            assert sum(model.garch_alpha) + sum(model.garch_beta) == pytest.approx(
                1.0, abs=1e-12)

    def test_igarch_model_invariant_enforced(self):
        with pytest.raises(LrdError):
            FarimaGarchModel(variant="M'3", mu=0.0, lam=0.0, d=0.0,
                             garch_w=0.1, garch_alpha=[0.3], garch_beta=[0.6])


class TestFitAndForecast:
    def test_parameter_counts_per_variant(self):
        common = dict(mu=0.0, lam=0.0, d=0.2, ar=[0.1], ma=[0.1],
                      garch_w=0.1, garch_alpha=[0.2], garch_beta=[0.7])
        igarch = dict(common, garch_alpha=[0.3], garch_beta=[0.7])
        assert FarimaGarchModel(variant="M'1", **common).free_parameters() == 10
        assert FarimaGarchModel(variant="M'2", **common).free_parameters() == 10
        assert FarimaGarchModel(variant="M'3", **igarch).free_parameters() == 9
        assert FarimaGarchModel(variant="M'4", **igarch).free_parameters() == 9

    def test_aic_definition(self):
        y = sim_farima_garch(600, seed=9, d=0.2, alpha=(0.1,), beta=(0.6,))
        model = lrd.fit(y, "M'1", orders=(0, 0, 1, 1), restarts=1,
                        maxiter=800)
        assert model.aic == pytest.approx(
            2 * model.free_parameters() - 2 * model.log_lik)

    def test_fit_dominates_generating_parameters(self):
        true = dict(d=0.25, mu=10.0, lam=0.0, ar=(), ma=(), omega=0.5,
                    alpha=(0.15,), beta=(0.6,), dist="sstd", shape=7.0,
                    skew=1.1)
        y = sim_farima_garch(2000, seed=10, **true)
        fitted = lrd.fit(y, "M'1", orders=(0, 0, 1, 1), seed=0)
        w0 = frac_diff(y - y.mean(), fitted.d, truncation=100)
        generator = FarimaGarchModel(
            variant="M'1", mu=10.0, lam=0.0, d=0.25, garch_w=0.5,
            garch_alpha=[0.15], garch_beta=[0.6], shape=7.0, skew=1.1,
            sigma0_sq=max(float(np.var(w0)), 1e-8))
        assert fitted.log_lik >= model_log_lik(generator, y) - 1e-6

    def test_recovery_within_fifteen_percent(self):
        true = dict(d=0.3, mu=50.0, lam=0.0, ar=(), ma=(), omega=1.0,
                    alpha=(0.2,), beta=(0.6,), dist="sstd", shape=6.0,
                    skew=1.2)
        y = sim_farima_garch(4000, seed=4, **true)
        model = lrd.fit(y, "M'1", orders=(0, 0, 1, 1), seed=0, restarts=1,
                        maxiter=1500)
        assert model.d == pytest.approx(0.3, rel=0.15)
        ab = sum(model.garch_alpha) + sum(model.garch_beta)
        assert ab == pytest.approx(0.8, rel=0.15)
        assert model.shape == pytest.approx(6.0, rel=0.35)

    def test_short_series_rejected(self):
        with pytest.raises(LrdError):
            lrd.fit(np.ones(100), "M'1")

    def test_forecast_constant_model(self):
        model = FarimaGarchModel(variant="M'1", mu=7.0, lam=0.0, d=0.0,
                                 garch_w=0.5, garch_alpha=[0.0],
                                 garch_beta=[0.0], sigma0_sq=0.5)
        fc = lrd.forecast(model, np.full(50, 7.0), 5)
        np.testing.assert_allclose(fc.mean_path, 7.0, atol=1e-10)
        np.testing.assert_allclose(fc.sigma_path, math.sqrt(0.5))

    def test_forecast_variance_converges_to_unconditional(self):
        model = FarimaGarchModel(variant="M'1", mu=0.0, lam=0.0, d=0.0,
                                 garch_w=0.2, garch_alpha=[0.1],
                                 garch_beta=[0.7], sigma0_sq=1.0)
        rng = np.random.default_rng(11)
        fc = lrd.forecast(model, rng.normal(size=300), 400)
        assert fc.sigma_path[-1] ** 2 == pytest.approx(0.2 / (1 - 0.8),
                                                       rel=1e-3)

    def test_one_step_forecast_matches_filter_boundary(self):
        # append the forecast step and re-filter: eps at the boundary must
        # equal observed minus the forecast mean
        y = sim_farima_garch(500, seed=12, d=0.2, mu=3.0, ar=(0.3,),
                             alpha=(0.1,), beta=(0.6,))
        model = lrd.fit(y[:400], "M'1", orders=(1, 0, 1, 1), restarts=1,
                        maxiter=800)
        fc = lrd.forecast(model, y[:400], 1)
        eps, sigma2, _, _ = (np.asarray(a) for a in
                             lrd._filter_paths(model, y[:401]))
        assert y[400] - fc.mean_path[0] == pytest.approx(eps[400], abs=1e-8)
        assert fc.sigma_path[0] ** 2 == pytest.approx(sigma2[400], rel=1e-10)


class TestPredictRolling:
    def test_constant_series_perfect_pmad(self):
        y = np.full(300, 42.0)
        y[0] = 43.0  # avoid a literally zero-variance optimization surface
        best, runs = lrd.predict_rolling(y, family=("M'1",), ell=0.9, h=1,
                                         orders=(0, 0, 1, 1),
                                         refit_maxiter=300)
        assert runs[best].pmad < 0.01

    def test_row_count_and_horizon_grid(self):
        y = sim_farima_garch(400, seed=13, d=0.2, mu=100.0, alpha=(0.1,),
                             beta=(0.6,))
        table = {}
        for h in (1, 4):
            best, runs = lrd.predict_rolling(y, family=("M'1",), ell=0.9,
                                             h=h, orders=(0, 0, 1, 1),
                                             refit_maxiter=300)
            run = runs["M'1"]
            assert len(run.steps) == 400 - 360
            table[h] = run.pmad
        assert set(table) == {1, 4}

    def test_invalid_ell(self):
        with pytest.raises(LrdError):
            lrd.predict_rolling(np.ones(300), ell=1.5)
