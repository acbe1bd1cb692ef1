import math

import numpy as np
import pytest

from ratecast import evt
from ratecast.evt import (
    EvtError,
    GpdParams,
    extremal_index,
    fit_stationary,
    gof_test,
    gpd_fit_mle,
    gpd_survival,
    qq_accepted,
    quantile_set,
    return_level,
    runs_clusters,
    select_by_aic,
)
from ratecast.ingest import RateSeries
from ratecast.synth import sim_composite, sim_gpd


class TestGpdSurvival:
    def test_exponential_branch(self):
        p = GpdParams(variant="M1", xi=0.0, sigma=2.0)
        assert gpd_survival(p, 2.0) == pytest.approx(math.exp(-1))

    def test_pareto_branch(self):
        p = GpdParams(variant="M1", xi=1.0, sigma=1.0)
        assert gpd_survival(p, 1.0) == pytest.approx(0.5)

    def test_support_endpoint(self):
        p = GpdParams(variant="M1", xi=-0.5, sigma=1.0)
        assert gpd_survival(p, 2.0) == 0.0
        assert gpd_survival(p, 5.0) == 0.0

    def test_continuity_at_switch(self):
        # the limit branch and the general branch agree at the tolerance edge
        lo = GpdParams(variant="M1", xi=evt.XI_TOL / 2, sigma=3.0)
        hi = GpdParams(variant="M1", xi=evt.XI_TOL * 2, sigma=3.0)
        for x in (0.5, 3.0, 10.0):
            assert gpd_survival(lo, x) == pytest.approx(gpd_survival(hi, x),
                                                        rel=1e-4)

    def test_time_dependent_scale(self):
        p = GpdParams(variant="M2", xi=0.2, beta0=0.0, beta1=1.0)
        # sigma(t) = exp(log t) = t
        assert gpd_survival(p, 4.0, t=4.0) == pytest.approx(
            (1 + 0.2 * 4.0 / 4.0) ** (-1 / 0.2))


class TestGpdFitMle:
    def test_recovers_heavy_tail_parameters(self):
        x = sim_gpd(10_000, xi=0.36, sigma=3778.19, seed=0)
        params, log_lik, fit_aic = gpd_fit_mle(x)
        assert params.xi == pytest.approx(0.36, rel=0.1)
        assert params.sigma == pytest.approx(3778.19, rel=0.1)
        assert fit_aic == pytest.approx(2 * 2 - 2 * log_lik)

    def test_exponential_data_gives_xi_near_zero(self):
        x = sim_gpd(10_000, xi=0.0, sigma=1.0, seed=1)
        params, _, _ = gpd_fit_mle(x)
        assert abs(params.xi) < 0.05

    def test_degenerate_input_rejected(self):
        with pytest.raises(EvtError):
            gpd_fit_mle(np.full(100, 3.0))

    def test_needs_enough_excesses(self):
        with pytest.raises(EvtError):
            gpd_fit_mle(np.arange(1.0, 11.0))

    def test_nonstationary_needs_times(self):
        with pytest.raises(EvtError):
            gpd_fit_mle(np.arange(1.0, 40.0), variant="M2")


class TestGofTest:
    def test_h0_acceptance_rate(self):
        accepted = 0
        for seed in range(10):
            x = sim_gpd(500, xi=0.2, sigma=5.0, seed=seed)
            params, _, _ = gpd_fit_mle(x, seed=seed)
            rep = gof_test(x, params, n_boot=99, seed=seed)
            accepted += rep.cm_p > 0.1 and rep.ad_p > 0.1
        assert accepted >= 8

    def test_h1_rejection_of_lognormal(self):
        # bell-shaped excesses are far from any decreasing GPD density
        rejected = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            x = rng.lognormal(mean=0.0, sigma=0.25, size=500)
            x = x - x.min() + 1e-3
            params, _, _ = gpd_fit_mle(x, seed=seed)
            rep = gof_test(x, params, n_boot=99, seed=seed)
            rejected += rep.ad_p < 0.1
        assert rejected >= 8

    def test_p_values_are_bootstrap_multiples(self):
        x = sim_gpd(200, xi=0.1, sigma=2.0, seed=3)
        params, _, _ = gpd_fit_mle(x, seed=3)
        rep = gof_test(x, params, n_boot=99, seed=3)
        denom = rep.effective_n_boot + 1
        assert (rep.cm_p * denom) == pytest.approx(round(rep.cm_p * denom))
        assert (rep.ad_p * denom) == pytest.approx(round(rep.ad_p * denom))

    def test_rejects_small_n_boot(self):
        x = sim_gpd(100, xi=0.1, sigma=2.0, seed=4)
        params, _, _ = gpd_fit_mle(x, seed=4)
        with pytest.raises(EvtError):
            gof_test(x, params, n_boot=10)


class TestQqAccepted:
    def test_perfect_agreement(self):
        pairs = [(float(v), float(v)) for v in np.linspace(0.1, 10, 40)]
        assert qq_accepted(pairs)

    def test_gross_disagreement(self):
        pairs = [(2.0 * v, v) for v in np.linspace(0.1, 10, 40)]
        assert not qq_accepted(pairs)

    def test_floor_shields_near_zero_points(self):
        # tiny quantiles deviate wildly in relative terms but are absolutely
        # negligible next to the largest model quantile
        pairs = [(0.05, 0.01), (0.09, 0.03), (0.14, 0.06)] + [
            (float(v), float(v)) for v in np.linspace(1, 10, 37)]
        assert qq_accepted(pairs)
        assert not qq_accepted(pairs, floor=0.0)


class TestExtremalIndex:
    def test_runs_definition(self):
        assert runs_clusters([5, 6, 7, 20, 40, 41], r=1) == 3
        values = np.zeros(50)
        values[[5, 6, 7, 20, 40, 41]] = 10
        assert extremal_index(values, 5.0, method="runs") == pytest.approx(0.5)

    def test_mean_cluster_size_interpretation(self):
        assert 1 / 0.60 == pytest.approx(1.67, abs=0.01)

    def test_iid_series_near_one(self):
        rng = np.random.default_rng(6)
        values = rng.exponential(size=10_000)
        u = np.quantile(values, 0.95)
        assert extremal_index(values, u) == pytest.approx(1.0, abs=0.1)

    def test_needs_exceedances(self):
        with pytest.raises(EvtError):
            extremal_index(np.zeros(100), 1.0)


class TestQuantileSet:
    def test_thousand_observation_ladder(self):
        assert quantile_set(1000) == [0.77, 0.82, 0.87, 0.92, 0.97]

    def test_rule_application(self):
        assert quantile_set(600) == [0.75, 0.80, 0.85, 0.90, 0.95]

    def test_too_short_errors(self):
        with pytest.raises(EvtError):
            quantile_set(149)


class TestSelectByAic:
    def test_fairly_close_prefers_simpler(self):
        assert select_by_aic([("M2", 3656.0), ("M3", 3653.0),
                              ("M4", 3656.0)]) == "M2"

    def test_clear_minimum_wins(self):
        assert select_by_aic([("M2", 1774.0), ("M3", 2014.0),
                              ("M4", 2016.0)]) == "M2"

    def test_simpler_within_margin_of_minimum(self):
        assert select_by_aic([("M2", 100.0), ("M3", 80.0),
                              ("M4", 79.0)]) == "M3"

    def test_exhaustive_margin_rule(self):
        # brute-force check of the rule over a grid of AIC triples
        for a2 in range(90, 111, 5):
            for a3 in range(90, 111, 5):
                for a4 in range(90, 111, 5):
                    triple = [("M2", float(a2)), ("M3", float(a3)),
                              ("M4", float(a4))]
                    got = select_by_aic(triple)
                    amin = min(a2, a3, a4)
                    expected = next(v for v, a in triple if a - amin < 10)
                    assert got == expected

    def test_empty_errors(self):
        with pytest.raises(EvtError):
            select_by_aic([])


class TestReturnLevel:
    def _fit(self, params, threshold, zeta):
        return evt.GpdFit(params=params, threshold=threshold,
                          threshold_quantile=0.9, n_exceedances=100,
                          zeta=zeta, log_lik=0.0, aic=0.0)

    def test_arithmetic_example(self):
        fit = self._fit(GpdParams(variant="M1", xi=0.5, sigma=50.0), 100.0, 0.1)
        # 100 + (50/0.5)((40*0.1)^0.5 - 1) = 200
        assert return_level(fit, 40.0) == pytest.approx(200.0)

    def test_log_limit_branch(self):
        fit = self._fit(GpdParams(variant="M1", xi=0.0, sigma=1.0), 0.0, 1.0)
        assert return_level(fit, math.e) == pytest.approx(1.0)

    def test_calibration_on_simulated_tail(self):
        # choose m so the expected number of exceedances over 120 fresh
        # observations is 5, then check the binomial 95% band
        xi, sigma = 0.2, 10.0
        n_train, n_test = 5000, 120
        zeta = 0.1
        m = n_test / 5  # level exceeded once per m obs -> 5 expected in 120
        x = sim_gpd(int(n_train * zeta), xi=xi, sigma=sigma, seed=7)
        params, _, _ = gpd_fit_mle(x, seed=7)
        fit = self._fit(params, 100.0, zeta)
        level = return_level(fit, m)
        # fresh observations: exceed the threshold with probability zeta,
        # then draw the excess from the same tail
        rng = np.random.default_rng(8)
        exceed = 0
        for _ in range(n_test):
            if rng.uniform() < zeta:
                draw = 100.0 + sim_gpd(1, xi=xi, sigma=sigma, rng=rng)[0]
                exceed += draw > level
        # central 95% band of Binomial(120, 1/24): [1, 10]
        assert 1 <= exceed <= 10

    def test_rejects_bad_m(self):
        fit = self._fit(GpdParams(variant="M1", xi=0.1, sigma=1.0), 0.0, 0.1)
        with pytest.raises(EvtError):
            return_level(fit, 0.5)


class TestFitPipelines:
    def test_stationary_accepts_known_tail(self):
        # tail parameters taken from a published fit, used as ground truth
        series, _ = sim_composite(
            2000, base=dict(d=0.1, mu=30000.0, omega=2e6),
            tail=dict(xi=0.16, sigma=13553.5), tail_quantile=0.90, seed=1)
        fit = fit_stationary(series, n_boot=99, seed=0)
        assert fit is not None
        assert fit.threshold_quantile <= 0.95
        assert fit.params.variant == "M1"
        assert 0 < fit.theta <= 1.0
        assert fit.zeta == fit.n_exceedances / len(series)

    def test_short_series_errors(self):
        series = RateSeries(origin=0.0, counts=np.ones(100, dtype=int))
        with pytest.raises(EvtError):
            fit_stationary(series)

    def test_report_shape(self):
        series, _ = sim_composite(
            2000, base=dict(d=0.1, mu=30000.0, omega=2e6),
            tail=dict(xi=0.16, sigma=13553.5), tail_quantile=0.90, seed=1)
        fit = fit_stationary(series, n_boot=99, seed=0)
        report = fit.to_report()
        for key in ("variant", "q", "threshold", "xi", "sigma", "theta",
                    "n_exceedances", "aic", "gof", "qq"):
            assert key in report
