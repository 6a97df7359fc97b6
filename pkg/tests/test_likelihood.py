import math

import numpy as np
import pytest
from scipy import optimize, stats

from oplda.distributions import Family, SeverityModel
from oplda.likelihood import (
    CensoredSample,
    FitConfig,
    TruncatedSample,
    fit,
    fit_censored,
    fit_truncated,
    loglik_censored,
    loglik_truncated,
)

FAST = FitConfig(restarts=1)


def truncated_draws(model, tau, n, rng):
    x = model.sample(int(n / float(model.sf(tau)) * 1.2) + 50, rng)
    return x[x > tau][:n]


@pytest.fixture
def ln_sample(rng):
    model = SeverityModel(Family.LOGNORMAL, (1.0, 0.8))
    tau = float(model.quantile(0.2))
    return model, TruncatedSample(truncated_draws(model, tau, 1500, rng), tau)


class TestLogLikelihoods:
    def test_truncated_matches_direct_sum(self, ln_sample):
        model, s = ln_sample
        ref = stats.lognorm(s=0.8, scale=math.e)
        expected = ref.logpdf(s.losses).sum() - s.n * math.log(ref.sf(s.threshold))
        assert loglik_truncated(model, s) == pytest.approx(expected, rel=1e-12)

    def test_censored_matches_direct_sum(self, ln_sample):
        model, s = ln_sample
        c = CensoredSample(s.losses, 321, s.threshold)
        ref = stats.lognorm(s=0.8, scale=math.e)
        expected = ref.logpdf(s.losses).sum() + 321 * math.log(ref.cdf(s.threshold))
        assert loglik_censored(model, c) == pytest.approx(expected, rel=1e-12)


class TestTruncatedFit:
    def test_lognormal_matches_independent_optimizer(self, ln_sample):
        _, s = ln_sample
        x, tau = s.losses, s.threshold

        def nll(v):
            d = stats.lognorm(s=math.exp(v[1]), scale=math.exp(v[0]))
            return -(d.logpdf(x).sum() - x.size * d.logsf(tau))

        ref = optimize.minimize(nll, [np.log(x).mean(), math.log(np.log(x).std())], method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 10000})
        res = fit_truncated(Family.LOGNORMAL, s, FAST)
        assert res.converged and not res.at_boundary
        np.testing.assert_allclose(res.params, [ref.x[0], math.exp(ref.x[1])], rtol=1e-4, atol=1e-4)
        assert res.loglik == pytest.approx(-ref.fun, abs=1e-6)
        assert res.threshold_prob == pytest.approx(float(res.model.cdf(tau)), rel=1e-12)

    def test_gpd_matches_scipy_fit(self, rng):
        tau = 2.0
        x = tau + stats.genpareto(c=0.3, scale=1.5).rvs(3000, random_state=rng)
        res = fit_truncated(Family.GPD, TruncatedSample(x, tau), FAST)
        c, _, scale = stats.genpareto.fit(x, floc=tau)
        assert res.params[0] == tau
        np.testing.assert_allclose(res.params[1:], [scale, c], rtol=2e-3)
        assert res.threshold_prob == 0.0
        assert res.n_params == 2

    def test_loglik_equals_model_loglik(self, ln_sample):
        _, s = ln_sample
        res = fit_truncated(Family.BURR, s, FAST)
        assert res.loglik == pytest.approx(loglik_truncated(res.model, s), rel=1e-10)

    def test_deterministic(self, ln_sample):
        _, s = ln_sample
        cfg = FitConfig(seed=9, restarts=2, fit_id="x")
        a = fit_truncated(Family.LOGLOGISTIC, s, cfg)
        b = fit_truncated(Family.LOGLOGISTIC, s, cfg)
        assert a.params == b.params and a.loglik == b.loglik

    def test_too_few_observations(self):
        with pytest.raises(ValueError):
            fit_truncated(Family.BURR, TruncatedSample([2.0, 3.0, 4.0], 1.0))

    def test_degenerate_sample_not_converged(self):
        res = fit_truncated(Family.LOGNORMAL, TruncatedSample([2.0] * 50, 1.0))
        assert not res.converged and res.params is None

    def test_sample_must_exceed_threshold(self):
        with pytest.raises(ValueError):
            TruncatedSample([1.0, 2.0], 1.0)

    def test_boundary_flag_for_misspecified_family(self, rng):
        burr = SeverityModel(Family.BURR, (0.07, 12.0, 1.1))
        s = TruncatedSample(truncated_draws(burr, 1.026, 3000, rng), 1.026)
        res = fit_truncated(Family.WEIBULL, s, FAST)
        assert res.at_boundary or not res.converged or res.threshold_prob > 0.5


class TestCensoredFit:
    def test_burr_matches_independent_optimizer(self, rng):
        burr = SeverityModel(Family.BURR, (0.5, 3.0, 2.0))
        full = burr.sample(3000, rng)
        tau = float(burr.quantile(0.1))
        s = CensoredSample(full[full > tau], int(np.sum(full <= tau)), tau)

        def nll(v):
            d = stats.burr12(c=math.exp(v[1]), d=math.exp(v[0]), scale=math.exp(v[2]))
            return -(d.logpdf(s.observed).sum() + s.below_count * d.logcdf(tau))

        ref = optimize.minimize(nll, np.log([0.5, 3.0, 2.0]), method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
        res = fit_censored(Family.BURR, s, FAST)
        assert res.converged
        np.testing.assert_allclose(res.params, np.exp(ref.x), rtol=1e-3)
        assert res.threshold_prob == pytest.approx(0.1, abs=0.02)

    def test_dispatch(self, rng):
        burr = SeverityModel(Family.BURR, (0.5, 3.0, 2.0))
        x = burr.sample(800, rng)
        s = CensoredSample(x[x > 1.0], int(np.sum(x <= 1.0)), 1.0)
        assert fit(Family.BURR, s, FAST).mode == "censored"


class TestSplicedFit:
    @pytest.mark.parametrize("family", [Family.SPLICED_LN_GPD, Family.SPLICED_LN_LN])
    def test_fit_on_own_data(self, family, rng):
        if family is Family.SPLICED_LN_GPD:
            p = (0.4, 0.5, 0.9, 0.4, 3.0, 0.8, 1.0)
        else:
            p = (0.4, 0.5, 1.2, 1.0, 3.0, 0.8, 1.0)
        m = SeverityModel(family, p)
        s = TruncatedSample(truncated_draws(m, 1.0, 3000, rng), 1.0)
        res = fit_truncated(family, s, FAST)
        assert res.params is not None
        xs, pb = res.params[4], res.params[5]
        assert pb == pytest.approx(np.mean(s.losses <= xs), abs=1e-12)
        assert res.params[6] == 1.0
        assert res.n_params == 5
        assert res.loglik == pytest.approx(loglik_truncated(res.model, s), rel=1e-9)
        assert res.threshold_prob == pytest.approx(float(m.cdf(1.0)), abs=0.05)

    def test_censored_spliced(self, rng):
        m = SeverityModel(Family.SPLICED_LN_GPD, (0.4, 0.5, 0.9, 0.4, 3.0, 0.8, 1.0))
        x = m.sample(3000, rng)
        s = CensoredSample(x[x > 1.0], int(np.sum(x <= 1.0)), 1.0)
        res = fit_censored(Family.SPLICED_LN_GPD, s, FAST)
        assert res.params is not None
        assert res.loglik == pytest.approx(loglik_censored(res.model, s), rel=1e-9)
