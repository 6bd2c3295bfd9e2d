import math

import mpmath
import numpy as np
import pytest
from scipy import stats

from flexgumbel import FgParams, fg_sample
from flexgumbel.bayes import (
    McmcConfig,
    PosteriorDraws,
    PriorSpec,
    ess_bulk,
    gibbs_w_update,
    gibbs_z_update,
    mh_location_update,
    mh_scale_update,
    run_mcmc,
    split_rhat,
)
from flexgumbel.bayes import _log_accept_location, _log_accept_scale
from flexgumbel.ecm import e_step, loglik_fg


class StubRng:
    """Deterministic stand-in for a Generator in single-move tests."""

    def __init__(self, normal=0.0, uniform=0.5):
        self._normal = normal
        self._uniform = uniform

    def standard_normal(self):
        return self._normal

    def random(self, n=None):
        if n is None:
            return self._uniform
        return np.full(n, self._uniform)


def high_precision_loglik(y, p):
    with mpmath.workdps(60):
        total = mpmath.mpf(0)
        for v in y:
            u1 = (v - p.theta) / p.sigma1
            u2 = (v - p.theta) / p.sigma2
            f1 = mpmath.exp(-u1 - mpmath.exp(-u1)) / p.sigma1
            f2 = mpmath.exp(u2 - mpmath.exp(u2)) / p.sigma2
            total += mpmath.log(p.w * f1 + (1 - p.w) * f2)
        return float(total)


class TestZUpdate:
    def test_degenerate_weight(self):
        p = FgParams(0.0, 1.0, 1.0, 1.0)
        z = gibbs_z_update(np.linspace(-3, 3, 50), p, np.random.default_rng(0))
        assert np.all(z == 1)

    def test_fair_coin_at_mode(self):
        p = FgParams(2.0, 1.5, 1.5, 0.5)
        y = np.full(10**5, 2.0)
        z = gibbs_z_update(y, p, np.random.default_rng(1))
        assert np.mean(z) == pytest.approx(0.5, abs=0.005)

    def test_frequency_matches_responsibility(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            p = FgParams(rng.normal(), rng.uniform(0.5, 3), rng.uniform(0.5, 3), rng.uniform(0.2, 0.8))
            x = p.theta + rng.uniform(-4, 4)
            t = e_step(np.array([x]), p)[0]
            y = np.full(40000, x)
            z = gibbs_z_update(y, p, rng)
            assert np.mean(z) == pytest.approx(t, abs=0.01)


class TestWUpdate:
    def test_all_ones(self):
        rng = np.random.default_rng(3)
        draws = np.array([gibbs_w_update(np.ones(10), rng) for _ in range(20000)])
        assert draws.mean() == pytest.approx(11 / 12, abs=0.002)

    def test_all_zeros(self):
        rng = np.random.default_rng(4)
        draws = np.array([gibbs_w_update(np.zeros(10), rng) for _ in range(20000)])
        assert draws.mean() == pytest.approx(1 / 12, abs=0.002)

    def test_beta_variance(self):
        z = np.array([1] * 5 + [0] * 5)
        rng = np.random.default_rng(5)
        draws = np.array([gibbs_w_update(z, rng) for _ in range(40000)])
        # Beta(6,6) variance oracle
        assert draws.var() == pytest.approx(36 / (144 * 13), rel=0.05)

    def test_conjugacy_ks_calibration(self):
        z = np.array([1] * 5 + [0] * 5)
        rng = np.random.default_rng(6)
        draws = np.array([gibbs_w_update(z, rng) for _ in range(10**5)])
        pval = stats.kstest(draws, stats.beta(6, 6).cdf).pvalue
        assert pval > 0.01


class TestLocationMove:
    def test_zero_step_always_accepted(self):
        y = fg_sample(FgParams(0.0, 1.0, 2.0, 0.4), 50, seed=0).values
        p = FgParams(0.3, 1.0, 2.0, 0.4)
        new, accepted, _ = mh_location_update(y, p, tau0=1.0, rng=StubRng(normal=0.0, uniform=0.999999))
        assert accepted
        assert new.theta == p.theta

    def test_acceptance_ratio_против_oracle(self):
        rng = np.random.default_rng(7)
        y = fg_sample(FgParams(0.0, 1.0, 2.0, 0.4), 10, seed=1).values
        prior = PriorSpec()
        for _ in range(10):
            p = FgParams(rng.normal(), rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(0.2, 0.8))
            prop = p.theta + rng.normal()
            la, _, _ = _log_accept_location(y, p, prop, prior)
            expect = (high_precision_loglik(y, FgParams(prop, p.sigma1, p.sigma2, p.w))
                      + prior.log_theta(prop)) - (high_precision_loglik(y, p) + prior.log_theta(p.theta))
            assert la == pytest.approx(expect, abs=1e-8)

    def test_detailed_balance(self):
        # pi(a) q(a->b) alpha(a->b) == pi(b) q(b->a) alpha(b->a); q symmetric
        y = fg_sample(FgParams(0.0, 1.0, 2.0, 0.4), 25, seed=2).values
        prior = PriorSpec()
        a = FgParams(0.1, 1.0, 2.0, 0.4)
        b_theta = -0.7
        la_ab, b, _ = _log_accept_location(y, a, b_theta, prior)
        la_ba, _, _ = _log_accept_location(y, b, a.theta, prior)
        log_pi_a = loglik_fg(y, a) + prior.log_theta(a.theta)
        log_pi_b = loglik_fg(y, b) + prior.log_theta(b.theta)
        lhs = log_pi_a + min(la_ab, 0.0)
        rhs = log_pi_b + min(la_ba, 0.0)
        assert lhs == pytest.approx(rhs, abs=1e-10)


class TestScaleMove:
    def test_nonpositive_proposal_rejected(self):
        y = fg_sample(FgParams(0.0, 1.0, 2.0, 0.4), 30, seed=3).values
        p = FgParams(0.0, 0.5, 2.0, 0.4)
        # force the proposal to 0.5 + 10*(-0.1) < 0
        new, accepted, _ = mh_scale_update(y, p, j=1, tau_j=10.0, rng=StubRng(normal=-0.1, uniform=1e-12))
        assert not accepted
        assert new.sigma1 == p.sigma1

    def test_zero_step_accepted(self):
        y = fg_sample(FgParams(0.0, 1.0, 2.0, 0.4), 30, seed=3).values
        p = FgParams(0.0, 0.5, 2.0, 0.4)
        new, accepted, _ = mh_scale_update(y, p, j=2, tau_j=1.0, rng=StubRng(normal=0.0, uniform=0.999999))
        assert accepted

    def test_acceptance_ratio_oracle(self):
        rng = np.random.default_rng(8)
        y = fg_sample(FgParams(0.0, 1.0, 2.0, 0.4), 10, seed=4).values
        prior = PriorSpec()
        for j in (1, 2):
            p = FgParams(0.2, 1.1, 1.7, 0.45)
            prop = (p.sigma1 if j == 1 else p.sigma2) * rng.uniform(0.6, 1.6)
            la, new, _ = _log_accept_scale(y, p, j, prop, prior)
            cur_sigma = p.sigma1 if j == 1 else p.sigma2
            expect = (high_precision_loglik(y, new) + prior.log_sigma(prop)) - (
                high_precision_loglik(y, p) + prior.log_sigma(cur_sigma)
            )
            assert la == pytest.approx(expect, abs=1e-8)


class TestRunMcmc:
    def test_deterministic(self):
        y = fg_sample(FgParams(0.0, 1.0, 5.0, 0.5), 80, seed=5).values
        cfg = McmcConfig(n_iter=800, burn_in=300, n_chains=2, seed=11)
        a = run_mcmc(y, cfg=cfg)
        b = run_mcmc(y, cfg=cfg)
        np.testing.assert_array_equal(a.chains, b.chains)

    def test_draws_are_valid_params(self):
        y = fg_sample(FgParams(0.0, 1.0, 5.0, 0.5), 80, seed=6).values
        d = run_mcmc(y, cfg=McmcConfig(n_iter=1200, burn_in=400, n_chains=2, seed=0))
        pooled = d.draws
        assert np.all(pooled[:, 1] > 0) and np.all(pooled[:, 2] > 0)
        assert np.all((pooled[:, 3] >= 0) & (pooled[:, 3] <= 1))
        assert np.all(np.isfinite(pooled))

    def test_recovers_simulated_truth(self):
        y = fg_sample(FgParams(0.0, 1.0, 5.0, 0.5), 200, seed=1002).values
        d = run_mcmc(y, cfg=McmcConfig(n_iter=4000, burn_in=2000, seed=3))
        med = d.median_params()
        assert med[0] == pytest.approx(0.0, abs=0.5)
        assert med[2] == pytest.approx(5.0, abs=1.5)
        assert med[3] == pytest.approx(0.5, abs=0.2)
        assert np.all(d.rhat < 1.05)
        for rate in d.accept_rates.values():
            assert 0.15 <= rate <= 0.40

    def test_prior_recovery_with_empty_data(self):
        d = run_mcmc(np.array([]), cfg=McmcConfig(n_iter=12000, burn_in=2000, seed=9))
        pooled = d.draws
        # w is an exact Beta(1,1) draw each scan
        assert stats.kstest(pooled[:, 3], "uniform").pvalue > 0.01
        # theta follows its normal prior; thin the random walk before testing
        theta = pooled[::40, 0]
        assert stats.kstest(theta, stats.norm(0, 100).cdf).pvalue > 0.01
        sigma1 = pooled[::40, 1]
        assert stats.kstest(sigma1, stats.invgamma(1, scale=1).cdf).pvalue > 0.01

    def test_summaries_structure(self):
        y = fg_sample(FgParams(0.0, 1.0, 2.0, 0.4), 60, seed=7).values
        d = run_mcmc(y, cfg=McmcConfig(n_iter=1000, burn_in=400, n_chains=2, seed=1))
        s = d.summaries["theta"]
        for key in ("mean", "se_mean", "sd", "median", "q2.5", "q97.5", "rhat", "ess_bulk"):
            assert key in s
        assert s["q2.5"] <= s["median"] <= s["q97.5"]
        rows = d.summary_rows()
        assert [r["parameter"] for r in rows] == ["theta", "sigma1", "sigma2", "w"]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            McmcConfig(n_iter=100, burn_in=100)
        with pytest.raises(ValueError):
            McmcConfig(tau0=0.0)


class TestDiagnostics:
    def test_split_rhat_iid_near_one(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((4, 2000))
        assert split_rhat(x) == pytest.approx(1.0, abs=0.01)

    def test_split_rhat_detects_disjoint_chains(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((2, 1000))
        x[1] += 10.0
        assert split_rhat(x) > 2.0

    def test_split_rhat_detects_trend_within_chain(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((2, 1000)) + np.linspace(0, 6, 1000)
        assert split_rhat(x) > 1.2

    def test_ess_iid_close_to_sample_size(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((4, 2500))
        ess = ess_bulk(x)
        assert 0.75 * x.size <= ess <= 1.35 * x.size

    def test_ess_autocorrelated_is_smaller(self):
        rng = np.random.default_rng(14)
        m, n, rho = 4, 4000, 0.9
        x = np.empty((m, n))
        for c in range(m):
            e = rng.standard_normal(n)
            x[c, 0] = e[0]
            for t in range(1, n):
                x[c, t] = rho * x[c, t - 1] + math.sqrt(1 - rho**2) * e[t]
        ess = ess_bulk(x)
        # AR(1) with rho=0.9 has tau ~ (1+rho)/(1-rho) = 19
        assert ess < 0.15 * x.size
        assert ess == pytest.approx(x.size / 19.0, rel=0.5)
