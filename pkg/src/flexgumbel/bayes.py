"""Bayesian inference for the FG mixture.

Data-augmented Metropolis-within-Gibbs sampler: latent component
indicators and the mixing weight have exact conjugate updates, while the
mode and the two scales move by normal random walks whose log ratios use
the component-marginalized FG likelihood.  Proposal scales adapt by
Robbins-Monro during burn-in only, targeting a ~23% acceptance rate, and
are frozen afterwards so the post-burn-in chain has the correct
stationary distribution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from .distribution import FgParams, as_values, gumbel_max_logpdf, gumbel_min_logpdf
from .ecm import EcmConfig, fit_ecm, information_criteria, loglik_fg

__all__ = [
    "PriorSpec",
    "McmcConfig",
    "PosteriorDraws",
    "gibbs_z_update",
    "gibbs_w_update",
    "mh_location_update",
    "mh_scale_update",
    "run_mcmc",
    "split_rhat",
    "ess_bulk",
    "PARAM_NAMES",
]

PARAM_NAMES = ("theta", "sigma1", "sigma2", "w")

_QUANTILE_KEYS = (("q2.5", 0.025), ("q5", 0.05), ("q50", 0.50), ("q95", 0.95), ("q97.5", 0.975))


@dataclass(frozen=True)
class PriorSpec:
    """Weakly informative priors: normal mode, inverse-gamma scales,
    uniform weight."""

    theta_mean: float = 0.0
    theta_var: float = 1e4
    sigma_shape: float = 1.0
    sigma_scale: float = 1.0

    def __post_init__(self) -> None:
        if not (self.theta_var > 0 and self.sigma_shape > 0 and self.sigma_scale > 0):
            raise ValueError("prior hyperparameters must be strictly positive")

    def log_theta(self, theta: float) -> float:
        d = theta - self.theta_mean
        return -0.5 * d * d / self.theta_var

    def log_sigma(self, sigma: float) -> float:
        if sigma <= 0:
            return -math.inf
        return -(self.sigma_shape + 1.0) * math.log(sigma) - self.sigma_scale / sigma

    def sample_theta(self, rng: np.random.Generator) -> float:
        return self.theta_mean + math.sqrt(self.theta_var) * rng.standard_normal()

    def sample_sigma(self, rng: np.random.Generator) -> float:
        return self.sigma_scale / rng.gamma(self.sigma_shape)


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 20000
    burn_in: int = 5000
    thin: int = 1
    n_chains: int = 4
    tau0: float = 1.0
    tau1: float = 1.0
    tau2: float = 1.0
    adapt: bool = True
    target_accept: float = 0.23
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if min(self.tau0, self.tau1, self.tau2) <= 0:
            raise ValueError("proposal sds must be > 0")
        if self.thin < 1 or self.n_chains < 1:
            raise ValueError("thin and n_chains must be >= 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must be in (0, 1)")


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained draws plus chain diagnostics and marginal summaries."""

    names: tuple
    chains: np.ndarray  # (n_chains, kept, k)
    accept_rates: dict
    rhat: np.ndarray
    ess_bulk: np.ndarray
    summaries: dict
    proposal_sds: dict
    seed: int

    @property
    def draws(self) -> np.ndarray:
        m, kept, k = self.chains.shape
        return self.chains.reshape(m * kept, k)

    def median_params(self) -> np.ndarray:
        return np.median(self.draws, axis=0)

    def point_estimate(self) -> FgParams:
        if tuple(self.names) != PARAM_NAMES:
            raise ValueError("point_estimate is only defined for distribution fits")
        return FgParams.from_array(self.median_params())

    def summary_rows(self) -> list:
        rows = []
        for i, name in enumerate(self.names):
            row = {"parameter": name}
            row.update(self.summaries[name])
            rows.append(row)
        return rows


# ---------------------------------------------------------------------------
# single Gibbs / MH moves


def _mix_ll(lp1, lp2, w: float) -> float:
    with np.errstate(divide="ignore"):
        a = (math.log(w) + lp1) if w > 0 else np.full(lp1.shape, -math.inf)
        b = (math.log1p(-w) + lp2) if w < 1 else np.full(lp2.shape, -math.inf)
    return float(np.sum(np.logaddexp(a, b)))


def gibbs_z_update(y, p: FgParams, rng: np.random.Generator) -> np.ndarray:
    """Latent component indicators z_i ~ Bernoulli(T_i)."""
    from .ecm import e_step

    y = as_values(y)
    t = e_step(y, p)
    return (rng.random(y.size) < t).astype(np.int64)


def gibbs_w_update(z, rng: np.random.Generator) -> float:
    """Exact conjugate draw w ~ Beta(1 + sum z, n + 1 - sum z)."""
    z = np.asarray(z)
    s = float(np.sum(z))
    n = z.size
    return float(rng.beta(1.0 + s, n + 1.0 - s))


def _log_accept_location(y, p: FgParams, theta_prop: float, prior: PriorSpec,
                         cur_loglik: float | None = None):
    cur_ll = loglik_fg(y, p) if cur_loglik is None else cur_loglik
    prop = FgParams(theta_prop, p.sigma1, p.sigma2, p.w)
    prop_ll = loglik_fg(y, prop)
    la = (prop_ll + prior.log_theta(theta_prop)) - (cur_ll + prior.log_theta(p.theta))
    return la, prop, prop_ll


def _log_accept_scale(y, p: FgParams, j: int, sigma_prop: float, prior: PriorSpec,
                      cur_loglik: float | None = None):
    if sigma_prop <= 0:
        return -math.inf, p, cur_loglik
    cur_ll = loglik_fg(y, p) if cur_loglik is None else cur_loglik
    cur_sigma = p.sigma1 if j == 1 else p.sigma2
    prop = FgParams(p.theta, sigma_prop if j == 1 else p.sigma1,
                    sigma_prop if j == 2 else p.sigma2, p.w)
    prop_ll = loglik_fg(y, prop)
    la = (prop_ll + prior.log_sigma(sigma_prop)) - (cur_ll + prior.log_sigma(cur_sigma))
    return la, prop, prop_ll


def mh_location_update(y, current: FgParams, tau0: float, rng: np.random.Generator,
                       prior: PriorSpec | None = None, cur_loglik: float | None = None):
    """Random-walk update of the mode; returns (params, accepted, loglik)."""
    prior = prior or PriorSpec()
    if tau0 <= 0:
        raise ValueError("tau0 must be > 0")
    theta_prop = current.theta + tau0 * rng.standard_normal()
    la, prop, prop_ll = _log_accept_location(y, current, theta_prop, prior, cur_loglik)
    if math.log(rng.random()) < la:
        return prop, True, prop_ll
    cur_ll = loglik_fg(y, current) if cur_loglik is None else cur_loglik
    return current, False, cur_ll


def mh_scale_update(y, current: FgParams, j: int, tau_j: float, rng: np.random.Generator,
                    prior: PriorSpec | None = None, cur_loglik: float | None = None):
    """Random-walk update of scale j in {1, 2}; non-positive proposals are
    rejected outright (zero prior support)."""
    prior = prior or PriorSpec()
    if j not in (1, 2):
        raise ValueError("scale index must be 1 or 2")
    if tau_j <= 0:
        raise ValueError("tau must be > 0")
    cur_sigma = current.sigma1 if j == 1 else current.sigma2
    sigma_prop = cur_sigma + tau_j * rng.standard_normal()
    if sigma_prop <= 0:
        cur_ll = loglik_fg(y, current) if cur_loglik is None else cur_loglik
        return current, False, cur_ll
    la, prop, prop_ll = _log_accept_scale(y, current, j, sigma_prop, prior, cur_loglik)
    if math.log(rng.random()) < la:
        return prop, True, prop_ll
    cur_ll = loglik_fg(y, current) if cur_loglik is None else cur_loglik
    return current, False, cur_ll


# ---------------------------------------------------------------------------
# full sampler


def _chain_starts(y: np.ndarray, cfg: McmcConfig, prior: PriorSpec) -> list:
    if y.size >= 5:
        mle = fit_ecm(y, EcmConfig(seed=cfg.seed, n_starts=6, max_iter=400)).params
        se = float(np.std(y, ddof=1)) / math.sqrt(y.size)
        offsets = [0.0, 3.0, -3.0, 1.5, -1.5, 4.5, -4.5, 2.0]
        starts = []
        for c in range(cfg.n_chains):
            off = offsets[c % len(offsets)]
            starts.append(
                FgParams(
                    mle.theta + off * se,
                    mle.sigma1 * math.exp(0.2 * math.copysign(1.0, off) * (abs(off) > 0)),
                    mle.sigma2 * math.exp(-0.2 * math.copysign(1.0, off) * (abs(off) > 0)),
                    min(max(mle.w + 0.04 * off, 0.02), 0.98),
                )
            )
        return starts
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x5747)))
    starts = []
    for _ in range(cfg.n_chains):
        starts.append(
            FgParams(
                prior.sample_theta(rng),
                min(max(prior.sample_sigma(rng), 1e-3), 1e3),
                min(max(prior.sample_sigma(rng), 1e-3), 1e3),
                rng.uniform(0.05, 0.95),
            )
        )
    return starts


def _run_single_chain(y, n, start: FgParams, prior: PriorSpec, cfg: McmcConfig,
                      rng: np.random.Generator, chain_index: int):
    theta, s1, s2, w = start.theta, start.sigma1, start.sigma2, start.w
    if n:
        lp1 = gumbel_max_logpdf(y, theta, s1)
        lp2 = gumbel_min_logpdf(y, theta, s2)
        ll = _mix_ll(lp1, lp2, w)
    else:
        lp1 = lp2 = None
        ll = 0.0
    if not math.isfinite(ll):
        raise RuntimeError(
            f"chain {chain_index}: non-finite log posterior at start {start}; aborted"
        )
    log_taus = [math.log(cfg.tau0), math.log(cfg.tau1), math.log(cfg.tau2)]
    accepts = np.zeros(3)
    proposals = np.zeros(3)
    kept = np.empty(((cfg.n_iter - cfg.burn_in) // cfg.thin, 4))
    ki = 0
    lt = prior.log_theta
    ls = prior.log_sigma
    for it in range(1, cfg.n_iter + 1):
        in_burn = it <= cfg.burn_in
        gamma = (it + 50.0) ** -0.7 if (cfg.adapt and in_burn) else 0.0
        # Step 1-2: latent indicators, then the conjugate weight draw
        if n:
            with np.errstate(divide="ignore"):
                a = math.log(w) + lp1 if w > 0 else np.full(n, -math.inf)
                b = math.log1p(-w) + lp2 if w < 1 else np.full(n, -math.inf)
            m = np.logaddexp(a, b)
            with np.errstate(invalid="ignore"):
                t = np.exp(a - m)
            t = np.where(np.isfinite(m), t, 0.5)
            z_sum = float(np.sum(rng.random(n) < t))
        else:
            z_sum = 0.0
        w = rng.beta(1.0 + z_sum, n + 1.0 - z_sum)
        if n:
            ll = _mix_ll(lp1, lp2, w)
        # Step 3: mode
        tau = math.exp(log_taus[0])
        th_prop = theta + tau * rng.standard_normal()
        if n:
            lp1_prop = gumbel_max_logpdf(y, th_prop, s1)
            lp2_prop = gumbel_min_logpdf(y, th_prop, s2)
            ll_prop = _mix_ll(lp1_prop, lp2_prop, w)
        else:
            lp1_prop = lp2_prop = None
            ll_prop = 0.0
        la = (ll_prop + lt(th_prop)) - (ll + lt(theta))
        acc = math.log(rng.random()) < la
        if acc:
            theta, lp1, lp2, ll = th_prop, lp1_prop, lp2_prop, ll_prop
        log_taus[0] += gamma * ((1.0 if acc else 0.0) - cfg.target_accept)
        if not in_burn:
            proposals[0] += 1
            accepts[0] += acc
        # Step 4: scales, non-positive proposals rejected outright
        for j in (1, 2):
            sig = s1 if j == 1 else s2
            tau = math.exp(log_taus[j])
            prop_sig = sig + tau * rng.standard_normal()
            if prop_sig <= 0:
                acc = False
            else:
                if n:
                    if j == 1:
                        lp_new = gumbel_max_logpdf(y, theta, prop_sig)
                        ll_prop = _mix_ll(lp_new, lp2, w)
                    else:
                        lp_new = gumbel_min_logpdf(y, theta, prop_sig)
                        ll_prop = _mix_ll(lp1, lp_new, w)
                else:
                    lp_new = None
                    ll_prop = 0.0
                la = (ll_prop + ls(prop_sig)) - (ll + ls(sig))
                acc = math.log(rng.random()) < la
                if acc:
                    if j == 1:
                        s1, lp1 = prop_sig, lp_new
                    else:
                        s2, lp2 = prop_sig, lp_new
                    ll = ll_prop
            log_taus[j] += gamma * ((1.0 if acc else 0.0) - cfg.target_accept)
            if not in_burn:
                proposals[j] += 1
                accepts[j] += acc
        if not in_burn and (it - cfg.burn_in) % cfg.thin == 0:
            kept[ki, 0] = theta
            kept[ki, 1] = s1
            kept[ki, 2] = s2
            kept[ki, 3] = w
            ki += 1
    rates = accepts / np.maximum(proposals, 1.0)
    taus = [math.exp(v) for v in log_taus]
    return kept[:ki], rates, taus


def run_mcmc(y, prior: PriorSpec | None = None, cfg: McmcConfig | None = None,
             init: list | None = None) -> PosteriorDraws:
    """Run the four-step Metropolis-within-Gibbs sampler.

    Multiple chains start from dispersed points (ECM candidates when data
    allow, prior draws otherwise).  An empty sample is allowed and makes
    the posterior equal the prior, which is useful for sampler validation.
    """
    prior = prior or PriorSpec()
    cfg = cfg or McmcConfig()
    y = as_values(y)
    n = y.size
    starts = list(init) if init is not None else _chain_starts(y, cfg, prior)
    if len(starts) < cfg.n_chains:
        raise ValueError(f"need {cfg.n_chains} starting points, got {len(starts)}")
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)
    all_kept = []
    all_rates = []
    all_taus = []
    for c in range(cfg.n_chains):
        rng = np.random.default_rng(seeds[c])
        kept, rates, taus = _run_single_chain(y, n, starts[c], prior, cfg, rng, c)
        all_kept.append(kept)
        all_rates.append(rates)
        all_taus.append(taus)
    chains = np.stack(all_kept)  # (m, kept, 4)
    rates = np.mean(all_rates, axis=0)
    taus = np.mean(all_taus, axis=0)
    rhat = np.array([split_rhat(chains[:, :, i]) for i in range(4)])
    ess = np.array([ess_bulk(chains[:, :, i]) for i in range(4)])
    pooled = chains.reshape(-1, 4)
    summaries = {}
    for i, name in enumerate(PARAM_NAMES):
        col = pooled[:, i]
        qs = {key: float(np.quantile(col, q)) for key, q in _QUANTILE_KEYS}
        sd = float(np.std(col, ddof=1))
        summaries[name] = {
            "mean": float(np.mean(col)),
            "se_mean": sd / math.sqrt(max(ess[i], 1.0)),
            "sd": sd,
            "median": qs["q50"],
            **qs,
            "rhat": float(rhat[i]),
            "ess_bulk": float(ess[i]),
        }
    return PosteriorDraws(
        names=PARAM_NAMES,
        chains=chains,
        accept_rates={"theta": float(rates[0]), "sigma1": float(rates[1]), "sigma2": float(rates[2])},
        rhat=rhat,
        ess_bulk=ess,
        summaries=summaries,
        proposal_sds={"theta": float(taus[0]), "sigma1": float(taus[1]), "sigma2": float(taus[2])},
        seed=cfg.seed,
    )


def bayes_information_criteria(y, draws: PosteriorDraws) -> tuple[float, float]:
    """(AIC, BIC) evaluated at the posterior-median parameter point."""
    p = draws.point_estimate()
    return information_criteria(loglik_fg(y, p), 4, as_values(y).size)


# ---------------------------------------------------------------------------
# convergence diagnostics


def split_rhat(x: np.ndarray) -> float:
    """Split-chain potential scale reduction factor for one parameter.

    ``x`` has shape (n_chains, n_draws); each chain is split in half.
    """
    x = np.asarray(x, dtype=float)
    m, n = x.shape
    half = n // 2
    if half < 2:
        return math.nan
    seqs = np.concatenate([x[:, :half], x[:, half: 2 * half]], axis=0)
    means = seqs.mean(axis=1)
    within = seqs.var(axis=1, ddof=1).mean()
    between = half * means.var(ddof=1)
    if within <= 0:
        return 1.0 if between <= 0 else math.inf
    var_plus = (half - 1) / half * within + between / half
    return math.sqrt(var_plus / within)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(xc, nfft)
    return np.fft.irfft(f * np.conj(f), nfft)[:n].real / n


def _ess_from_seqs(seqs: np.ndarray) -> float:
    m, n = seqs.shape
    acov = np.array([_autocov(s) for s in seqs])
    chain_var = acov[:, 0] * n / (n - 1.0)
    within = chain_var.mean()
    mean_acov = acov.mean(axis=0)
    if m > 1:
        between = n * seqs.mean(axis=1).var(ddof=1)
        var_plus = within * (n - 1.0) / n + between / n
    else:
        var_plus = within * (n - 1.0) / n
    if var_plus <= 0:
        return math.nan
    rho = 1.0 - (within - mean_acov) / var_plus
    # Geyer initial monotone positive sequence over lag pairs
    tau = 0.0
    prev = math.inf
    k = 0
    while 2 * k + 1 < rho.size:
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        tau += pair
        prev = pair
        k += 1
    tau = max(2.0 * tau - 1.0, 1e-12)
    return m * n / tau


def ess_bulk(x: np.ndarray) -> float:
    """Bulk effective sample size on rank-normalized split chains."""
    x = np.asarray(x, dtype=float)
    m, n = x.shape
    half = n // 2
    if half < 4:
        return math.nan
    seqs = np.concatenate([x[:, :half], x[:, half: 2 * half]], axis=0)
    r = rankdata(seqs.ravel(), method="average")
    z = ndtri((r - 0.375) / (r.size + 0.25)).reshape(seqs.shape)
    return _ess_from_seqs(z)
