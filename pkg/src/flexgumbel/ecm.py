"""Maximum likelihood fitting of the FG mixture by expectation-conditional
maximization, with multi-start initialization and sandwich variance
estimation.

The M-step is replaced by four conditional maximizations: the weight has a
closed-form update (mean responsibility), while the mode and the two
scales are each updated by a safeguarded one-dimensional Newton search
(golden-section fallback) that never decreases the working objective.
Scales are optimized on the log scale so positivity needs no constraint
handling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distribution import FgParams, as_values, fg_logpdf, gumbel_max_logpdf, gumbel_min_logpdf

__all__ = [
    "EcmConfig",
    "FitResult",
    "BoundaryMleError",
    "SingularInformationError",
    "loglik_fg",
    "e_step",
    "cm_step",
    "fit_ecm",
    "sandwich_vcov",
    "sandwich_from_logpdf",
    "information_criteria",
]

#: lower bound for scale iterates; hitting it flags a degenerate fit
SCALE_FLOOR = 1e-8

_CBRT_EPS = float(np.finfo(float).eps) ** (1.0 / 3.0)


class BoundaryMleError(ValueError):
    """MLE sits on the parameter boundary; the sandwich estimator is not
    defined there.  Use a profile-likelihood or Bayesian interval instead."""


class SingularInformationError(RuntimeError):
    """Numerically singular average Hessian in the sandwich estimator."""

    def __init__(self, condition_number: float):
        super().__init__(
            f"average Hessian is numerically singular (condition number {condition_number:.3g})"
        )
        self.condition_number = condition_number


@dataclass(frozen=True)
class EcmConfig:
    """Tuning knobs for the ECM fit.

    ``tol`` is the relative change in observed-data log-likelihood below
    which a chain is declared converged; ``inner_tol`` controls the 1-D
    Newton searches in the CM-step.
    """

    max_iter: int = 1000
    tol: float = 1e-8
    n_starts: int = 10
    inner_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be > 0")


@dataclass(frozen=True)
class FitResult:
    """Outcome of an ECM fit: point estimates plus inference byproducts."""

    params: FgParams
    vcov: np.ndarray
    loglik: float
    aic: float
    bic: float
    converged: bool
    n_iter: int
    loglik_trace: np.ndarray
    responsibilities: np.ndarray
    n_obs: int
    warnings: tuple = ()

    @property
    def stderr(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.diag(self.vcov))


def loglik_fg(y, p: FgParams) -> float:
    """Observed-data log-likelihood of an FG parameter point."""
    return float(np.sum(fg_logpdf(as_values(y), p)))


def information_criteria(loglik: float, k: int, n: int) -> tuple[float, float]:
    """(AIC, BIC) for a fitted model with k free parameters on n points."""
    return -2.0 * loglik + 2.0 * k, -2.0 * loglik + k * math.log(n)


def e_step(y, current: FgParams) -> np.ndarray:
    """Responsibilities T_i = P(component 1 | y_i, current), in log space."""
    y = as_values(y)
    lp1 = gumbel_max_logpdf(y, current.theta, current.sigma1)
    lp2 = gumbel_min_logpdf(y, current.theta, current.sigma2)
    with np.errstate(divide="ignore"):
        a = np.log(current.w) + lp1
        b = np.log1p(-current.w) + lp2
    m = np.logaddexp(a, b)
    with np.errstate(invalid="ignore"):
        t = np.exp(a - m)
    # both component densities underflowing at once cannot happen for finite
    # data and valid parameters, but guard the 0/0 anyway
    t = np.where(np.isfinite(m), t, 0.5)
    return np.clip(t, 0.0, 1.0)


# ---------------------------------------------------------------------------
# 1-D safeguarded maximization used by the CM-step


def _golden_max(val, lo: float, hi: float, tol: float, max_iter: int = 200):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = val(c), val(d)
    for _ in range(max_iter):
        if b - a <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = val(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = val(d)
    return (c, fc) if fc >= fd else (d, fd)


def _newton_max(val, grad_hess, x0: float, max_step: float, tol: float,
                lo: float = -math.inf, hi: float = math.inf, max_iter: int = 60):
    """Maximize a smooth scalar function; the result never has a lower value
    than the starting point."""
    x = min(max(x0, lo), hi)
    fx = val(x)
    made_progress = False
    for _ in range(max_iter):
        g, h = grad_hess(x)
        if math.isfinite(g) and math.isfinite(h) and h < 0.0:
            step = -g / h
        elif math.isfinite(g) and g != 0.0:
            step = math.copysign(max_step, g)
        else:
            break
        step = min(max(step, -max_step), max_step)
        if abs(step) <= tol * (1.0 + abs(x)):
            break
        improved = False
        t = 1.0
        for _ in range(40):
            xn = min(max(x + t * step, lo), hi)
            fn = val(xn)
            if fn > fx:
                x, fx = xn, fn
                improved = made_progress = True
                break
            t *= 0.5
        if not improved:
            break
    if not made_progress and math.isfinite(x0):
        # safeguard: fall back to a golden-section search on a wide bracket
        a = max(lo, x - 4.0 * max_step)
        b = min(hi, x + 4.0 * max_step)
        xg, fg_ = _golden_max(val, a, b, tol)
        if fg_ > fx:
            return xg, fg_
    return x, fx


def _weighted_component_ll(r: np.ndarray, t: np.ndarray, s1: float, s2: float) -> float:
    # sum_i T_i log f1(r_i; s1) + (1 - T_i) log f2(r_i; s2), r = y - mode
    u1 = r / s1
    u2 = r / s2
    with np.errstate(over="ignore"):
        lp1 = -math.log(s1) - u1 - np.exp(-u1)
        lp2 = -math.log(s2) + u2 - np.exp(u2)
    with np.errstate(invalid="ignore"):
        a = np.where(t > 0.0, t * lp1, 0.0)
        b = np.where(t < 1.0, (1.0 - t) * lp2, 0.0)
    return float(np.sum(a) + np.sum(b))


def _update_theta(y, t, theta0, s1, s2, tol):
    def val(th):
        return _weighted_component_ll(y - th, t, s1, s2)

    def gh(th):
        u1 = (y - th) / s1
        u2 = (y - th) / s2
        with np.errstate(over="ignore"):
            e1 = np.exp(-u1)
            e2 = np.exp(u2)
        g = float(np.sum(t * (1.0 - e1)) / s1 + np.sum((1.0 - t) * (e2 - 1.0)) / s2)
        h = float(-(np.sum(t * e1) / s1**2 + np.sum((1.0 - t) * e2) / s2**2))
        return g, h

    x, _ = _newton_max(val, gh, theta0, max_step=4.0 * max(s1, s2), tol=tol)
    return x


def _update_sigma_max(r, t, s0, tol):
    """Update the max-Gumbel scale given residuals r = y - mode and weights t."""
    if float(np.sum(t)) < 1e-12:
        return s0
    def val(s_log):
        s = math.exp(s_log)
        u = r / s
        with np.errstate(over="ignore"):
            lp = -s_log - u - np.exp(-u)
        with np.errstate(invalid="ignore"):
            return float(np.sum(np.where(t > 0.0, t * lp, 0.0)))

    def gh(s_log):
        u = r / math.exp(s_log)
        with np.errstate(over="ignore"):
            e = np.exp(-u)
        g = float(np.sum(t * (u * (1.0 - e) - 1.0)))
        h = float(np.sum(t * (-u * (1.0 - e) - u * u * e)))
        return g, h

    s_log, _ = _newton_max(val, gh, math.log(s0), max_step=2.0, tol=tol, lo=math.log(SCALE_FLOOR))
    return math.exp(s_log)


def _update_sigma_min(r, t, s0, tol):
    """Update the min-Gumbel scale; weights are the complements 1 - T_i."""
    tc = 1.0 - t
    if float(np.sum(tc)) < 1e-12:
        return s0
    def val(s_log):
        s = math.exp(s_log)
        u = r / s
        with np.errstate(over="ignore"):
            lp = -s_log + u - np.exp(u)
        with np.errstate(invalid="ignore"):
            return float(np.sum(np.where(tc > 0.0, tc * lp, 0.0)))

    def gh(s_log):
        u = r / math.exp(s_log)
        with np.errstate(over="ignore"):
            e = np.exp(u)
        g = float(np.sum(tc * (u * (e - 1.0) - 1.0)))
        h = float(np.sum(tc * (-u * e - u * u * e + u)))
        return g, h

    s_log, _ = _newton_max(val, gh, math.log(s0), max_step=2.0, tol=tol, lo=math.log(SCALE_FLOOR))
    return math.exp(s_log)


def cm_step(y, t: np.ndarray, current: FgParams, inner_tol: float = 1e-10) -> FgParams:
    """One sweep of conditional maximizations of the working objective.

    Updates, in order: w (closed form), the mode (holding old scales), the
    max-scale (new mode, old min-scale) and the min-scale.
    """
    y = as_values(y)
    w = float(np.mean(t))
    theta = _update_theta(y, t, current.theta, current.sigma1, current.sigma2, inner_tol)
    r = y - theta
    s1 = _update_sigma_max(r, t, current.sigma1, inner_tol)
    s2 = _update_sigma_min(r, t, current.sigma2, inner_tol)
    return FgParams(theta, max(s1, SCALE_FLOOR), max(s2, SCALE_FLOOR), w)


# ---------------------------------------------------------------------------
# multi-start driver


def _mode_proxy(y: np.ndarray) -> float:
    hist, edges = np.histogram(y, bins="fd")
    i = int(np.argmax(hist))
    return 0.5 * (edges[i] + edges[i + 1])


def dispersed_starts(y: np.ndarray, cfg: EcmConfig) -> list[FgParams]:
    """Initial points covering both skew directions and a weight range."""
    qs = np.quantile(y, [0.25, 0.5, 0.75])
    s0 = max(float(np.std(y, ddof=1)) * math.sqrt(6.0) / math.pi, 10 * SCALE_FLOOR)
    base = [
        (qs[1], 0.5), (qs[0], 0.2), (qs[2], 0.8),
        (qs[0], 0.8), (qs[2], 0.2), (qs[1], 0.2),
        (qs[1], 0.8), (qs[0], 0.5), (qs[2], 0.5),
    ]
    starts = [FgParams(th, s0, s0, w) for th, w in base[: min(9, cfg.n_starts)]]
    rng = np.random.default_rng(cfg.seed)
    while len(starts) < cfg.n_starts:
        th = float(np.quantile(y, rng.uniform(0.1, 0.9)))
        starts.append(
            FgParams(
                th,
                s0 * math.exp(rng.normal(0.0, 0.5)),
                s0 * math.exp(rng.normal(0.0, 0.5)),
                rng.uniform(0.1, 0.9),
            )
        )
    return starts


def _run_chain(y: np.ndarray, start: FgParams, cfg: EcmConfig):
    p = start
    ll = loglik_fg(y, p)
    trace = [ll]
    t = np.full(y.size, p.w)
    converged = False
    n_iter = 0
    for n_iter in range(1, cfg.max_iter + 1):
        t = e_step(y, p)
        p = cm_step(y, t, p, cfg.inner_tol)
        ll_new = loglik_fg(y, p)
        trace.append(ll_new)
        if abs(ll_new - ll) <= cfg.tol * max(1.0, abs(ll)):
            ll = ll_new
            converged = True
            break
        ll = ll_new
    return p, ll, np.asarray(trace), converged, n_iter, t


def fit_ecm(y, cfg: EcmConfig | None = None) -> FitResult:
    """Multi-start ECM fit; the chain with the highest log-likelihood wins.

    Raises ``ValueError`` for fewer than 5 observations.  ``converged`` is
    False when no chain met the tolerance within ``max_iter``.
    """
    cfg = cfg or EcmConfig()
    y = as_values(y)
    n = y.size
    if n < 5:
        raise ValueError(f"need at least 5 observations to fit, got {n}")
    results = [_run_chain(y, s, cfg) for s in dispersed_starts(y, cfg)]
    proxy = _mode_proxy(y)

    def rank(res):
        p, ll = res[0], res[1]
        return (ll, -abs(p.theta - proxy))

    best = max(results, key=rank)
    p, ll, trace, converged, n_iter, t = best
    warnings_: list[str] = []
    if min(p.sigma1, p.sigma2) <= SCALE_FLOOR:
        warnings_.append("scale estimate clamped at lower bound; fit is degenerate")
    try:
        vcov = sandwich_vcov(y, p)
    except (BoundaryMleError, SingularInformationError) as exc:
        warnings_.append(f"sandwich variance unavailable: {exc}")
        vcov = np.full((4, 4), np.nan)
    aic, bic = information_criteria(ll, 4, n)
    return FitResult(
        params=p,
        vcov=vcov,
        loglik=ll,
        aic=aic,
        bic=bic,
        converged=converged,
        n_iter=n_iter,
        loglik_trace=trace,
        responsibilities=t,
        n_obs=n,
        warnings=tuple(warnings_),
    )


# ---------------------------------------------------------------------------
# sandwich variance


def sandwich_from_logpdf(per_obs_logpdf, x_hat, bounds=None) -> np.ndarray:
    """Generic sandwich estimate ``A^{-1} B A^{-T} / n``.

    ``per_obs_logpdf`` maps a parameter vector to the n-vector of
    observation-level log densities.  A is the negative average Hessian and
    B the average outer product of scores, both from central finite
    differences with steps ``cbrt(eps) * max(1, |x_j|)``.
    """
    x = np.asarray(x_hat, dtype=float)
    k = x.size
    f0 = np.asarray(per_obs_logpdf(x))
    n = f0.size
    h = _CBRT_EPS * np.maximum(1.0, np.abs(x))
    if bounds is not None:
        for j, (lo, hi) in enumerate(bounds):
            room = min(x[j] - lo, hi - x[j])
            if room <= 0:
                raise BoundaryMleError(
                    f"parameter {j} at boundary; use a profile-likelihood or Bayesian interval"
                )
            h[j] = min(h[j], 0.49 * room)

    def shifted(delta):
        return np.asarray(per_obs_logpdf(x + delta))

    scores = np.empty((n, k))
    sums_p = np.empty(k)
    sums_m = np.empty(k)
    eye = np.eye(k)
    for j in range(k):
        fp = shifted(h[j] * eye[j])
        fm = shifted(-h[j] * eye[j])
        scores[:, j] = (fp - fm) / (2.0 * h[j])
        sums_p[j], sums_m[j] = fp.sum(), fm.sum()

    hess = np.empty((k, k))
    l0 = f0.sum()
    for j in range(k):
        hess[j, j] = (sums_p[j] - 2.0 * l0 + sums_m[j]) / h[j] ** 2
    for j in range(k):
        for l in range(j + 1, k):
            fpp = shifted(h[j] * eye[j] + h[l] * eye[l]).sum()
            fpm = shifted(h[j] * eye[j] - h[l] * eye[l]).sum()
            fmp = shifted(-h[j] * eye[j] + h[l] * eye[l]).sum()
            fmm = shifted(-h[j] * eye[j] - h[l] * eye[l]).sum()
            hess[j, l] = hess[l, j] = (fpp - fpm - fmp + fmm) / (4.0 * h[j] * h[l])

    a = -hess / n
    a = 0.5 * (a + a.T)
    if not np.all(np.isfinite(a)):
        raise SingularInformationError(math.inf)
    cond = float(np.linalg.cond(a))
    if not math.isfinite(cond) or cond > 1e12:
        raise SingularInformationError(cond)
    b = scores.T @ scores / n
    a_inv = np.linalg.inv(a)
    v = a_inv @ b @ a_inv.T / n
    return 0.5 * (v + v.T)


_W_MARGIN = 1e-4


def sandwich_vcov(y, mle: FgParams) -> np.ndarray:
    """4x4 sandwich variance of (theta, sigma1, sigma2, w) at the MLE."""
    y = as_values(y)
    if not (_W_MARGIN < mle.w < 1.0 - _W_MARGIN):
        raise BoundaryMleError(
            f"w = {mle.w:.6f} is on the boundary of [0, 1]; "
            "use a profile-likelihood or Bayesian interval"
        )
    if min(mle.sigma1, mle.sigma2) < 100 * SCALE_FLOOR:
        raise BoundaryMleError("a scale estimate is at its lower bound")

    def per_obs(x):
        return fg_logpdf(y, FgParams(x[0], x[1], x[2], x[3]))

    bounds = [(-math.inf, math.inf), (0.0, math.inf), (0.0, math.inf), (0.0, 1.0)]
    return sandwich_from_logpdf(per_obs, mle.as_array(), bounds=bounds)
