"""Flexible Gumbel mixture modeling: distribution, ECM/Bayesian fitting, modal regression."""

from .distribution import (
    APERY,
    CONSTANTS,
    EULER_GAMMA,
    DataSample,
    FgParams,
    MathConstants,
    MomentSummary,
    as_values,
    fg_cdf,
    fg_logpdf,
    fg_median,
    fg_moments,
    fg_pdf,
    fg_quantile,
    fg_sample,
    gumbel_max_cdf,
    gumbel_max_logpdf,
    gumbel_max_pdf,
    gumbel_min_cdf,
    gumbel_min_logpdf,
    gumbel_min_pdf,
)

__version__ = "0.1.0"
