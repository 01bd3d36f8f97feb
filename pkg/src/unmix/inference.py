"""Specification tests for the restriction pattern.

The J-test checks whether an overidentified pattern is compatible with the
data: n times the efficiently weighted objective at the optimum is
asymptotically chi-square with (number of moment conditions - d^2) degrees
of freedom.  The C-test compares a nested pair of patterns by the difference
of their J statistics, each computed under its own efficient weighting.

The chi-square distribution function is computed here from scratch via the
regularized lower incomplete gamma function (series for x < a + 1, Lentz
continued fraction otherwise), to keep the runtime dependency surface at
numpy only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from . import moments as moments_mod
from .estimator import EstimationResult, EstimatorOptions, RestrictionSpec, estimate

__all__ = [
    "regularized_gamma_p",
    "chi_square_cdf",
    "TestResult",
    "j_test",
    "c_test",
]

log = logging.getLogger(__name__)

_EPS = 1e-16
_MAX_ITER = 10_000
_ALPHAS = (0.01, 0.05, 0.10)


def regularized_gamma_p(a: float, x: float) -> float:
    """P(a, x) = gamma(a, x) / Gamma(a), the regularized lower incomplete gamma.

    Series expansion for x < a + 1, modified Lentz continued fraction for the
    upper tail otherwise.  Absolute error is well below 1e-12 over the
    parameter ranges used for chi-square p-values.
    """
    if a <= 0.0:
        raise ValueError(f"shape parameter must be positive, got {a}")
    if x < 0.0:
        raise ValueError(f"argument must be nonnegative, got {x}")
    if x == 0.0:
        return 0.0
    log_prefactor = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        # P(a,x) = prefactor * sum_k x^k / (a(a+1)...(a+k))
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        else:  # pragma: no cover - series always converges quickly here
            log.warning("incomplete gamma series hit the iteration cap")
        return min(1.0, math.exp(log_prefactor) * total)
    # Q(a,x) = prefactor / CF, CF by modified Lentz
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:  # pragma: no cover
        log.warning("incomplete gamma continued fraction hit the iteration cap")
    return max(0.0, 1.0 - math.exp(log_prefactor) * h)


def chi_square_cdf(x: float, k: int) -> float:
    """Distribution function of the chi-square law with k > 0 degrees of freedom."""
    if k < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {k}")
    if x <= 0.0:
        return 0.0
    return regularized_gamma_p(0.5 * k, 0.5 * x)


@dataclass
class TestResult:
    kind: str
    statistic: float
    dof: int
    p_value: float
    reject_at: dict = field(default_factory=dict)
    estimate: EstimationResult = None
    estimate_sub: EstimationResult = None

    def to_json_dict(self) -> dict:
        out = {
            "test": self.kind,
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "reject_at": {f"{a:.2f}": bool(r) for a, r in self.reject_at.items()},
        }
        if self.estimate is not None:
            out["estimate"] = self.estimate.to_json_dict()
        if self.estimate_sub is not None:
            out["estimate_restricted"] = self.estimate_sub.to_json_dict()
        return out


def _efficient_options(opts: EstimatorOptions) -> EstimatorOptions:
    from dataclasses import replace

    opts = opts or EstimatorOptions()
    if opts.weighting == "identity":
        opts = replace(opts, weighting="efficient")
    return opts


def _fitted_j_statistic(Y, spec: RestrictionSpec, opts: EstimatorOptions):
    est = estimate(Y, spec, opts)
    n = est.n_obs
    return n * est.objective, est


def j_test(Y, spec: RestrictionSpec, opts: EstimatorOptions = None,
           fitted: EstimationResult = None) -> TestResult:
    """Overidentification test of the pattern at the efficient estimate.

    ``fitted`` may supply a previously computed efficient fit (it must carry
    a covariance estimate); otherwise the estimation is run here.
    """
    dof = spec.n_moments - spec.d * spec.d
    if dof < 1:
        raise ValueError(
            f"J-test needs an overidentified pattern; got {spec.n_moments} "
            f"conditions for {spec.d * spec.d} parameters"
        )
    if fitted is not None:
        if fitted.Sigma_hat is None or fitted.n_obs is None:
            raise ValueError("fitted result must come from an efficiently weighted fit")
        stat, est = fitted.n_obs * fitted.objective, fitted
    else:
        Y = moments_mod.validate_data(Y)
        stat, est = _fitted_j_statistic(Y, spec, _efficient_options(opts))
    p = 1.0 - chi_square_cdf(stat, dof)
    return TestResult(
        kind="J", statistic=float(stat), dof=dof, p_value=p,
        reject_at={a: p <= a for a in _ALPHAS}, estimate=est,
    )


def c_test(Y, spec_full: RestrictionSpec, spec_sub: RestrictionSpec,
           opts: EstimatorOptions = None) -> TestResult:
    """Incremental test of the restrictions in spec_full beyond spec_sub.

    Both patterns are fitted with their own efficient weighting; the
    statistic is the difference of the scaled objectives, floored at zero,
    and is asymptotically chi-square with dof = (extra restrictions) under
    the full pattern.
    """
    if (spec_full.d, spec_full.r, spec_full.stat, spec_full.include_mean) != (
        spec_sub.d, spec_sub.r, spec_sub.stat, spec_sub.include_mean
    ):
        raise ValueError("nested specs must agree on d, r, statistic, and mean block")
    sub_idx = set(spec_sub.pattern.indices)
    full_idx = set(spec_full.pattern.indices)
    if not sub_idx < full_idx:
        raise ValueError("spec_sub must constrain a proper subset of spec_full's indices")
    full_targets = dict(zip(spec_full.pattern.indices, spec_full.pattern.targets))
    for idx, t in zip(spec_sub.pattern.indices, spec_sub.pattern.targets):
        if full_targets[idx] != t:
            raise ValueError(f"specs disagree on the target at index {idx}")
    dof = spec_full.pattern.size - spec_sub.pattern.size

    Y = moments_mod.validate_data(Y)
    opts = _efficient_options(opts)
    stat_full, est_full = _fitted_j_statistic(Y, spec_full, opts)
    stat_sub, est_sub = _fitted_j_statistic(Y, spec_sub, opts)
    stat = stat_full - stat_sub
    if stat < 0.0:
        log.info("C statistic %.3g is negative; clipping to zero", stat)
        stat = 0.0
    p = 1.0 - chi_square_cdf(stat, dof)
    return TestResult(
        kind="C", statistic=float(stat), dof=dof, p_value=p,
        reject_at={a: p <= a for a in _ALPHAS},
        estimate=est_full, estimate_sub=est_sub,
    )
