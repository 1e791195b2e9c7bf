"""Wald intervals and tests built on the plug-in covariances, together with
the fully nonparametric baselines (I1 and its bootstrap version I1B).

Method labels:

I1   Wald interval for log(mean ratio) from sample moments, normal quantile
I1B  same statistic, critical value from a nonparametric bootstrap-t
I4   Wald interval for g(psi) from the MELE and Gamma_g_hat
I4L  Wald interval for ln g(psi), endpoints exponentiated
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import ndtri

from .asymptotics import SingularMatrix, gamma_g_hat, gamma_hat, spd_inverse
from .core import DimensionMismatch, TwoSampleData, ZidrmError
from .functionals import SmoothMap, UFunctional, builtin_u, estimate, log_of

METHODS = ("I1", "I1B", "I4", "I4L")
_VAR_TOL = 1e-12


class NegativeVariance(ZidrmError, ArithmeticError):
    pass


class NonPositivePhi(ZidrmError, ValueError):
    """A log-scale interval was requested for a nonpositive estimate."""


class SingularGamma(SingularMatrix):
    pass


class DivisionByZero(ZidrmError, ZeroDivisionError):
    pass


class DegenerateResample(ZidrmError):
    """Every bootstrap draw was degenerate."""


def z_quantile(gamma: float) -> float:
    """Upper gamma/2 point of N(0, 1)."""
    _check_level(gamma)
    return float(-ndtri(gamma / 2))


def _check_level(gamma):
    if not 0 < gamma < 1:
        raise ValueError(f"gamma={gamma} must lie in (0, 1)")


@dataclass(frozen=True)
class IntervalResult:
    lower: float
    upper: float
    method: str
    level: float
    se: float
    estimate: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0 < self.level < 1:
            raise ValueError(f"level={self.level} must lie in (0, 1)")
        if not self.lower <= self.upper:
            raise ValueError(f"lower={self.lower} exceeds upper={self.upper}")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return bool(self.lower < value < self.upper)

    def to_dict(self):
        return dict(method=self.method, level=self.level, estimate=self.estimate,
                    lower=self.lower, upper=self.upper, se=self.se,
                    meta=dict(self.meta))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int
    p_value: float
    reject_at: dict
    estimate: tuple = ()
    null_value: tuple = ()

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self):
        return dict(statistic=self.statistic, df=self.df, p_value=self.p_value,
                    reject_at={f"{k:g}": v for k, v in self.reject_at.items()},
                    estimate=list(self.estimate), null_value=list(self.null_value))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# -- DRM-based Wald inference ---------------------------------------------

def _scalar_variance(fit, u, g, cov):
    gg = float(gamma_g_hat(fit, u, g, gamma=cov)[0, 0])
    if gg < 0:
        # rounding noise around a zero variance is clipped, anything else is not
        if gg < -_VAR_TOL * max(1.0, float(np.max(np.abs(cov)))):
            raise NegativeVariance(f"estimated Gamma_g {gg:.3g} is negative")
        gg = 0.0
    return gg / fit.data.n


def wald_interval(fit, u: UFunctional, g: SmoothMap, gamma: float = 0.05,
                  log_transform: bool = False, cov: np.ndarray | None = None
                  ) -> IntervalResult:
    """I4 (or I4L with ``log_transform``) for the scalar phi = g(psi).

    ``cov`` may carry a precomputed Gamma_hat for ``u`` to avoid recomputing
    it for several maps. The reported ``se`` is on the scale the interval is
    built on, so it already includes the 1/sqrt(n) factor.
    """
    if g.q != 1:
        raise DimensionMismatch("wald_interval needs a scalar map (q = 1)")
    z = z_quantile(gamma)
    cov = gamma_hat(fit, u) if cov is None else cov
    _, val = estimate(fit, u, g)
    phi = float(val[0])
    if not log_transform:
        se = np.sqrt(_scalar_variance(fit, u, g, cov))
        return IntervalResult(phi - z * se, phi + z * se, "I4", 1 - gamma,
                              float(se), phi)
    if not phi > 0:
        raise NonPositivePhi(f"phi_hat={phi} must be > 0 for a log-scale interval")
    se = np.sqrt(_scalar_variance(fit, u, log_of(g), cov))
    lp = np.log(phi)
    return IntervalResult(float(np.exp(lp - z * se)), float(np.exp(lp + z * se)),
                          "I4L", 1 - gamma, float(se), phi, {"scale": "log"})


def wald_region_test(fit, u: UFunctional, g: SmoothMap, null_value,
                     gamma: float = 0.05, cov: np.ndarray | None = None,
                     levels=(0.10, 0.05, 0.01)) -> TestResult:
    """Wald test of H0: g(psi) = null_value against the chi-square(q)
    reference."""
    _check_level(gamma)
    null = np.atleast_1d(np.asarray(null_value, float))
    _, val = estimate(fit, u, g)
    if null.shape != val.shape:
        raise DimensionMismatch(f"null has shape {null.shape}, g returns {val.shape}")
    Gg = gamma_g_hat(fit, u, g, gamma=cov)
    inv = spd_inverse(Gg, "Gamma_g_hat", SingularGamma)
    diff = val - null
    stat = float(fit.data.n * diff @ inv @ diff)
    stat = max(stat, 0.0)
    p = float(stats.chi2.sf(stat, g.q))
    reject = {float(lv): bool(p < lv) for lv in sorted(set(levels) | {gamma},
                                                         reverse=True)}
    return TestResult(stat, g.q, p, reject, tuple(val.tolist()), tuple(null.tolist()))


@dataclass(frozen=True)
class DrmEstimates:
    mu0: float
    mu1: float
    delta: float
    var0: float
    var1: float


def drm_estimates(fit) -> DrmEstimates:
    """MELE-based means, mean ratio and variances of both populations."""
    psi, _ = estimate(fit, builtin_u("mean_and_m2"))
    m0, s0, m1, s1 = (float(v) for v in psi)
    return DrmEstimates(m0, m1, m1 / m0, s0 - m0 * m0, s1 - m1 * m1)


# -- nonparametric baselines ----------------------------------------------

@dataclass(frozen=True)
class NonparamEstimates:
    psi0: float
    psi1: float
    delta: float
    var0: float
    var1: float


def _sample_moments(x, n, label):
    if n < 2:
        raise DivisionByZero(f"{label} needs at least 2 observations for a variance")
    mean = float(np.sum(x)) / n
    # zeros contribute (0 - mean)^2 each
    ss = float(np.sum((x - mean) ** 2)) + (n - x.size) * mean * mean
    return mean, ss / (n - 1)


def nonparam_estimates(data: TwoSampleData, a: Callable | None = None
                       ) -> NonparamEstimates:
    """Sample means of a(X) over all observations (a(0) = 0) and sample
    variances with the n - 1 denominator. ``a`` defaults to the identity."""
    out = []
    for i, (x, n) in enumerate(((data.sample0_positive, data.n0),
                                (data.sample1_positive, data.n1))):
        ax = x if a is None else np.asarray(a(x), float).ravel()
        out.append(_sample_moments(ax, n, f"sample {i}"))
    (m0, v0), (m1, v1) = out
    delta = m1 / m0 if m0 != 0 else float("nan")
    return NonparamEstimates(m0, m1, delta, v0, v1)


def _log_ratio_stat(m0, v0, n0, m1, v1, n1):
    """log(m1/m0) and its delta-method standard error."""
    return np.log(m1) - np.log(m0), np.sqrt(v0 / (n0 * m0**2) + v1 / (n1 * m1**2))


def nonparam_log_ratio_interval(data: TwoSampleData, gamma: float = 0.05
                                ) -> IntervalResult:
    """I1: normal-quantile Wald interval for log(mu1/mu0) from sample
    moments, exponentiated."""
    z = z_quantile(gamma)
    est = nonparam_estimates(data)
    L, se = _log_ratio_stat(est.psi0, est.var0, data.n0, est.psi1, est.var1, data.n1)
    return IntervalResult(float(np.exp(L - z * se)), float(np.exp(L + z * se)),
                          "I1", 1 - gamma, float(se), est.delta, {"scale": "log"})


def _resample_moments(rng, x_full, B, max_attempts, counters):
    """Row-wise means and n-1 variances of B resamples of ``x_full``.

    Rows with no positive value or zero variance are redrawn, up to
    ``max_attempts`` times; rows still degenerate come back as NaN.
    """
    n = x_full.size
    draws = x_full[rng.integers(0, n, size=(B, n))]
    bad = ~_usable(draws)
    attempts = 0
    while bad.any() and attempts < max_attempts:
        idx = np.flatnonzero(bad)
        counters["redraws"] += idx.size
        draws[idx] = x_full[rng.integers(0, n, size=(idx.size, n))]
        bad[idx] = ~_usable(draws[idx])
        attempts += 1
    m = draws.mean(axis=1)
    v = draws.var(axis=1, ddof=1)
    m[bad] = np.nan
    v[bad] = np.nan
    return m, v


def _usable(draws):
    return np.any(draws > 0, axis=1) & (np.ptp(draws, axis=1) > 0)


def bootstrap_wald(data: TwoSampleData, estimator: Callable | None = None,
                   gamma: float = 0.05, B: int = 999, seed=0,
                   method: str = "symmetric",
                   max_attempts: int = 1000) -> IntervalResult:
    """I1B: bootstrap Wald-type interval for the mean ratio on the log scale.

    Each draw resamples both samples with replacement at their own sizes
    and recomputes the studentized statistic T* = (L* - L) / se*.

    ``"symmetric"``  L -/+ c se with c the 1 - gamma quantile of |T*|
    ``"t"``          equal-tailed: quantiles of T* reflected around L
    ``"percentile"`` quantiles of L* directly

    ``estimator(x0, x1) -> (L, se)`` replaces the default log mean ratio;
    it receives full samples (zeros included). A draw without positives in
    some sample, or with a constant sample, is redrawn (at most
    ``max_attempts`` times) and dropped with a warning after that.
    """
    _check_level(gamma)
    if B < 1:
        raise ValueError("B must be >= 1")
    if method not in ("symmetric", "t", "percentile"):
        raise ValueError(f"unknown bootstrap method {method!r}")
    rng = np.random.default_rng(seed)
    x0, x1 = data.full_sample(0), data.full_sample(1)
    n0, n1 = x0.size, x1.size
    counters = {"redraws": 0}
    if estimator is None:
        est = nonparam_estimates(data)
        L, se = _log_ratio_stat(est.psi0, est.var0, n0, est.psi1, est.var1, n1)
        point = est.delta
        m0, v0 = _resample_moments(rng, x0, B, max_attempts, counters)
        m1, v1 = _resample_moments(rng, x1, B, max_attempts, counters)
        with np.errstate(invalid="ignore"):
            Ls, ses = _log_ratio_stat(m0, v0, n0, m1, v1, n1)
    else:
        L, se = (float(v) for v in estimator(x0, x1))
        point = float(np.exp(L))
        Ls, ses = np.full(B, np.nan), np.full(B, np.nan)
        for b in range(B):
            for _ in range(max_attempts + 1):
                d0 = x0[rng.integers(0, n0, n0)]
                d1 = x1[rng.integers(0, n1, n1)]
                if _usable(d0[None])[0] and _usable(d1[None])[0]:
                    Ls[b], ses[b] = estimator(d0, d1)
                    break
                counters["redraws"] += 1
    ok = np.isfinite(Ls) & np.isfinite(ses) & (ses > 0)
    failed = int(B - ok.sum())
    if failed == B:
        raise DegenerateResample(f"all {B} bootstrap draws were degenerate")
    if failed:
        warnings.warn(f"{failed} bootstrap draw(s) excluded after "
                      f"{max_attempts} redraw attempts", RuntimeWarning, stacklevel=2)
    probs = [gamma / 2, 1 - gamma / 2]
    T = (Ls[ok] - L) / ses[ok]
    if method == "symmetric":
        c = np.quantile(np.abs(T), 1 - gamma)
        lo, hi = L - c * se, L + c * se
    elif method == "t":
        lo_q, hi_q = np.quantile(T, probs)
        lo, hi = L - hi_q * se, L - lo_q * se
    else:
        lo, hi = np.quantile(Ls[ok], probs)
    meta = {"B": int(B), "method": method,
            "redraws": counters["redraws"], "failed": failed, "scale": "log"}
    return IntervalResult(float(np.exp(lo)), float(np.exp(hi)), "I1B", 1 - gamma,
                          float(se), float(point), meta)
