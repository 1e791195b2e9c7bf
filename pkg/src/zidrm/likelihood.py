"""Binomial and dual empirical log-likelihoods, and the expanded H-function.

All sums run over the pooled positives in the fixed order sample 0, then
sample 1. Likelihood values use compensated summation (``math.fsum``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (BasisFunction, DomainError, TwoSampleData, ZidrmError,
                   tilt_h0, tilt_h1)

LOG_MAX = math.log(np.finfo(float).max)


class OverflowGuard(ZidrmError, FloatingPointError):
    """exp(theta'Q(x)) is not representable for some observation."""


@dataclass(frozen=True)
class LikelihoodEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    # sum of |terms| of value; its rounding error is about eps * scale
    scale: float | None = None


def log1p_tilt(t, rho):
    """log{1 + rho(e^t - 1)} evaluated without overflow for large t."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    neg = t <= 0
    out[neg] = np.log1p(rho * np.expm1(t[neg]))
    tp = t[~neg]
    out[~neg] = tp + np.log(rho) + np.log1p((1 - rho) / rho * np.exp(-tp))
    return out


def _check_tilt(t):
    if not np.all(np.isfinite(t)):
        raise OverflowGuard("non-finite theta'Q(x)")
    top = float(np.max(t))
    if top > LOG_MAX:
        raise OverflowGuard(f"exp({top:.1f}) overflows double precision")


def ell0(data: TwoSampleData, nu) -> LikelihoodEval:
    """Binomial log-likelihood of the zero counts."""
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (2,) or np.any(nu <= 0) or np.any(nu >= 1):
        raise DomainError(f"nu={nu} must lie in (0, 1)^2")
    zeros = np.array([data.n00, data.n10], dtype=float)
    pos = np.array([data.n01, data.n11], dtype=float)
    value = math.fsum(zeros * np.log(nu) + pos * np.log1p(-nu))
    grad = zeros / nu - pos / (1 - nu)
    hess = np.diag(-zeros / nu**2 - pos / (1 - nu) ** 2)
    return LikelihoodEval(value, grad, hess)


class DualObjective:
    """The dual empirical log-likelihood ell_1(theta) with rho fixed at its
    estimate n11 / (n01 + n11).

    Q(x) for the pooled positives is computed once, so repeated evaluations
    inside Newton iterations only cost a matrix-vector product.
    """

    def __init__(self, data: TwoSampleData, basis: BasisFunction):
        self.data = data
        self.basis = basis
        self.rho = data.rho_hat
        self.Q = basis.Q(data.positives)
        if not np.all(np.isfinite(self.Q)):
            raise DomainError("basis returned non-finite values on the data")
        self.Q1_sum = self.Q[data.n01:].sum(axis=0)

    def tilt(self, theta) -> np.ndarray:
        return self.Q @ np.asarray(theta, dtype=float)

    def value(self, theta) -> float:
        t = self.tilt(theta)
        _check_tilt(t)
        return math.fsum(np.r_[-log1p_tilt(t, self.rho), t[self.data.n01:]])

    def __call__(self, theta) -> LikelihoodEval:
        t = self.tilt(theta)
        _check_tilt(t)
        terms = np.r_[-log1p_tilt(t, self.rho), t[self.data.n01:]]
        value = math.fsum(terms)
        h1 = tilt_h1(t, self.rho)
        h0 = tilt_h0(t, self.rho)
        grad = self.Q1_sum - self.Q.T @ h1
        hess = -(self.Q * (h0 * h1)[:, None]).T @ self.Q
        return LikelihoodEval(value, grad, 0.5 * (hess + hess.T),
                              float(np.sum(np.abs(terms))))


def ell1_dual(data: TwoSampleData, basis: BasisFunction, theta) -> LikelihoodEval:
    return DualObjective(data, basis)(theta)


def _h_parts(data, basis, nu, rho, theta):
    nu = np.asarray(nu, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if nu.shape != (2,) or np.any(nu <= 0) or np.any(nu >= 1):
        raise DomainError(f"nu={nu} must lie in (0, 1)^2")
    if not 0 < rho < 1:
        raise DomainError(f"rho={rho} must lie in (0, 1)")
    Q = basis.Q(data.positives)
    t = Q @ theta
    _check_tilt(t)
    return nu, theta, Q, t, tilt_h0(t, rho), tilt_h1(t, rho)


def h_function(data: TwoSampleData, basis: BasisFunction, nu, rho,
               theta) -> LikelihoodEval:
    """The expanded function H(nu, rho, theta), with rho a free coordinate.

    Gradient and Hessian are ordered eta = (nu0, nu1, rho, theta).
    """
    nu, theta, Q, t, h0, h1 = _h_parts(data, basis, nu, rho, theta)
    n01 = data.n01
    value = math.fsum(np.r_[
        data.n00 * np.log(nu[0]), data.n01 * np.log1p(-nu[0]),
        data.n10 * np.log(nu[1]), data.n11 * np.log1p(-nu[1]),
        -log1p_tilt(t, rho), t[n01:]])
    # (omega - 1) / h = h1/rho - h0/(1 - rho)
    dr = -np.sum(h1 / rho - h0 / (1 - rho))
    dth = Q[n01:].sum(axis=0) - Q.T @ h1
    g_nu = ell0(data, nu).gradient
    grad = np.r_[g_nu, dr, dth]
    blocks = h_second_derivatives(data, basis, nu, rho, theta)
    return LikelihoodEval(value, grad, assemble_h_hessian(blocks))


def h_second_derivatives(data: TwoSampleData, basis: BasisFunction, nu, rho,
                         theta) -> dict:
    """All blocks of the Hessian of H at (nu, rho, theta)."""
    nu, theta, Q, t, h0, h1 = _h_parts(data, basis, nu, rho, theta)
    d = theta.size
    ratio = h1 / rho - h0 / (1 - rho)
    # omega / h^2 = h0 h1 / (rho (1 - rho))
    om_h2 = h0 * h1 / (rho * (1 - rho))
    tt = -(Q * (h0 * h1)[:, None]).T @ Q
    return {
        "nu_nu": ell0(data, nu).hessian,
        "nu_rho": np.zeros((2, 1)),
        "nu_theta": np.zeros((2, d)),
        "rho_rho": np.array([[np.sum(ratio**2)]]),
        "theta_rho": -(Q.T @ om_h2)[:, None],
        "theta_theta": 0.5 * (tt + tt.T),
    }


def assemble_h_hessian(blocks: dict) -> np.ndarray:
    return np.block([
        [blocks["nu_nu"], blocks["nu_rho"], blocks["nu_theta"]],
        [blocks["nu_rho"].T, blocks["rho_rho"], blocks["theta_rho"].T],
        [blocks["nu_theta"].T, blocks["theta_rho"], blocks["theta_theta"]],
    ])
