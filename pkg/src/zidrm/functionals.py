"""General linear functionals psi = int u(x; nu, theta) dG_0(x), their
MELEs, and smooth maps g(psi) with Jacobians for the delta method.

Array conventions for a :class:`UFunctional` evaluated at n positives:
``value`` -> (n, p), ``d_nu`` -> (n, p, 2), ``d_theta`` -> (n, p, d + 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DimensionMismatch, DomainError, ParamBundle


@dataclass(frozen=True)
class UFunctional:
    p: int
    value: Callable
    d_nu: Callable
    d_theta: Callable
    label: str = "custom"


@dataclass(frozen=True)
class SmoothMap:
    p: int
    q: int
    value: Callable
    jacobian: Callable
    label: str = "custom"

    def __call__(self, psi):
        return np.atleast_1d(np.asarray(self.value(np.asarray(psi, float)), float))

    def jac(self, psi):
        return np.asarray(self.jacobian(np.asarray(psi, float)),
                          float).reshape(self.q, self.p)


def _step(v):
    return np.maximum(1e-6, 1e-6 * np.abs(v))


def _with(params: ParamBundle, nu=None, theta=None) -> ParamBundle:
    return ParamBundle(params.nu if nu is None else nu, params.rho,
                       params.theta if theta is None else theta,
                       params.basis, allow_boundary=True)


def fd_d_nu(value: Callable, x, params: ParamBundle) -> np.ndarray:
    """Central-difference derivative of ``value`` in nu, shape (n, p, 2)."""
    cols = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = _step(params.nu[k])
        up = value(x, _with(params, nu=params.nu + e))
        dn = value(x, _with(params, nu=params.nu - e))
        cols.append((up - dn) / (2 * e[k]))
    return np.stack(cols, axis=-1)


def fd_d_theta(value: Callable, x, params: ParamBundle) -> np.ndarray:
    cols = []
    for k in range(params.theta.size):
        e = np.zeros(params.theta.size)
        e[k] = _step(params.theta[k])
        up = value(x, _with(params, theta=params.theta + e))
        dn = value(x, _with(params, theta=params.theta - e))
        cols.append((up - dn) / (2 * e[k]))
    return np.stack(cols, axis=-1)


def fd_jacobian(value: Callable, psi) -> np.ndarray:
    psi = np.asarray(psi, float)
    cols = []
    for k in range(psi.size):
        e = np.zeros(psi.size)
        e[k] = _step(psi[k])
        cols.append((np.atleast_1d(value(psi + e)) - np.atleast_1d(value(psi - e)))
                    / (2 * e[k]))
    return np.column_stack(cols)


def make_ufunctional(value: Callable, p: int, label: str = "custom",
                     d_nu: Callable | None = None,
                     d_theta: Callable | None = None) -> UFunctional:
    """Wrap a user integrand; missing derivatives fall back to central
    finite differences."""
    d_nu = d_nu or (lambda x, prm: fd_d_nu(value, x, prm))
    d_theta = d_theta or (lambda x, prm: fd_d_theta(value, x, prm))
    return UFunctional(p, value, d_nu, d_theta, label)


def make_smooth_map(value: Callable, p: int, q: int, label: str = "custom",
                    jacobian: Callable | None = None) -> SmoothMap:
    jacobian = jacobian or (lambda psi: fd_jacobian(value, psi))
    return SmoothMap(p, q, value, jacobian, label)


def linear_functional_u(a: Callable, m: int, label: str = "a") -> UFunctional:
    """u = ((1 - nu0) a(x), (1 - nu1) a(x) omega(x; theta)), so that
    psi = (int a dF_0, int a dF_1). ``a`` maps n positives to (n, m)."""

    def _a(x):
        return np.asarray(a(np.asarray(x, float)), float).reshape(-1, m)

    def value(x, prm):
        ax = _a(x)
        om = prm.omega(x)[:, None]
        return np.hstack([(1 - prm.nu[0]) * ax, (1 - prm.nu[1]) * ax * om])

    def d_nu(x, prm):
        ax = _a(x)
        om = prm.omega(x)[:, None]
        out = np.zeros((ax.shape[0], 2 * m, 2))
        out[:, :m, 0] = -ax
        out[:, m:, 1] = -ax * om
        return out

    def d_theta(x, prm):
        ax = _a(x)
        Q = prm.basis.Q(x)
        om = np.exp(Q @ prm.theta)
        out = np.zeros((ax.shape[0], 2 * m, Q.shape[1]))
        out[:, m:, :] = ((1 - prm.nu[1]) * ax * om[:, None])[:, :, None] * Q[:, None, :]
        return out

    return UFunctional(2 * m, value, d_nu, d_theta, label)


def builtin_u(which: str, k: int = 1) -> UFunctional:
    """Integrands for the built-in functionals.

    moment_k        psi = (mu0^(k), mu1^(k))
    mean_pair       psi = (mu0, mu1)
    mean_and_m2     psi = (mu0, mu0^(2), mu1, mu1^(2))
    mean_and_xlogx  psi = (mu0, E0[X log X], mu1, E1[X log X])
    """
    if which == "moment_k":
        if k < 1:
            raise ValueError("k must be >= 1")
        return linear_functional_u(lambda x: x**k, 1, f"moment_{k}")
    if which == "mean_pair":
        return linear_functional_u(lambda x: x, 1, "mean_pair")
    if which == "mean_and_m2":
        return linear_functional_u(lambda x: np.column_stack([x, x * x]), 2,
                                   "mean_and_m2")
    if which == "mean_and_xlogx":
        return linear_functional_u(
            lambda x: np.column_stack([x, x * np.log(x)]), 2, "mean_and_xlogx")
    raise ValueError(f"unknown functional {which!r}")


U_NAMES = ("moment_k", "mean_pair", "mean_and_m2", "mean_and_xlogx")


# -- smooth maps ------------------------------------------------------------

def _positive(*vals):
    for v in vals:
        if not v > 0:
            raise DomainError(f"map argument {v} must be > 0")


def _ratio(psi):
    _positive(psi[0])
    return np.array([psi[1] / psi[0]])


def _ratio_jac(psi):
    _positive(psi[0])
    return np.array([[-psi[1] / psi[0] ** 2, 1 / psi[0]]])


def _log_ratio(psi):
    _positive(psi[0], psi[1])
    return np.array([np.log(psi[1]) - np.log(psi[0])])


def _log_ratio_jac(psi):
    _positive(psi[0], psi[1])
    return np.array([[-1 / psi[0], 1 / psi[1]]])


def _var(m1, m2):
    return m2 - m1 * m1


def _variance_pair(psi):
    return np.array([_var(psi[0], psi[1]), _var(psi[2], psi[3])])


def _variance_pair_jac(psi):
    return np.array([[-2 * psi[0], 1, 0, 0], [0, 0, -2 * psi[2], 1]])


def _cv(m1, m2):
    v = _var(m1, m2)
    if not (m1 > 0 and v > 0):
        raise DomainError(f"CV needs mean > 0 and variance > 0 (got {m1}, {v})")
    return np.sqrt(v) / m1


def _cv_grad(m1, m2):
    s = np.sqrt(_var(m1, m2))
    # d/dm1 [s / m1] with ds/dm1 = -m1 / s
    return np.array([-1 / s - s / m1**2, 1 / (2 * s * m1)])


def _cv_pair(psi):
    return np.array([_cv(psi[0], psi[1]), _cv(psi[2], psi[3])])


def _cv_pair_jac(psi):
    _cv_pair(psi)
    j = np.zeros((2, 4))
    j[0, :2] = _cv_grad(psi[0], psi[1])
    j[1, 2:] = _cv_grad(psi[2], psi[3])
    return j


def _ge1(m1, mxlogx):
    _positive(m1)
    return mxlogx / m1 - np.log(m1)


def _ge1_pair(psi):
    return np.array([_ge1(psi[0], psi[1]), _ge1(psi[2], psi[3])])


def _ge1_grad(m1, mxlogx):
    _positive(m1)
    return np.array([-mxlogx / m1**2 - 1 / m1, 1 / m1])


def _ge1_pair_jac(psi):
    j = np.zeros((2, 4))
    j[0, :2] = _ge1_grad(psi[0], psi[1])
    j[1, 2:] = _ge1_grad(psi[2], psi[3])
    return j


def _diff(pair_value, pair_jac, label):
    return SmoothMap(
        4, 1,
        lambda psi: np.array([pair_value(psi)[1] - pair_value(psi)[0]]),
        lambda psi: (pair_jac(psi)[1] - pair_jac(psi)[0])[None, :],
        label)


_G_BUILDERS = {
    "ratio": lambda: SmoothMap(2, 1, _ratio, _ratio_jac, "ratio"),
    "log_ratio": lambda: SmoothMap(2, 1, _log_ratio, _log_ratio_jac, "log_ratio"),
    "variance_pair": lambda: SmoothMap(4, 2, _variance_pair, _variance_pair_jac,
                                       "variance_pair"),
    "variance_diff": lambda: _diff(_variance_pair, _variance_pair_jac,
                                   "variance_diff"),
    "cv_pair": lambda: SmoothMap(4, 2, _cv_pair, _cv_pair_jac, "cv_pair"),
    "cv_diff": lambda: _diff(_cv_pair, _cv_pair_jac, "cv_diff"),
    "ge1_pair": lambda: SmoothMap(4, 2, _ge1_pair, _ge1_pair_jac, "ge1_pair"),
    "ge1_diff": lambda: _diff(_ge1_pair, _ge1_pair_jac, "ge1_diff"),
}

G_NAMES = tuple(_G_BUILDERS)


def builtin_g(which: str) -> SmoothMap:
    """Named smooth maps. Pair maps act on the 4-vectors produced by
    ``mean_and_m2`` (variance, CV) or ``mean_and_xlogx`` (GE(1)); the
    ``*_diff`` variants return sample 1 minus sample 0."""
    try:
        return _G_BUILDERS[which]()
    except KeyError:
        raise ValueError(f"unknown map {which!r}") from None


def identity_map(p: int) -> SmoothMap:
    return SmoothMap(p, p, lambda psi: np.asarray(psi, float),
                     lambda psi: np.eye(p), "identity")


def component_map(p: int, i: int) -> SmoothMap:
    """psi -> psi[i]."""
    e = np.zeros((1, p))
    e[0, i] = 1.0
    return SmoothMap(p, 1, lambda psi: np.array([psi[i]]), lambda psi: e,
                     f"component_{i}")


def log_of(g: SmoothMap) -> SmoothMap:
    """ln g(psi) for a scalar map g."""
    if g.q != 1:
        raise DimensionMismatch("log_of needs a scalar map")

    def value(psi):
        v = g(psi)[0]
        _positive(v)
        return np.array([np.log(v)])

    def jac(psi):
        v = g(psi)[0]
        _positive(v)
        return g.jac(psi) / v

    return SmoothMap(g.p, 1, value, jac, f"log({g.label})")


# -- estimation -------------------------------------------------------------

def u_matrix(fit, u: UFunctional) -> np.ndarray:
    U = np.asarray(u.value(fit.x, fit.params), float)
    if U.shape != (fit.x.size, u.p):
        raise DimensionMismatch(
            f"u returned shape {U.shape}, expected {(fit.x.size, u.p)}")
    return U


def psi_hat(fit, u: UFunctional) -> np.ndarray:
    """sum_ij p_ij u(X_ij; nu_hat, theta_hat)."""
    return fit.weights @ u_matrix(fit, u)


def estimate(fit, u: UFunctional, g: SmoothMap | None = None):
    """Return (psi_hat, g(psi_hat)); g defaults to the identity."""
    psi = psi_hat(fit, u)
    if g is None:
        return psi, psi.copy()
    if g.p != u.p:
        raise DimensionMismatch(f"map expects p={g.p}, functional has p={u.p}")
    return psi, g(psi)
