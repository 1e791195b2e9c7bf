"""Maximum empirical likelihood fit of the two-sample DRM.

nu has a closed form; theta maximizes the dual log-likelihood by a damped
Newton iteration started from theta = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .core import (BasisFunction, ParamBundle, TwoSampleData, ZidrmError,
                   tilt_h0, tilt_h1)
from .likelihood import DualObjective, LikelihoodEval, OverflowGuard

_EPS = np.finfo(float).eps


class NonConvergence(ZidrmError):
    """Raised when Newton ascent stops before reaching ``grad_tol``.

    ``best`` holds the best iterate found (a vector from
    :func:`newton_ascend`, a :class:`DrmFit` from :func:`fit`).
    """

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class SeparationSuspected(NonConvergence):
    """theta drifts off to infinity: the two samples look separable in q(x)."""


@dataclass(frozen=True)
class SolverOptions:
    grad_tol: float = 1e-10
    max_iter: int = 200
    separation_bound: float = 50.0
    saturation_tol: float = 1e-8
    armijo: float = 1e-4
    shrink: float = 0.5


@dataclass(frozen=True)
class NewtonResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    steepest_steps: int = 0


def _newton_direction(hess, grad):
    """Solve (-H) d = g by Cholesky, shifting the diagonal when needed."""
    neg = -hess
    scale = max(np.linalg.norm(neg, ord=np.inf), 1.0)
    shift = 0.0
    for _ in range(8):
        try:
            c = linalg.cho_factor(neg + shift * np.eye(len(grad)))
            d = linalg.cho_solve(c, grad)
            if np.all(np.isfinite(d)):
                return d
        except linalg.LinAlgError:
            pass
        shift = 1e-8 * scale if shift == 0 else shift * 10
    return None


def newton_ascend(objective: Callable[[np.ndarray], LikelihoodEval], theta0,
                  opts: SolverOptions | None = None,
                  value: Callable[[np.ndarray], float] | None = None) -> NewtonResult:
    """Maximize ``objective`` by Newton steps with Armijo backtracking.

    Falls back to steepest ascent when the Newton system cannot be solved
    or does not give an ascent direction. Once the predicted gain of a
    Newton step falls below the rounding level of the objective, the full
    step is taken without a line search. That level is ``ev.scale`` (the
    summed magnitude of the objective's terms) when the objective reports
    one, else ``|value|``. If backtracking finds no gain at all, the full
    step is taken when it reduces the gradient.

    Raises
    ------
    NonConvergence
        if ``max_iter`` iterations pass without ``|grad|_inf <= grad_tol``;
        the exception's ``best`` attribute holds the last iterate.
    """
    opts = opts or SolverOptions()
    value = value or (lambda th: objective(th).value)
    theta = np.array(theta0, dtype=float)
    ev = objective(theta)
    steepest = 0
    for it in range(opts.max_iter + 1):
        gnorm = float(np.max(np.abs(ev.gradient)))
        if gnorm <= opts.grad_tol:
            return NewtonResult(theta, ev.value, gnorm, it, True, steepest)
        if it == opts.max_iter:
            break
        d = _newton_direction(ev.hessian, ev.gradient)
        if d is None or ev.gradient @ d <= 0:
            d = ev.gradient.copy()
            steepest += 1
        slope = float(ev.gradient @ d)
        if slope <= 8 * _EPS * max(1.0, ev.scale or abs(ev.value)):
            theta = theta + d
            ev = objective(theta)
            continue
        step = 1.0
        while step > 1e-20:
            cand = theta + step * d
            try:
                v = value(cand)
            except OverflowGuard:
                v = -np.inf
            # strict: a float tie would otherwise accept a vanishing step
            if v > ev.value + opts.armijo * step * slope:
                break
            step *= opts.shrink
        else:
            # no measurable gain anywhere along d: the objective is at its
            # rounding floor. The full step is still taken if it shrinks
            # the gradient.
            try:
                full = objective(theta + d)
            except OverflowGuard:
                break
            if not np.max(np.abs(full.gradient)) < gnorm:
                break
            theta, ev = theta + d, full
            continue
        theta = cand
        ev = objective(theta)
    gnorm = float(np.max(np.abs(ev.gradient)))
    res = NewtonResult(theta, ev.value, gnorm, it, False, steepest)
    raise NonConvergence(
        f"Newton ascent stopped after {it} iterations with |grad|={gnorm:.3g}",
        best=res)


@dataclass(frozen=True)
class FitDiagnostics:
    iterations: int
    grad_norm: float
    converged: bool
    boundary: bool
    steepest_steps: int = 0

    def to_dict(self):
        return dict(iterations=self.iterations, grad_norm=self.grad_norm,
                    converged=self.converged, boundary=self.boundary,
                    steepest_steps=self.steepest_steps)


@dataclass(frozen=True, eq=False)
class DrmFit:
    """Fitted DRM: (nu, rho, theta), the baseline weights p_ij and the
    estimated CDFs of both positive components."""

    data: TwoSampleData
    basis: BasisFunction
    nu: np.ndarray
    rho: float
    theta: np.ndarray
    diagnostics: FitDiagnostics
    Q: np.ndarray = field(repr=False)
    h0: np.ndarray = field(repr=False)
    h1: np.ndarray = field(repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.data.positives

    @property
    def n_pos(self) -> int:
        return self.data.n01 + self.data.n11

    @property
    def weights(self) -> np.ndarray:
        """p_ij = 1 / [N {1 + rho(omega - 1)}], N the number of positives."""
        return self.h0 / ((1 - self.rho) * self.n_pos)

    @property
    def tilted_weights(self) -> np.ndarray:
        """p_ij * omega(X_ij): the jumps of the estimated G_1."""
        return self.h1 / (self.rho * self.n_pos)

    @property
    def omega(self) -> np.ndarray:
        return np.exp(self.Q @ self.theta)

    @property
    def w(self) -> float:
        return self.data.w

    @property
    def delta(self) -> float:
        w = self.w
        return w * (1 - self.nu[0]) + (1 - w) * (1 - self.nu[1])

    @property
    def boundary(self) -> bool:
        return self.diagnostics.boundary

    @property
    def params(self) -> ParamBundle:
        return ParamBundle(self.nu, self.rho, self.theta, self.basis,
                           allow_boundary=True)

    @property
    def bundle(self) -> ParamBundle:
        """Interior parameter bundle; raises BoundaryNu on boundary fits."""
        return ParamBundle(self.nu, self.rho, self.theta, self.basis)

    def _jumps(self, mass):
        xs, inv = np.unique(self.x, return_inverse=True)
        return xs, np.bincount(inv.ravel(), weights=mass, minlength=xs.size)

    @property
    def g0_jumps(self):
        """(support, mass) of the estimated G_0, support sorted."""
        return self._jumps(self.weights)

    @property
    def g1_jumps(self):
        return self._jumps(self.tilted_weights)

    def cdf0(self, x):
        xs, m = self.g0_jumps
        return np.r_[0.0, np.cumsum(m)][np.searchsorted(xs, x, side="right")]

    def cdf1(self, x):
        xs, m = self.g1_jumps
        return np.r_[0.0, np.cumsum(m)][np.searchsorted(xs, x, side="right")]

    def constraint_residuals(self):
        """(|sum p - 1|, |sum p omega - 1|)."""
        return (abs(np.sum(self.weights) - 1),
                abs(np.sum(self.weights * self.omega) - 1))


def _make_fit(data, basis, obj, theta, it, gnorm, converged, steepest):
    t = obj.tilt(theta)
    nu = data.nu_hat
    boundary = bool(np.any(nu <= 0) or np.any(nu >= 1))
    diag = FitDiagnostics(it, gnorm, converged, boundary, steepest)
    return DrmFit(data, basis, nu, data.rho_hat, np.asarray(theta, float), diag,
                  obj.Q, tilt_h0(t, obj.rho), tilt_h1(t, obj.rho))


def fit(data: TwoSampleData, basis: BasisFunction,
        opts: SolverOptions | None = None) -> DrmFit:
    """Compute the MELE of (nu, rho, theta) and the weights p_ij.

    A sample with no zeros (or only zeros) gives a boundary nu; the fit is
    still returned, flagged in ``diagnostics.boundary``, and every
    variance routine refuses it.

    SeparationSuspected is raised when theta runs past
    ``opts.separation_bound`` or when every fitted h0*h1 falls below
    ``opts.saturation_tol`` (the dual likelihood then has no finite
    maximizer).
    """
    opts = opts or SolverOptions()
    obj = DualObjective(data, basis)
    theta0 = np.zeros(basis.dim + 1)
    try:
        res = newton_ascend(obj, theta0, opts, value=obj.value)
    except NonConvergence as exc:
        r = exc.best
        best = _make_fit(data, basis, obj, r.x, r.iterations, r.grad_norm,
                         False, r.steepest_steps)
        if np.max(np.abs(r.x)) > opts.separation_bound:
            raise SeparationSuspected(
                f"|theta| = {np.max(np.abs(r.x)):.3g} exceeds "
                f"{opts.separation_bound} with |grad| = {r.grad_norm:.3g}",
                best=best) from None
        raise NonConvergence(str(exc), best=best) from None
    out = _make_fit(data, basis, obj, res.x, res.iterations, res.grad_norm,
                    True, res.steepest_steps)
    # a vanishing gradient can also mean the sup is approached at infinity:
    # every fitted h0*h1 then collapses to zero
    sat = float(np.max(out.h0 * out.h1))
    if sat < opts.saturation_tol or np.max(np.abs(res.x)) > opts.separation_bound:
        raise SeparationSuspected(
            f"samples look separable in q(x): max h0*h1 = {sat:.3g}, "
            f"|theta| = {np.max(np.abs(res.x)):.3g}", best=out)
    return out
