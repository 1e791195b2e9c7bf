"""Plug-in estimates of the asymptotic covariances of eta_hat = (nu, rho,
theta), psi_hat and g(psi_hat).

Every expectation under G_0 is replaced by a p_ij-weighted sum over the
pooled positives, and every true parameter by its MELE. All matrices are
covariances of sqrt(n) * (estimate - truth), n = n0 + n1.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import BoundaryNu, DimensionMismatch, ZidrmError
from .functionals import SmoothMap, UFunctional, psi_hat, u_matrix

COND_LIMIT = 1e12


class SingularMatrix(ZidrmError, np.linalg.LinAlgError):
    pass


class SingularAtheta(SingularMatrix):
    """A_theta is numerically singular: the basis is degenerate on the data."""


class NotPSDWarning(UserWarning):
    pass


def _require(fit):
    if fit.boundary:
        raise BoundaryNu(f"nu_hat={fit.nu} lies on the boundary; "
                         "asymptotic covariances are undefined")
    if not fit.diagnostics.converged:
        raise ZidrmError("fit did not converge")


def spd_inverse(M, name="matrix", exc=SingularMatrix):
    """Inverse of a symmetric positive definite matrix via Cholesky, with a
    condition-number check."""
    M = 0.5 * (M + M.T)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise exc(f"{name} is numerically singular (condition number {cond:.3g})")
    try:
        c = linalg.cho_factor(M)
    except linalg.LinAlgError as e:
        raise exc(f"{name} is not positive definite") from e
    inv = linalg.cho_solve(c, np.eye(M.shape[0]))
    return 0.5 * (inv + inv.T)


def check_psd(M, name, tol=-1e-8):
    eig = float(np.min(np.linalg.eigvalsh(0.5 * (M + M.T)))) if M.size else 0.0
    if eig < tol:
        warnings.warn(f"{name} has negative eigenvalue {eig:.3g}", NotPSDWarning,
                      stacklevel=3)
    return eig


def empirical_E0(fit, f) -> np.ndarray:
    """sum_ij p_ij f(X_ij): the plug-in for E_0{f(X)}.

    ``f`` is a callable on the pooled positives or an array whose first
    axis runs over them.
    """
    F = np.asarray(f(fit.x) if callable(f) else f, dtype=float)
    if F.shape[0] != fit.x.size:
        raise DimensionMismatch("f must have one row per positive observation")
    if not np.all(np.isfinite(F)):
        raise FloatingPointError("f returned non-finite values")
    return np.tensordot(fit.weights, F, axes=1)


def a_nu_hat(fit) -> np.ndarray:
    w, nu = fit.w, fit.nu
    return np.diag([w / (nu[0] * (1 - nu[0])), (1 - w) / (nu[1] * (1 - nu[1]))])


def a_theta_hat(fit) -> np.ndarray:
    Q = fit.Q
    At = fit.delta * (1 - fit.rho) * (Q * (fit.weights * fit.h1)[:, None]).T @ Q
    return 0.5 * (At + At.T)


def a_theta_inverse(fit) -> np.ndarray:
    return spd_inverse(a_theta_hat(fit), "A_theta", SingularAtheta)


def w_vector(fit) -> np.ndarray:
    return np.array([1 / (1 - fit.nu[0]), -1 / (1 - fit.nu[1])])


def lambda_hat(fit) -> np.ndarray:
    """Covariance of sqrt(n)(eta_hat - eta), eta = (nu0, nu1, rho, theta)."""
    _require(fit)
    rho, D, nu = fit.rho, fit.delta, fit.nu
    r = rho * (1 - rho)
    k = fit.theta.size
    Anu_inv = np.linalg.inv(a_nu_hat(fit))
    W = w_vector(fit)
    e = np.zeros(k)
    e[0] = 1.0
    L = np.zeros((3 + k, 3 + k))
    L[:2, :2] = Anu_inv
    L[:2, 2] = L[2, :2] = r * Anu_inv @ W
    L[2, 2] = r * (rho * nu[0] + (1 - rho) * nu[1]) / D
    L[3:, 3:] = a_theta_inverse(fit) - np.outer(e, e) / (D * r)
    return L


def a_rho_hat(fit) -> float:
    """Delta * E0{(omega - 1)^2 / h}, written with h0 and h1."""
    rho = fit.rho
    ratio = fit.h1 / rho - fit.h0 / (1 - rho)
    return fit.delta * float(empirical_E0(fit, ratio**2 * (1 - rho) / fit.h0))


def a_matrix(fit) -> np.ndarray:
    """Plug-in of A = -E{d^2 H / d eta d eta'} / n."""
    _require(fit)
    k = fit.theta.size
    A = np.zeros((3 + k, 3 + k))
    A[:2, :2] = a_nu_hat(fit)
    A[2, 2] = -a_rho_hat(fit)
    # Delta * E0{omega Q / h} with omega / h = h1 / rho
    A[3:, 2] = A[2, 3:] = fit.delta * empirical_E0(
        fit, (fit.h1 / fit.rho)[:, None] * fit.Q)
    A[3:, 3:] = a_theta_hat(fit)
    return A


def b_matrix(fit) -> np.ndarray:
    """Plug-in of B, the limiting covariance of the scaled score of H."""
    _require(fit)
    rho, w = fit.rho, fit.w
    r = rho * (1 - rho)
    S = 1 / w + 1 / (1 - w)
    k = fit.theta.size
    At = a_theta_hat(fit)
    Arho = a_rho_hat(fit)
    Ate = At[:, 0]
    W = w_vector(fit)
    B = np.zeros((3 + k, 3 + k))
    B[:2, :2] = a_nu_hat(fit)
    B[2, 2] = Arho - S * r**2 * Arho**2
    B[3:, 3:] = At - S * np.outer(Ate, Ate)
    B[:2, 2] = B[2, :2] = -r * Arho * W
    B[:2, 3:] = np.outer(W, Ate)
    B[3:, :2] = B[:2, 3:].T
    B[2, 3:] = B[3:, 2] = S * r * Arho * Ate
    return B


@dataclass(frozen=True)
class MMatrices:
    M1: np.ndarray
    M2: np.ndarray
    M3: np.ndarray


def m_matrices(fit, u: UFunctional) -> MMatrices:
    _require(fit)
    prm = fit.params
    U = u_matrix(fit, u)
    Dn = np.asarray(u.d_nu(fit.x, prm), float)
    Dt = np.asarray(u.d_theta(fit.x, prm), float)
    n, p, k = fit.x.size, u.p, fit.theta.size
    if Dn.shape != (n, p, 2) or Dt.shape != (n, p, k):
        raise DimensionMismatch(
            f"derivative shapes {Dn.shape}, {Dt.shape} do not match (n, p)=({n}, {p})")
    psi = fit.weights @ U
    M1 = empirical_E0(fit, Dn)
    M2 = empirical_E0(fit, Dt[:, :, 0]) - fit.rho * psi
    M3 = empirical_E0(fit, Dt - fit.h1[:, None, None] * U[:, :, None] * fit.Q[:, None, :])
    return MMatrices(M1, M2, M3)


def gamma_hat(fit, u: UFunctional) -> np.ndarray:
    """Covariance of sqrt(n)(psi_hat - psi)."""
    _require(fit)
    rho, D = fit.rho, fit.delta
    U = u_matrix(fit, u)
    psi = fit.weights @ U
    M = m_matrices(fit, u)
    inv_h = fit.h0 / (1 - rho)
    G = (U * (fit.weights * inv_h)[:, None]).T @ U / D
    G -= np.outer(psi, psi) / D
    G += M.M1 @ np.linalg.inv(a_nu_hat(fit)) @ M.M1.T
    G -= np.outer(M.M2, M.M2) / (D * rho * (1 - rho))
    G += M.M3 @ a_theta_inverse(fit) @ M.M3.T
    G = 0.5 * (G + G.T)
    check_psd(G, "Gamma_hat")
    return G


def gamma_g_hat(fit, u: UFunctional, g: SmoothMap,
                gamma: np.ndarray | None = None) -> np.ndarray:
    """J Gamma_hat J' with J the Jacobian of g at psi_hat."""
    if g.p != u.p:
        raise DimensionMismatch(f"map expects p={g.p}, functional has p={u.p}")
    G = gamma_hat(fit, u) if gamma is None else gamma
    J = g.jac(psi_hat(fit, u))
    Gg = J @ G @ J.T
    Gg = 0.5 * (Gg + Gg.T)
    check_psd(Gg, "Gamma_g_hat")
    return Gg


@dataclass(frozen=True)
class NonSemComparison:
    gamma_non: np.ndarray
    gamma_sem: np.ndarray
    min_eig_gap: float


def _a_matrix_values(a, x, m=None):
    A = np.asarray(a(x), float)
    return A.reshape(x.size, -1) if m is None else A.reshape(x.size, m)


def gamma_non_and_sem(fit, a) -> NonSemComparison:
    """Nonparametric and semiparametric covariances of sqrt(n) times the
    errors of (psi_0, psi_1) = (int a dF_0, int a dF_1).

    Population moments in the nonparametric covariance are also plug-ins,
    taken under F_i built from nu_hat_i and the estimated G_i.
    """
    _require(fit)
    x, p, pw = fit.x, fit.weights, fit.tilted_weights
    w, rho, D, nu = fit.w, fit.rho, fit.delta, fit.nu
    A = _a_matrix_values(a, x)
    m = A.shape[1]
    V = []
    for i, mass in enumerate((p, pw)):
        second = (1 - nu[i]) * (A * mass[:, None]).T @ A
        first = (1 - nu[i]) * mass @ A
        V.append(second - np.outer(first, first))
    G_non = np.zeros((2 * m, 2 * m))
    G_non[:m, :m] = V[0] / w
    G_non[m:, m:] = V[1] / (1 - w)
    c = D * (1 - rho)
    proj = c * (A * (p * fit.h1)[:, None]).T @ fit.Q @ a_theta_inverse(fit)
    d = A - fit.Q @ proj.T
    s = np.hstack([d / w, -d / (1 - w)])
    corr = c * (s * (p * fit.h1)[:, None]).T @ s
    G_sem = G_non - 0.5 * (corr + corr.T)
    G_non = 0.5 * (G_non + G_non.T)
    gap = float(np.min(np.linalg.eigvalsh(G_non - G_sem)))
    return NonSemComparison(G_non, G_sem, gap)


@dataclass(frozen=True)
class CovarianceReport:
    lambda_hat: np.ndarray
    gamma_hat: np.ndarray | None = None
    gamma_g_hat: np.ndarray | None = None
    gamma_non: np.ndarray | None = None
    gamma_sem: np.ndarray | None = None
    min_eig_gap: float | None = None
    min_eigenvalues: dict | None = None

    def to_dict(self):
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def covariance_report(fit, u: UFunctional | None = None,
                      g: SmoothMap | None = None, a=None) -> CovarianceReport:
    """Collect every covariance object that the given inputs define."""
    L = lambda_hat(fit)
    G = Gg = None
    eigs = {"lambda_hat": check_psd(L, "Lambda_hat")}
    if u is not None:
        G = gamma_hat(fit, u)
        eigs["gamma_hat"] = float(np.min(np.linalg.eigvalsh(G)))
        if g is not None:
            Gg = gamma_g_hat(fit, u, g, gamma=G)
            eigs["gamma_g_hat"] = float(np.min(np.linalg.eigvalsh(Gg)))
    ns = gamma_non_and_sem(fit, a) if a is not None else None
    return CovarianceReport(
        L, G, Gg,
        None if ns is None else ns.gamma_non,
        None if ns is None else ns.gamma_sem,
        None if ns is None else ns.min_eig_gap,
        eigs)
