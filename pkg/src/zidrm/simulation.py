"""Log-normal mixture scenarios and a Monte Carlo harness for bias/MSE of
point estimates and coverage/length of intervals for the mean ratio.

Replicate ``r`` of a study seeded with ``seed`` draws all of its
randomness from ``SeedSequence([seed, r])``, so results do not depend on
how replicates are spread over worker processes.
"""
from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from .asymptotics import gamma_hat, gamma_non_and_sem, lambda_hat
from .core import (BoundaryNu, DomainError, NoPositives, TwoSampleData,
                   ZidrmError, load_two_sample, make_basis)
from .functionals import builtin_g, builtin_u, psi_hat
from .inference import (METHODS, bootstrap_wald, drm_estimates,
                        nonparam_estimates, nonparam_log_ratio_interval,
                        wald_interval)
from .solver import NonConvergence, SolverOptions, fit

ESTIMATORS = ("delta_hat", "delta_tilde", "var0_hat", "var0_tilde",
              "var1_hat", "var1_tilde")


@dataclass(frozen=True)
class MixtureScenario:
    """Sample i has P(X = 0) = v_i and X | X > 0 ~ LN(a_i, b_i), where b_i
    is the variance on the log scale."""

    v0: float
    v1: float
    a0: float
    a1: float
    b0: float = 1.0
    b1: float = 1.0
    n0: int = 100
    n1: int = 100
    name: str = "custom"

    def __post_init__(self):
        for v in (self.v0, self.v1):
            if not 0 < v < 1:
                raise DomainError(f"zero probability {v} must lie in (0, 1)")
        if not (self.b0 > 0 and self.b1 > 0):
            raise DomainError("log-scale variances must be > 0")
        if self.n0 < 1 or self.n1 < 1:
            raise DomainError("sample sizes must be >= 1")

    def with_sizes(self, n0: int, n1: int) -> "MixtureScenario":
        return replace(self, n0=int(n0), n1=int(n1))

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureScenario":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def _pars(self, i):
        return ((self.v0, self.a0, self.b0) if i == 0 else
                (self.v1, self.a1, self.b1))

    @property
    def mu(self) -> tuple:
        """True means (mu0, mu1) of the mixtures."""
        return tuple((1 - v) * np.exp(a + b / 2) for v, a, b in map(self._pars, (0, 1)))

    @property
    def var(self) -> tuple:
        out = []
        for v, a, b in map(self._pars, (0, 1)):
            m2 = np.exp(2 * a + b)
            out.append((1 - v) * m2 * np.expm1(b) + v * (1 - v) * m2)
        return tuple(out)

    @property
    def delta(self) -> float:
        m0, m1 = self.mu
        return m1 / m0

    @property
    def w(self) -> float:
        return self.n0 / (self.n0 + self.n1)

    @property
    def theta_star(self) -> np.ndarray:
        """(alpha, beta) of the true density ratio under q(x) = log x."""
        if self.b0 != self.b1:
            raise DomainError("unequal log-scale variances need a quadratic basis")
        b = self.b0
        return np.array([(self.a0**2 - self.a1**2) / (2 * b), (self.a1 - self.a0) / b])

    @property
    def rho_star(self) -> float:
        w = self.w
        D = w * (1 - self.v0) + (1 - w) * (1 - self.v1)
        return (1 - w) * (1 - self.v1) / D

    @property
    def eta_star(self) -> np.ndarray:
        """(nu0, nu1, rho, alpha, beta) at the truth."""
        return np.r_[self.v0, self.v1, self.rho_star, self.theta_star]


def _preset(k, v, a):
    return MixtureScenario(v[0], v[1], a[0], a[1], 1.0, 1.0, name=f"model{k}")


PRESETS = {s.name: s for s in (
    _preset(1, (0.3, 0.3), (0.0, 0.0)),
    _preset(2, (0.7, 0.7), (0.0, 0.0)),
    _preset(3, (0.3, 0.5), (0.33, 0.66)),
    _preset(4, (0.5, 0.7), (0.37, 0.89)),
    _preset(5, (0.5, 0.3), (0.0, 0.0)),
    _preset(6, (0.7, 0.5), (0.0, 0.0)),
    _preset(7, (0.6, 0.4), (0.0, 0.0)),
    _preset(8, (0.3, 0.3), (0.0, 0.5)),
    _preset(9, (0.7, 0.7), (0.0, 0.75)),
    _preset(10, (0.4, 0.6), (0.0, 1.0)),
)}


def get_scenario(name: str, n0: int | None = None, n1: int | None = None
                 ) -> MixtureScenario:
    try:
        s = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(PRESETS)}") from None
    return s.with_sizes(n0 or s.n0, n1 or s.n1)


def replicate_rng(seed: int, replicate: int, *extra) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, replicate, *extra]))


def _std_normal(rng, n):
    # inverse CDF of a uniform on the open interval (0, 1)
    return ndtri((rng.integers(0, 2**53, size=n) + 0.5) / 2.0**53)


def draw_raw(scenario: MixtureScenario, rng) -> tuple:
    out = []
    for i, n in enumerate((scenario.n0, scenario.n1)):
        v, a, b = scenario._pars(i)
        zero = rng.random(n) < v
        x = np.exp(a + np.sqrt(b) * _std_normal(rng, n))
        out.append(np.where(zero, 0.0, x))
    return tuple(out)


def generate(scenario: MixtureScenario, seed: int = 0, replicate: int = 0
             ) -> TwoSampleData:
    """One simulated data set; raises NoPositives if a sample has no
    positive draw."""
    raw0, raw1 = draw_raw(scenario, replicate_rng(seed, replicate))
    return load_two_sample(raw0, raw1)


# -- Monte Carlo study ------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    scenario: MixtureScenario
    ci_set: tuple = ("I4", "I4L")
    seed: int = 0
    gamma: float = 0.05
    bootstrap_b: int = 999
    basis: str = "log"
    grad_tol: float = 1e-10
    max_iter: int = 200
    bootstrap_method: str = "symmetric"

    def __post_init__(self):
        bad = set(self.ci_set) - set(METHODS)
        if bad:
            raise ValueError(f"unknown interval methods {sorted(bad)}")


def _one_replicate(cfg: StudyConfig, r: int):
    """(status, estimates, intervals) for replicate r."""
    try:
        data = generate(cfg.scenario, cfg.seed, r)
    except NoPositives:
        return "no_positives", None, None
    opts = SolverOptions(grad_tol=cfg.grad_tol, max_iter=cfg.max_iter)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            f = fit(data, make_basis(cfg.basis), opts)
            if f.boundary:
                return "boundary", None, None
            drm = drm_estimates(f)
            npe = nonparam_estimates(data)
            est = (drm.delta, npe.delta, drm.var0, npe.var0, drm.var1, npe.var1)
            ivs = {}
            u, g = builtin_u("mean_pair"), builtin_g("ratio")
            G = gamma_hat(f, u) if {"I4", "I4L"} & set(cfg.ci_set) else None
            for m in cfg.ci_set:
                if m == "I4":
                    iv = wald_interval(f, u, g, cfg.gamma, False, cov=G)
                elif m == "I4L":
                    iv = wald_interval(f, u, g, cfg.gamma, True, cov=G)
                elif m == "I1":
                    iv = nonparam_log_ratio_interval(data, cfg.gamma)
                else:
                    iv = bootstrap_wald(data, gamma=cfg.gamma, B=cfg.bootstrap_b,
                                        seed=np.random.SeedSequence([cfg.seed, r, 1]),
                                        method=cfg.bootstrap_method)
                ivs[m] = (iv.lower, iv.upper)
    except BoundaryNu:
        return "boundary", None, None
    except NonConvergence:
        return "nonconvergence", None, None
    except (ZidrmError, np.linalg.LinAlgError, FloatingPointError, ValueError):
        return "numerical", None, None
    return "ok", est, ivs


def _run_block(args):
    cfg, lo, hi = args
    return [_one_replicate(cfg, r) for r in range(lo, hi)]


def _blocks(reps, workers):
    size = max(1, -(-reps // (4 * workers)))
    return [(lo, min(lo + size, reps)) for lo in range(0, reps, size)]


def map_replicates(func, cfg, reps: int, workers: int = 1) -> list:
    """[func(cfg, lo, hi) ...] over contiguous replicate blocks, flattened in
    replicate order. ``func`` must be a picklable module-level function."""
    blocks = _blocks(reps, workers)
    tasks = [(cfg, lo, hi) for lo, hi in blocks]
    if workers <= 1:
        parts = [func(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(func, tasks))
    return [x for part in parts for x in part]


@dataclass
class McReport:
    scenario: MixtureScenario
    reps: int
    n_ok: int
    failures: dict
    estimators: dict
    intervals: dict
    config: dict = field(default_factory=dict)
    wall_clock: float = float("nan")

    def to_dict(self, include_timing: bool = False) -> dict:
        out = dict(scenario=self.scenario.to_dict(), reps=self.reps, n_ok=self.n_ok,
                   failures=dict(self.failures), estimators=self.estimators,
                   intervals=self.intervals, config=self.config)
        if include_timing:
            out["wall_clock"] = self.wall_clock
        return out

    def table(self) -> str:
        """Two text tables in the layout model, (n0, n1), then one column
        pair per estimator or interval."""
        s = self.scenario
        row = f"{s.name:<8} ({s.n0}, {s.n1})"
        head1 = f"{'model':<8} {'(n0, n1)':<{len(row) - 9}}"
        cols1 = "".join(f" | {k:>21}" for k in self.estimators)
        vals1 = "".join(f" | {e['bias']:>10.4f} {e['mse']:>10.4f}"
                        for e in self.estimators.values())
        lines = ["bias and MSE", head1 + cols1,
                 " " * len(row) + "".join(f" | {'bias':>10} {'MSE':>10}"
                                          for _ in self.estimators),
                 row + vals1]
        if self.intervals:
            cols2 = "".join(f" | {k:>17}" for k in self.intervals)
            vals2 = "".join(f" | {c['cp']:>8.4f} {c['al']:>8.4f}"
                            for c in self.intervals.values())
            lines += ["", "coverage (%) and average length", head1 + cols2,
                      " " * len(row) + "".join(f" | {'CP':>8} {'AL':>8}"
                                               for _ in self.intervals),
                      row + vals2]
        lines += ["", f"replicates {self.reps}, used {self.n_ok}, failures "
                  + ", ".join(f"{k}={v}" for k, v in sorted(self.failures.items()))]
        return "\n".join(lines)


def _summary(x, truth):
    err = np.asarray(x) - truth
    return {"truth": float(truth), "mean": float(np.mean(x)),
            "bias": float(np.mean(err)), "mse": float(np.mean(err**2))}


def run_study(scenario: MixtureScenario, reps: int, ci_set=("I4", "I4L"),
              seed: int = 0, workers: int = 1, bootstrap_b: int = 999,
              gamma: float = 0.05, basis: str = "log",
              grad_tol: float = 1e-10, max_iter: int = 200,
              bootstrap_method: str = "symmetric") -> McReport:
    """Bias/MSE of (delta, sigma_0^2, sigma_1^2) estimates and CP/AL of the
    requested intervals for delta. Failed replicates are counted by cause
    and left out of every aggregate."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    cfg = StudyConfig(scenario, tuple(ci_set), int(seed), float(gamma),
                      int(bootstrap_b), basis, float(grad_tol), int(max_iter),
                      bootstrap_method)
    t0 = time.perf_counter()
    results = map_replicates(_run_block, cfg, reps, workers)
    failures = {k: 0 for k in ("boundary", "nonconvergence", "no_positives",
                               "numerical")}
    ests, ivs = [], {m: [] for m in cfg.ci_set}
    for status, est, iv in results:
        if status != "ok":
            failures[status] += 1
            continue
        ests.append(est)
        for m in cfg.ci_set:
            ivs[m].append(iv[m])
    n_ok = len(ests)
    estimators, intervals = {}, {}
    if n_ok:
        E = np.array(ests)
        truths = (scenario.delta, scenario.delta, scenario.var[0],
                  scenario.var[0], scenario.var[1], scenario.var[1])
        estimators = {k: _summary(E[:, j], truths[j]) for j, k in enumerate(ESTIMATORS)}
        for m, lst in ivs.items():
            a = np.array(lst)
            cover = (a[:, 0] < scenario.delta) & (scenario.delta < a[:, 1])
            intervals[m] = {"cp": float(100 * np.mean(cover)),
                            "al": float(np.mean(a[:, 1] - a[:, 0])), "n": len(lst)}
    conf = dict(ci_set=list(cfg.ci_set), seed=cfg.seed, gamma=cfg.gamma,
                bootstrap_b=cfg.bootstrap_b, bootstrap_method=cfg.bootstrap_method,
                basis=cfg.basis)
    return McReport(scenario, reps, n_ok, failures, estimators, intervals, conf,
                    time.perf_counter() - t0)


# -- replicate-level covariance oracles ------------------------------------

@dataclass(frozen=True)
class OracleConfig:
    scenario: MixtureScenario
    seed: int = 0
    basis: str = "log"


def _oracle_block(args):
    cfg, lo, hi = args
    s = cfg.scenario
    u = builtin_u("mean_pair")
    eta0 = s.eta_star
    psi0 = np.array(s.mu)
    out = []
    for r in range(lo, hi):
        try:
            data = generate(s, cfg.seed, r)
            f = fit(data, make_basis(cfg.basis))
            if f.boundary:
                out.append(None)
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                L = lambda_hat(f)
                G = gamma_hat(f, u)
                ns = gamma_non_and_sem(f, lambda x: x)
        except (ZidrmError, np.linalg.LinAlgError):
            out.append(None)
            continue
        root_n = np.sqrt(data.n)
        eta = np.r_[f.nu, f.rho, f.theta]
        out.append(dict(
            eta_err=root_n * (eta - eta0),
            psi_err=root_n * (psi_hat(f, u) - psi0),
            lam=L, gam=G,
            sem_diff=float(np.max(np.abs(G - ns.gamma_sem))),
            gap=ns.min_eig_gap))
    return out


@dataclass
class CovarianceOracle:
    n_used: int
    mc_eta_cov: np.ndarray
    mean_lambda: np.ndarray
    mc_psi_cov: np.ndarray
    mean_gamma: np.ndarray
    max_sem_diff: float
    min_gap: float


def covariance_oracle(scenario: MixtureScenario, reps: int, seed: int = 0,
                      workers: int = 1, basis: str = "log") -> CovarianceOracle:
    """Monte Carlo covariances of sqrt(n)(eta_hat - eta*) and
    sqrt(n)(psi_hat - psi*) for a(x) = x, next to the averaged plug-in
    Lambda_hat and Gamma_hat."""
    res = [r for r in map_replicates(_oracle_block, OracleConfig(scenario, seed, basis),
                                     reps, workers) if r is not None]
    stack = lambda k: np.array([r[k] for r in res])
    return CovarianceOracle(
        len(res),
        np.cov(stack("eta_err"), rowvar=False, bias=True),
        stack("lam").mean(axis=0),
        np.cov(stack("psi_err"), rowvar=False, bias=True),
        stack("gam").mean(axis=0),
        float(stack("sem_diff").max()),
        float(stack("gap").min()))
