"""Acceptance criteria, one printed PASS/FAIL line each.

Monte Carlo parts use seed 2024. The covariance oracle (criteria 4 and 5)
and the Model 1 study (criteria 6 and 7) are shared through module-scoped
fixtures.
"""
import json
import time
import warnings

import numpy as np
import pytest

from zidrm import fit, load_two_sample, make_basis
from zidrm.cli import AnalysisConfig, cmd_simulate
from zidrm.functionals import (G_NAMES, builtin_g, builtin_u, fd_d_nu, fd_d_theta,
                               fd_jacobian)
from zidrm.core import ParamBundle
from zidrm.inference import drm_estimates
from zidrm.likelihood import ell1_dual, h_function
from zidrm.simulation import covariance_oracle, generate, get_scenario, run_study
from zidrm.solver import NonConvergence

from conftest import central_diff

SEED = 2024
SIZES = [(50, 50), (50, 150), (150, 50), (100, 100)]


@pytest.fixture
def report(capsys):
    def _report(num, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {num} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return _report


def _rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-300))


def test_1_constraint_invariants(report):
    b = make_basis("log")
    t0 = time.perf_counter()
    worst, used, skipped = 0.0, 0, 0
    for r in range(1000):
        n0, n1 = SIZES[r % 4]
        s = get_scenario(f"model{1 + r % 10}", n0, n1)
        try:
            f = fit(generate(s, SEED, r), b)
        except NonConvergence:
            skipped += 1
            continue
        used += 1
        worst = max(worst, *map(abs, f.constraint_residuals()))
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-8 and dt < 60,
           f"{used} converged fits ({skipped} not), max |residual| {worst:.2e}, "
           f"{dt:.1f}s")


def _probe(k):
    rng = np.random.default_rng([SEED, k])
    n0, n1 = rng.integers(20, 150, 2)
    data = generate(get_scenario(f"model{1 + k % 10}", int(n0), int(n1)), SEED, k)
    return (data, rng.normal(scale=0.5, size=2), rng.uniform(0.2, 0.8, 2),
            float(rng.uniform(0.2, 0.8)))


def _valid_psi(which, rng):
    m1 = rng.uniform(0.5, 2, 2)
    if which.startswith(("variance", "cv")):
        m2 = m1**2 + rng.uniform(0.2, 2, 2)
        return np.array([m1[0], m2[0], m1[1], m2[1]])
    if which.startswith("ge1"):
        return np.array([m1[0], rng.uniform(-0.5, 2), m1[1], rng.uniform(-0.5, 2)])
    return m1


def test_2_derivatives(report):
    b = make_basis("log")
    t0 = time.perf_counter()
    lik = 0.0
    for k in range(50):
        data, theta, nu, rho = _probe(k)
        ev = ell1_dual(data, b, theta)
        lik = max(lik, _rel(ev.gradient,
                            central_diff(lambda t: ell1_dual(data, b, t).value, theta)),
                  _rel(ev.hessian,
                       central_diff(lambda t: ell1_dual(data, b, t).gradient, theta)))
        eta = np.r_[nu, rho, theta]
        H = lambda e: h_function(data, b, e[:2], e[2], e[3:])
        lik = max(lik, _rel(H(eta).hessian,
                            central_diff(lambda e: H(e).gradient, eta, 1e-6)))
    rng = np.random.default_rng(SEED)
    ujac = 0.0
    for which, k in [("moment_k", 1), ("moment_k", 3), ("mean_pair", 1),
                     ("mean_and_m2", 1), ("mean_and_xlogx", 1)]:
        u = builtin_u(which, k)
        for _ in range(10):
            prm = ParamBundle(rng.uniform(0.1, 0.9, 2), float(rng.uniform(0.2, 0.8)),
                              rng.normal(scale=0.3, size=2), b)
            x = rng.lognormal(size=5)
            ujac = max(ujac, _rel(u.d_nu(x, prm), fd_d_nu(u.value, x, prm)),
                       _rel(u.d_theta(x, prm), fd_d_theta(u.value, x, prm)))
    gjac = 0.0
    for which in G_NAMES:
        g = builtin_g(which)
        for _ in range(10):
            psi = _valid_psi(which, rng)
            gjac = max(gjac, _rel(g.jac(psi), fd_jacobian(g, psi)))
    dt = time.perf_counter() - t0
    report(2, lik <= 1e-5 and ujac <= 1e-6 and gjac <= 1e-6 and dt < 60,
           f"likelihood/H rel err {lik:.1e}, u jacobians {ujac:.1e}, "
           f"g jacobians {gjac:.1e}, {dt:.1f}s")


def test_3_symmetry(report):
    b = make_basis("log")
    rng = np.random.default_rng(SEED)
    worst_theta, worst_delta, worst_p = 0.0, 0.0, 0.0
    for k in range(20):
        x = rng.lognormal(size=int(rng.integers(3, 60)))
        z = int(rng.integers(0, 10))
        f = fit(load_two_sample(np.r_[np.zeros(z), x], np.r_[rng.permutation(x),
                                                               np.zeros(z)]), b)
        worst_theta = max(worst_theta, float(np.max(np.abs(f.theta))))
        worst_delta = max(worst_delta, abs(drm_estimates(f).delta - 1))
        worst_p = max(worst_p, float(np.ptp(f.weights)) * f.n_pos)
    ok = worst_theta <= 1e-8 and worst_delta <= 1e-8 and worst_p <= 1e-8
    report(3, ok, f"max |theta| {worst_theta:.1e}, max |delta - 1| {worst_delta:.1e}, "
                  f"max spread of n*p {worst_p:.1e}")


@pytest.fixture(scope="module")
def oracle():
    s = get_scenario("model1", 2000, 2000)
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = covariance_oracle(s, 5000, seed=SEED)
    return res, time.perf_counter() - t0


def test_4_lambda_oracle(report, oracle):
    res, dt = oracle
    L, M = res.mean_lambda, res.mc_eta_cov
    big = np.abs(L) > 0.05
    worst = float(np.max(np.abs(M[big] - L[big]) / np.abs(L[big])))
    report(4, worst <= 0.10,
           f"{res.n_used} fits, {int(big.sum())} entries > 0.05, "
           f"max rel diff {worst:.3f}, {dt:.0f}s")


def test_5_gamma_oracle(report, oracle):
    res, _ = oracle
    d_hat, d_mc = np.diag(res.mean_gamma), np.diag(res.mc_psi_cov)
    worst = float(np.max(np.abs(d_mc - d_hat) / d_hat))
    ok = worst <= 0.10 and res.max_sem_diff <= 1e-8 and res.min_gap >= -1e-8
    report(5, ok, f"diag Gamma_hat {np.round(d_hat, 3).tolist()} vs MC "
                  f"{np.round(d_mc, 3).tolist()} (max rel {worst:.3f}), "
                  f"|Gamma - Gamma_sem| {res.max_sem_diff:.1e}, min gap {res.min_gap:.1e}")


@pytest.fixture(scope="module")
def model1_study():
    return run_study(get_scenario("model1", 100, 100), 10000, ("I1", "I4", "I4L"),
                     seed=SEED)


def test_6_point_estimates(report, model1_study):
    e = model1_study.estimators
    b, m, mt = e["delta_hat"]["bias"], e["delta_hat"]["mse"], e["delta_tilde"]["mse"]
    ok = abs(b - 0.02) <= 0.01 and abs(m - 0.04) <= 0.01 and m < mt
    report(6, ok, f"bias {b:.4f}, MSE {m:.4f}, MSE of sample-mean ratio {mt:.4f} "
                  f"({model1_study.n_ok} replicates)")


def test_7_intervals(report, model1_study):
    c = model1_study.intervals
    boot = run_study(get_scenario("model1", 100, 100), 1000, ("I1B",), seed=SEED,
                     bootstrap_b=299)
    cb = boot.intervals["I1B"]["cp"]
    i4l, i4 = c["I4L"], c["I4"]
    ok = (abs(i4l["cp"] - 95.0) <= 0.7 and abs(i4l["al"] - 0.78) <= 0.04
          and abs(i4["cp"] - 94.6) <= 0.9 and 93 <= cb <= 97)
    report(7, ok, f"I4L CP {i4l['cp']:.2f} AL {i4l['al']:.3f}, I4 CP {i4['cp']:.2f}, "
                  f"I1B CP {cb:.1f} AL {boot.intervals['I1B']['al']:.3f}")


# rows of the printed parameter table: (mu0, mu1), (sigma0^2, sigma1^2), delta
TABLE1 = {
    1: ((1.15, 1.15), (3.84, 3.84), 1.00),
    2: ((0.49, 0.49), (1.97, 1.97), 1.00),
    3: ((1.61, 1.59), (7.43, 11.29), 0.99),
    4: ((1.19, 1.20), (6.32, 11.69), 1.01),
    5: ((0.82, 1.15), (3.02, 3.84), 1.40),
    6: ((0.49, 0.82), (1.97, 3.02), 1.67),
    7: ((0.66, 0.99), (2.52, 3.45), 1.50),
    8: ((1.15, 1.90), (3.84, 10.44), 1.65),
    9: ((0.49, 1.05), (1.97, 8.84), 2.12),
    10: ((0.99, 1.79), (3.45, 18.63), 1.81),
}


def test_8_table1_truths(report):
    bad = []
    for k, (mu, var, delta) in TABLE1.items():
        s = get_scenario(f"model{k}")
        got = dict(mu0=s.mu[0], mu1=s.mu[1], var0=s.var[0], var1=s.var[1], delta=s.delta)
        want = dict(mu0=mu[0], mu1=mu[1], var0=var[0], var1=var[1], delta=delta)
        for key in got:
            if round(float(got[key]), 2) != want[key]:
                bad.append(f"model{k} {key} {got[key]:.5f} vs {want[key]}")
    report(8, not bad, f"{50 - len(bad)}/50 cells match"
                       + ("; mismatches: " + "; ".join(bad) if bad else ""))


def test_9_determinism(report, tmp_path):
    outs = []
    for i, workers in enumerate((1, 1, 2)):
        cfg = AnalysisConfig(command="simulate", model="model3", reps=120, seed=SEED,
                             ci=("I1", "I1B", "I4", "I4L"), bootstrap_b=49,
                             workers=workers, out=str(tmp_path / f"r{i}.json"))
        assert cmd_simulate(cfg) == 0
        outs.append((tmp_path / f"r{i}.json").read_bytes())
    same = outs[0] == outs[1] == outs[2]
    json.loads(outs[0])
    report(9, same, "identical bytes for two runs at --workers 1 and one at --workers 2"
           if same else "outputs differ")
