import json

import numpy as np
import pytest

from zidrm.core import DomainError, NoPositives
from zidrm.simulation import (PRESETS, MixtureScenario, draw_raw, generate, get_scenario,
                              replicate_rng, run_study)


def test_model1_truths():
    s = get_scenario("model1")
    assert s.mu[0] == pytest.approx(0.7 * np.exp(0.5))
    assert s.mu[0] == pytest.approx(1.1542, abs=1e-4)
    assert s.var[0] == pytest.approx(3.840, abs=1e-3)
    assert s.delta == 1.0
    assert np.allclose(s.theta_star, 0)


def test_presets_complete():
    assert sorted(PRESETS, key=lambda k: int(k[5:])) == [f"model{k}" for k in range(1, 11)]
    s = get_scenario("model3", 50, 80)
    assert (s.n0, s.n1) == (50, 80) and s.name == "model3"
    with pytest.raises(ValueError):
        get_scenario("model11")


def test_theta_star_is_the_density_ratio():
    from scipy import stats
    s = get_scenario("model4")
    x = np.array([0.2, 1.0, 3.0])
    g0 = stats.lognorm.pdf(x, 1.0, scale=np.exp(s.a0))
    g1 = stats.lognorm.pdf(x, 1.0, scale=np.exp(s.a1))
    a, b = s.theta_star
    assert np.allclose(g1 / g0, np.exp(a + b * np.log(x)), rtol=1e-12)


def test_rho_star():
    s = MixtureScenario(0.3, 0.5, 0, 0, n0=100, n1=300)
    assert s.rho_star == pytest.approx(0.75 * 0.5 / (0.25 * 0.7 + 0.75 * 0.5))
    assert s.eta_star.shape == (5,)


def test_scenario_validation_and_roundtrip():
    with pytest.raises(DomainError):
        MixtureScenario(0.0, 0.3, 0, 0)
    with pytest.raises(DomainError):
        MixtureScenario(0.3, 0.3, 0, 0, b0=-1)
    with pytest.raises(DomainError):
        MixtureScenario(0.3, 0.3, 0, 0, b0=1, b1=2).theta_star
    s = get_scenario("model9")
    assert MixtureScenario.from_dict(json.loads(json.dumps(s.to_dict()))) == s


def test_zero_fraction():
    s = MixtureScenario(0.3, 0.3, 0, 0, n0=10**6, n1=1)
    x0, _ = draw_raw(s, replicate_rng(1, 0))
    assert abs(np.mean(x0 == 0) - 0.3) < 1e-3
    pos = np.log(x0[x0 > 0])
    assert abs(pos.mean()) < 5e-3 and abs(pos.std() - 1) < 5e-3


def test_generate_reproducible():
    s = get_scenario("model2")
    a, b = generate(s, 7, 3), generate(s, 7, 3)
    assert a == b
    assert a != generate(s, 7, 4)
    assert (a.n0, a.n1) == (100, 100)


def test_generate_no_positives():
    s = MixtureScenario(0.99, 0.99, 0, 0, n0=2, n1=2)
    with pytest.raises(NoPositives):
        for r in range(100):
            generate(s, 0, r)


def test_single_replicate_report(log_basis):
    from zidrm import fit
    from zidrm.inference import drm_estimates, wald_interval
    from zidrm.functionals import builtin_g, builtin_u
    s = get_scenario("model3")
    rep = run_study(s, 1, ("I4L",), seed=5)
    f = fit(generate(s, 5, 0), log_basis)
    assert rep.n_ok == 1
    assert rep.estimators["delta_hat"]["mean"] == pytest.approx(drm_estimates(f).delta,
                                                                rel=1e-12)
    iv = wald_interval(f, builtin_u("mean_pair"), builtin_g("ratio"), log_transform=True)
    assert rep.intervals["I4L"]["al"] == pytest.approx(iv.length, rel=1e-12)
    assert rep.intervals["I4L"]["cp"] == (100.0 if iv.covers(s.delta) else 0.0)


def test_workers_do_not_change_results():
    s = get_scenario("model7", 60, 60)
    a = run_study(s, 24, ("I1", "I1B", "I4", "I4L"), seed=1, bootstrap_b=49, workers=1)
    b = run_study(s, 24, ("I1", "I1B", "I4", "I4L"), seed=1, bootstrap_b=49, workers=2)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    assert "wall_clock" not in a.to_dict() and "wall_clock" in a.to_dict(True)


def test_failures_counted():
    s = MixtureScenario(0.8, 0.8, 0, 0, n0=4, n1=4)
    rep = run_study(s, 40, ("I4",), seed=0)
    assert rep.n_ok + sum(rep.failures.values()) == 40
    assert rep.failures["no_positives"] > 0
    assert rep.intervals["I4"]["n"] == rep.n_ok


def test_aggregate_sanity():
    rep = run_study(get_scenario("model8"), 60, ("I1", "I4", "I4L"), seed=2)
    for e in rep.estimators.values():
        assert e["mse"] >= e["bias"] ** 2 - 1e-12
        assert e["bias"] == pytest.approx(e["mean"] - e["truth"], abs=1e-12)
    for c in rep.intervals.values():
        assert 0 <= c["cp"] <= 100 and c["al"] > 0
    text = rep.table()
    assert "model8" in text and "I4L" in text and "delta_hat" in text


def test_efficiency_small_study():
    # the semiparametric ratio should not lose to the sample-mean ratio
    rep = run_study(get_scenario("model1"), 300, (), seed=4)
    e = rep.estimators
    assert e["delta_hat"]["mse"] < 1.1 * e["delta_tilde"]["mse"]


def test_bad_reps():
    with pytest.raises(ValueError):
        run_study(get_scenario("model1"), 0)
    with pytest.raises(ValueError):
        run_study(get_scenario("model1"), 5, ("I7",))
