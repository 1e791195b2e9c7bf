import numpy as np
import pytest

from zidrm import fit, load_two_sample, make_basis
from zidrm.core import DimensionMismatch, DomainError, ParamBundle
from zidrm.functionals import (G_NAMES, U_NAMES, builtin_g, builtin_u, component_map,
                               estimate, fd_d_nu, fd_d_theta, fd_jacobian, identity_map,
                               log_of, make_smooth_map, make_ufunctional, psi_hat)

from conftest import TOY_THETA, rel_err


def _bundle(rng, basis):
    return ParamBundle(rng.uniform(0.1, 0.9, 2), float(rng.uniform(0.2, 0.8)),
                       rng.normal(scale=0.3, size=basis.dim + 1), basis)


ALL_U = [("moment_k", 1), ("moment_k", 3), ("mean_pair", 1), ("mean_and_m2", 1),
         ("mean_and_xlogx", 1)]


@pytest.mark.parametrize("basis", ["log", "log+identity"])
@pytest.mark.parametrize("which, k", ALL_U)
def test_u_derivatives_fd(which, k, basis):
    b = make_basis(basis)
    u = builtin_u(which, k)
    rng = np.random.default_rng([len(which), k, len(basis)])
    for _ in range(20):
        prm = _bundle(rng, b)
        x = rng.lognormal(size=5)
        assert rel_err(u.d_nu(x, prm), fd_d_nu(u.value, x, prm)) < 1e-6
        assert rel_err(u.d_theta(x, prm), fd_d_theta(u.value, x, prm)) < 1e-6


def _valid_psi(which, rng):
    m1 = rng.uniform(0.5, 2, 2)
    if which.startswith(("variance", "cv")):
        m2 = m1**2 + rng.uniform(0.2, 2, 2)
        return np.array([m1[0], m2[0], m1[1], m2[1]])
    if which.startswith("ge1"):
        return np.array([m1[0], rng.uniform(-0.5, 2), m1[1], rng.uniform(-0.5, 2)])
    return m1


@pytest.mark.parametrize("which", G_NAMES)
def test_g_jacobian_fd(which):
    g = builtin_g(which)
    rng = np.random.default_rng(len(which))
    for _ in range(20):
        psi = _valid_psi(which, rng)
        assert rel_err(g.jac(psi), fd_jacobian(g, psi)) < 1e-6


def test_registry_names():
    assert set(U_NAMES) == {"moment_k", "mean_pair", "mean_and_m2", "mean_and_xlogx"}
    with pytest.raises(ValueError):
        builtin_u("median")
    with pytest.raises(ValueError):
        builtin_g("gini")
    with pytest.raises(ValueError):
        builtin_u("moment_k", 0)


def test_moment_value():
    prm = ParamBundle([0.3, 0.3], 0.5, [0, 0], make_basis("log"))
    assert builtin_u("moment_k", 1).value(np.array([2.0]), prm)[0] == pytest.approx([1.4, 1.4])


def test_xlogx_at_one():
    prm = ParamBundle([0.3, 0.6], 0.5, [0.2, 0.1], make_basis("log"))
    v = builtin_u("mean_and_xlogx").value(np.array([1.0]), prm)[0]
    assert v[1] == 0 and v[3] == 0


def test_ratio_values():
    g = builtin_g("ratio")
    assert g([2, 3])[0] == 1.5
    assert g.jac([2, 3]).tolist() == [[-0.75, 0.5]]
    assert builtin_g("variance_pair")([1, 2, 1, 2]).tolist() == [1, 1]


def test_ge1_zero_on_point_mass():
    # one atom at c: E[X] = c and E[X log X] = c log c
    c = 2.7
    psi = [c, c * np.log(c), 3.1, 3.1 * np.log(3.1)]
    assert np.allclose(builtin_g("ge1_pair")(psi), 0, atol=1e-15)


def test_map_domain_errors():
    with pytest.raises(DomainError):
        builtin_g("ratio")([0.0, 1.0])
    with pytest.raises(DomainError):
        builtin_g("log_ratio")([1.0, -1.0])
    with pytest.raises(DomainError):
        builtin_g("cv_pair")([1.0, 0.5, 1.0, 2.0])  # variance < 0


def test_cv_is_sd_over_mean():
    psi = np.array([2.0, 5.0, 1.0, 3.0])
    assert builtin_g("cv_pair")(psi) == pytest.approx([0.5, np.sqrt(2)])
    assert builtin_g("cv_diff")(psi)[0] == pytest.approx(np.sqrt(2) - 0.5)


def test_constant_u_gives_constant(model_data, log_basis):
    c = np.array([3.0, -1.5])
    u = make_ufunctional(lambda x, prm: np.tile(c, (x.size, 1)), 2)
    for d in model_data:
        assert np.allclose(psi_hat(fit(d, log_basis), u), c, rtol=1e-12)


def test_symmetric_psi(symmetric_data, log_basis):
    f = fit(symmetric_data, log_basis)
    psi, g = estimate(f, builtin_u("mean_pair"), builtin_g("ratio"))
    nu = symmetric_data.nu_hat[0]
    assert np.allclose(psi, (1 - nu) * np.mean(f.x), rtol=1e-12)
    assert g[0] == pytest.approx(1.0, abs=1e-14)


def test_toy_psi_against_direct_sum(toy, log_basis):
    # weights rebuilt from the grid-search theta, independent of the fit
    x = np.array([0.5, 1.0, 2.0, 1.0, 3.0, 5.0])
    om = np.exp(TOY_THETA[0] + TOY_THETA[1] * np.log(x))
    p = 1 / (6 * (1 + 0.5 * (om - 1)))
    mu0, mu1 = 0.75 * np.sum(p * x), 0.6 * np.sum(p * om * x)
    f = fit(toy, log_basis)
    psi, g = estimate(f, builtin_u("mean_pair"), builtin_g("ratio"))
    assert np.allclose(psi, [mu0, mu1], rtol=1e-4)
    assert g[0] == pytest.approx(mu1 / mu0, rel=1e-4)


def test_mean_display_identity(model_data, log_basis):
    for d in model_data:
        f = fit(d, log_basis)
        psi = psi_hat(f, builtin_u("mean_pair"))
        m0 = (1 - f.nu[0]) * np.sum(f.weights * f.x)
        m1 = (1 - f.nu[1]) * np.sum(f.weights * f.omega * f.x)
        assert psi[0] == pytest.approx(m0, rel=1e-12)
        assert psi[1] == pytest.approx(m1, rel=1e-12)
        lr = builtin_g("log_ratio")(psi)[0]
        assert np.exp(lr) == pytest.approx(builtin_g("ratio")(psi)[0], rel=1e-12)


def test_identity_and_components(toy, log_basis):
    f = fit(toy, log_basis)
    u = builtin_u("mean_and_m2")
    psi, g = estimate(f, u)
    assert np.array_equal(psi, g)
    psi2, g2 = estimate(f, u, identity_map(4))
    assert np.array_equal(g2, psi2)
    assert estimate(f, u, component_map(4, 2))[1][0] == psi[2]
    with pytest.raises(DimensionMismatch):
        estimate(f, u, builtin_g("ratio"))


def test_log_of_and_custom_maps():
    g = log_of(builtin_g("ratio"))
    psi = np.array([1.3, 2.1])
    assert g(psi)[0] == pytest.approx(builtin_g("log_ratio")(psi)[0])
    assert np.allclose(g.jac(psi), builtin_g("log_ratio").jac(psi))
    h = make_smooth_map(lambda p: np.array([p[0] * p[1]]), 2, 1)
    assert np.allclose(h.jac(psi), [[2.1, 1.3]], rtol=1e-8)
    with pytest.raises(DimensionMismatch):
        log_of(builtin_g("variance_pair"))


def test_bad_u_shape(toy, log_basis):
    u = make_ufunctional(lambda x, prm: np.ones((x.size, 3)), 2)
    with pytest.raises(DimensionMismatch):
        psi_hat(fit(toy, log_basis), u)
