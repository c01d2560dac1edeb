import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochbif import pitchfork as pf
from stochbif.klexp import scalar_kl, uniform_kl
from stochbif.pcbasis import PCBasis


def unit(n, k=0, value=1.0):
    c = np.zeros(n)
    c[k] = value
    return c


def test_zero_is_equilibrium():
    b = PCBasis("legendre", 5)
    assert np.all(pf.residual(np.zeros(6), b, uniform_kl(0.8, 1.2)) == 0)


def test_deterministic_unit_root():
    b = PCBasis("hermite", 3)
    np.testing.assert_allclose(pf.residual(unit(4), b, scalar_kl(1.0, 0.0)), 0, atol=1e-15)


def test_residual_value_at_two():
    b = PCBasis("hermite", 3)
    r = pf.residual(unit(4, 0, 2.0), b, scalar_kl(1.0, 0.0))
    np.testing.assert_allclose(r, [6.0, 0, 0, 0], atol=1e-13)


def test_residual_matches_high_order_quadrature():
    b = PCBasis("legendre", 4)
    mu = uniform_kl(0.8, 1.2)
    c = np.random.default_rng(0).normal(size=5)
    x, w = b.quadrature(40)
    psi = b.vandermonde(x)
    u = psi @ c
    ref = psi.T @ (w * (u ** 3 - mu.realize(x)[:, 0] * u))
    np.testing.assert_allclose(pf.residual(c, b, mu), ref, atol=1e-12)


def test_wrong_length_rejected():
    with pytest.raises(ValueError):
        pf.residual(np.zeros(3), PCBasis("hermite", 3), scalar_kl(1, 0.1))


@settings(max_examples=25, deadline=None)
@given(family=st.sampled_from(["hermite", "legendre"]), M=st.integers(0, 6),
       seed=st.integers(0, 2**31 - 1))
def test_jacobian_against_central_differences(family, M, seed):
    b = PCBasis(family, M)
    mu = scalar_kl(0.7, 0.2, family)
    c = np.random.default_rng(seed).uniform(-2, 2, M + 1)
    J = pf.jacobian(c, b, mu)
    h = 1e-6
    fd = np.column_stack([(pf.residual(c + h * e, b, mu) - pf.residual(c - h * e, b, mu)) / (2 * h)
                          for e in np.eye(M + 1)])
    scale = np.abs(J).max()
    assert np.abs(J - fd).max() <= 1e-5 * scale


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_residual_is_odd(seed):
    b = PCBasis("legendre", 5)
    mu = uniform_kl(0.8, 1.2)
    c = np.random.default_rng(seed).uniform(-3, 3, 6)
    np.testing.assert_allclose(pf.residual(-c, b, mu), -pf.residual(c, b, mu), atol=1e-12)


def test_newton_deterministic_stable_branch():
    b = PCBasis("hermite", 4)
    # the undamped first step from 0.5 overshoots to exactly -1
    sol = pf.newton_solve(unit(5, 0, 0.5), b, scalar_kl(1.0, 0.0))
    assert sol.converged
    np.testing.assert_allclose(sol.coeffs, unit(5, 0, -1.0), atol=1e-10)
    sol = pf.newton_solve(unit(5, 0, 0.8), b, scalar_kl(1.0, 0.0))
    np.testing.assert_allclose(sol.coeffs, unit(5), atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_newton_negative_mu_goes_to_zero(seed):
    b = PCBasis("hermite", 3)
    c0 = np.random.default_rng(seed).uniform(-3, 3, 4)
    sol = pf.newton_solve(c0, b, scalar_kl(-1.0, 0.0))
    assert sol.converged
    np.testing.assert_allclose(sol.coeffs, 0, atol=1e-9)


def test_singular_start_is_reported():
    b = PCBasis("hermite", 2)
    # 3 u^2 - mu vanishes at u = 1/sqrt(3) for mu = 1
    sol = pf.newton_solve(unit(3, 0, 1 / np.sqrt(3)), b, scalar_kl(1.0, 0.0))
    assert not sol.converged
    assert sol.status == "singular" and sol.iterations == 0
    sol0 = pf.newton_solve(np.zeros(3), b, scalar_kl(0.0, 0.0))
    # the zero vector already solves the system, no Jacobian needed
    assert sol0.converged and sol0.iterations == 0


def test_invalid_tolerance():
    with pytest.raises(ValueError):
        pf.newton_solve(np.zeros(2), PCBasis("hermite", 1), scalar_kl(1, 0), tol=0)


def test_deterministic_limit_kills_higher_modes():
    b = PCBasis("legendre", 5)
    for c0 in pf.random_initializations(10, 3.0, 5, 6):
        sol = pf.newton_solve(c0, b, scalar_kl(1.0, 0.0, "uniform"))
        if sol.converged:
            # every pointwise root is an equilibrium: u^3 - u = 0 on the sampling zone
            xi = np.linspace(-1.7, 1.7, 1000)
            u = sol.evaluate(xi)
            if np.allclose(sol.coeffs[1:], 0, atol=1e-8):
                assert np.abs(u ** 3 - u).max() < 1e-8


def test_random_initializations():
    assert np.array_equal(pf.random_initializations(1, 0.0, 3, 4)[0], np.zeros(4))
    a = pf.random_initializations(100, 3.0, 42, 6)
    b = pf.random_initializations(100, 3.0, 42, 6)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert np.abs(np.array(a)).max() <= 3.0
    with pytest.raises(ValueError):
        pf.random_initializations(0, 1.0, 0, 2)


def test_ensemble_has_several_distinct_solutions():
    b = PCBasis("legendre", 5)
    sols = pf.solve_ensemble(b, uniform_kl(0.8, 1.2), 100, 3.0, 42)
    assert len(pf.distinct_solutions(sols, 1e-6)) >= 2
    # every converged solution satisfies the pointwise equation approximately
    xi = np.linspace(-1.7, 1.7, 1000)
    mu = 1.0 + 0.2 / np.sqrt(3) * xi
    for s in sols:
        if s.converged:
            assert np.abs(pf.residual(s.coeffs, b, s.mu)).max() < 1e-10
            u = s.evaluate(xi)
            assert np.abs(u ** 3 - mu * u).max() < 2.0


def test_sign_symmetry_of_solutions():
    b = PCBasis("legendre", 5)
    mu = uniform_kl(0.8, 1.2)
    sol = pf.newton_solve(np.array([0.9, 0.3, -0.2, 0.1, 0, 0]), b, mu)
    assert sol.converged
    assert np.abs(pf.residual(-sol.coeffs, b, mu)).max() < 1e-10


def test_make_mu():
    u = pf.make_mu(1.0, "uniform", 0.2)
    assert u.realize(np.array([[np.sqrt(3)]]))[0, 0] == pytest.approx(1.2)
    g = pf.make_mu(1.0, "gaussian", 0.06)
    assert g.sigma == pytest.approx(np.sqrt(0.06))


def test_sweep_slices():
    b = PCBasis("legendre", 5)
    diagram, entries = pf.sweep_diagram([-0.25, 1.0], 0.01, b, inits_per_mu=1, rng_seed=3)
    assert len(entries) == 2
    neg = diagram.values_at(-0.25)
    assert len(neg) == 1 and abs(neg[0]) < 0.02
    assert all(e.solution.converged for e in entries)
    with pytest.raises(ValueError):
        pf.sweep_diagram([1.0], 0.0, b)


def test_sweep_is_reproducible():
    b = PCBasis("legendre", 3)
    d1, _ = pf.sweep_diagram(np.linspace(0.2, 1.0, 4), 0.01, b, rng_seed=9, n_samples=2000)
    d2, _ = pf.sweep_diagram(np.linspace(0.2, 1.0, 4), 0.01, b, rng_seed=9, n_samples=2000)
    assert [(r.mu, r.observable, r.weight) for r in d1.records] == \
        [(r.mu, r.observable, r.weight) for r in d2.records]
