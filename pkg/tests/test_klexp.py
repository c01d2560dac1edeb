import math

import numpy as np
import pytest
from scipy import linalg

from stochbif.klexp import nystrom_kl, scalar_kl, uniform_kl
from stochbif.pcbasis import SQRT3, Family


def test_zero_sigma_is_deterministic():
    kl = scalar_kl(0.9, 0.0, "gaussian")
    assert kl.n_kl == 0
    np.testing.assert_array_equal(kl.realize(np.array([[-2.0], [0.0], [3.0]]))[:, 0], [0.9, 0.9, 0.9])


def test_gaussian_law():
    kl = scalar_kl(0.9, math.sqrt(0.001), "gaussian")
    assert kl.seed_family is Family.HERMITE
    assert kl.lambdas[0] == 1.0
    assert kl.lambdas[1] == pytest.approx(0.001, rel=1e-15)
    assert kl.realize(np.array([[1.0]]))[0, 0] == pytest.approx(0.9 + math.sqrt(0.001))


def test_uniform_law_support():
    kl = uniform_kl(0.845, 0.955)
    assert kl.mu_bar == pytest.approx(0.9)
    assert kl.sigma == pytest.approx(0.055 / SQRT3)
    ends = kl.realize(np.array([[-SQRT3], [SQRT3]]))[:, 0]
    np.testing.assert_allclose(ends, [0.845, 0.955], atol=1e-15)


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        scalar_kl(1.0, -0.1)
    with pytest.raises(ValueError):
        uniform_kl(1.0, 0.5)


@pytest.mark.parametrize("family", ["gaussian", "uniform"])
def test_sampling_variance(family):
    sigma = 0.2
    kl = scalar_kl(1.0, sigma, family)
    rng = np.random.default_rng(11)
    x = kl.realize(kl.sample_seeds(100_000, rng))[:, 0]
    var = x.var(ddof=1)
    # standard error of the sample variance
    se = math.sqrt((np.mean((x - x.mean()) ** 4) - var ** 2) / len(x))
    assert abs(var - sigma ** 2) < 3 * se


def _trapezoid_grid(n, a=0.0, b=1.0):
    x = np.linspace(a, b, n)
    w = np.full(n, (b - a) / (n - 1))
    w[[0, -1]] *= 0.5
    return x, w


def test_constant_kernel_single_mode():
    x, w = _trapezoid_grid(20, 0.0, 2.0)
    kl = nystrom_kl(lambda s, t: 1.0, x, w, 5)
    assert kl.n_kl == 1
    assert kl.lambdas[1] == pytest.approx(w.sum(), rel=1e-12)
    np.testing.assert_allclose(kl.modes[1], kl.modes[1][0], rtol=1e-10)
    assert w @ kl.modes[1] ** 2 == pytest.approx(1.0, rel=1e-12)


def test_zero_kernel_no_modes():
    x, w = _trapezoid_grid(10)
    assert nystrom_kl(lambda s, t: 0.0, x, w, 3).n_kl == 0


def test_exponential_kernel_against_dense_eigensolve():
    x, w = _trapezoid_grid(64)
    kern = lambda s, t: math.exp(-abs(s - t))  # noqa: E731
    kl = nystrom_kl(kern, x, w, 6)
    K = np.exp(-np.abs(x[:, None] - x[None, :]))
    # generalized symmetric problem K W y = lam y  <=>  W K W z = lam W z
    ref = linalg.eigh(np.diag(w) @ K @ np.diag(w), np.diag(w), eigvals_only=True)[::-1]
    np.testing.assert_allclose(kl.lambdas[1:], ref[:6], rtol=1e-8, atol=1e-12)
    gram = (kl.modes[1:] * w) @ kl.modes[1:].T
    np.testing.assert_allclose(gram, np.eye(6), atol=1e-8)
    assert np.all(np.diff(kl.lambdas[1:]) <= 0)


def test_energy_consistency():
    x, w = _trapezoid_grid(30)
    kern = lambda s, t: math.exp(-((s - t) ** 2) / 0.1)  # noqa: E731
    trace = float(w.sum())          # K(x, x) = 1
    part = nystrom_kl(kern, x, w, 5)
    full = nystrom_kl(kern, x, w, 30)
    assert part.lambdas[1:].sum() <= trace + 1e-8
    assert full.lambdas[1:].sum() + full.discarded_energy == pytest.approx(trace, abs=1e-8)
    assert part.truncation_error(trace) >= -1e-12


def test_asymmetric_kernel_rejected():
    x, w = _trapezoid_grid(8)
    with pytest.raises(ValueError):
        nystrom_kl(lambda s, t: s - 2 * t, x, w, 2)


def test_indefinite_kernel_is_clipped():
    x, w = _trapezoid_grid(8)
    kl = nystrom_kl(lambda s, t: math.cos(3 * (s + t)), x, w, 8)
    assert kl.clipped
    assert np.all(kl.lambdas >= 0)


def test_nonpositive_weights_rejected():
    with pytest.raises(ValueError):
        nystrom_kl(lambda s, t: 1.0, np.arange(3.0), np.array([1.0, 0.0, 1.0]), 1)
