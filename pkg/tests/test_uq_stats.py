import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochbif import uq_stats as uq
from stochbif.pcbasis import SQRT3, Family, PCBasis


def test_sampling_zones():
    assert uq.SamplingZone.for_family("gaussian").interval == (-3.0, 3.0)
    assert uq.SamplingZone.for_family("uniform").interval == (-SQRT3, SQRT3)


def test_constant_expansion_samples():
    s = uq.sample_expansion([2.5, 0, 0], PCBasis("hermite", 2), 100, 1)
    assert np.all(s == 2.5)


def test_linear_hermite_moments():
    n = 100_000
    s = uq.sample_expansion([0, 1, 0], PCBasis("hermite", 2), n, 7)
    assert abs(s.mean()) < 3 / math.sqrt(n)
    # standard error of the variance of a standard normal is sqrt(2/n)
    assert abs(s.var(ddof=1) - 1) < 3 * math.sqrt(2 / n)


def test_sampling_is_deterministic():
    b = PCBasis("legendre", 3)
    a = uq.sample_expansion([0.1, 0.5, -0.2, 0.3], b, 500, 12)
    c = uq.sample_expansion([0.1, 0.5, -0.2, 0.3], b, 500, 12)
    assert np.array_equal(a, c)
    with pytest.raises(ValueError):
        uq.sample_expansion([1.0], PCBasis("hermite", 0), 0, 1)


def test_silverman_rule():
    x = np.random.default_rng(0).normal(size=1000)
    q75, q25 = np.percentile(x, [75, 25])
    expected = 0.9 * min(x.std(ddof=1), (q75 - q25) / 1.34) * 1000 ** -0.2
    assert uq.silverman_bandwidth(x) == pytest.approx(expected, rel=1e-14)


def test_kde_of_normal_samples():
    x = np.random.default_rng(1).normal(size=100_000)
    pdf = uq.kde(x)
    assert len(pdf.grid) == 512
    assert abs(pdf.grid[np.argmax(pdf.density)]) < 0.05
    assert pdf.mass() == pytest.approx(1.0, abs=0.01)
    assert pdf.grid[0] == pytest.approx(x.min() - 3 * pdf.bandwidth)


def test_kde_matches_direct_sum():
    x = np.array([0.0, 0.3, 1.0, 1.1, 2.0, -0.5, 0.7, 0.2, 0.9, 1.5])
    pdf = uq.kde(x, bandwidth=0.4, n_grid=7)
    ref = np.exp(-0.5 * ((pdf.grid[:, None] - x) / 0.4) ** 2).sum(axis=1) / (10 * 0.4 * math.sqrt(2 * math.pi))
    np.testing.assert_allclose(pdf.density / np.trapezoid(pdf.density, pdf.grid),
                               ref / np.trapezoid(ref, pdf.grid), rtol=1e-13)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(10, 2000), scale=st.floats(1e-3, 1e3))
def test_kde_mass_is_one(seed, n, scale):
    x = np.random.default_rng(seed).standard_cauchy(n) * scale
    assert uq.kde(x).mass() == pytest.approx(1.0, abs=0.01)


def test_kde_degenerate_and_small_inputs():
    pdf = uq.kde(np.full(50, 0.7))
    assert pdf.degenerate
    assert pdf.mass() == pytest.approx(1.0, abs=0.01)
    assert len(uq.peaks(pdf)) == 1
    with pytest.raises(ValueError):
        uq.kde(np.arange(9.0))


def test_peaks_unimodal_and_bimodal():
    x = np.random.default_rng(2).normal(size=20_000)
    assert len(uq.peaks(uq.kde(x))) == 1
    y = np.concatenate([x * 0.2 - 2, x * 0.2 + 2])
    found = uq.peaks(uq.kde(y))
    assert len(found) == 2
    np.testing.assert_allclose([p for p, _ in found], [-2, 2], atol=0.05)
    assert len(uq.peaks(uq.kde(y), 1.0)) <= 1
    with pytest.raises(ValueError):
        uq.peaks(uq.kde(y), 0.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_peak_count_monotone_in_prominence(seed):
    rng = np.random.default_rng(seed)
    centres = rng.uniform(-5, 5, 4)
    x = (centres[:, None] + rng.normal(scale=0.4, size=(4, 300))).ravel()
    pdf = uq.kde(x)
    counts = [len(uq.peaks(pdf, f)) for f in np.linspace(0.01, 1.0, 12)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_extrema_of_third_hermite():
    b = PCBasis("hermite", 3)
    # psi_3 = He_3 / sqrt(6), so this expansion is xi^3 - 3 xi
    ext = uq.local_extrema([0, 0, 0, math.sqrt(6)], b)
    assert [k for *_, k in ext] == ["max", "min"]
    np.testing.assert_allclose([x for x, *_ in ext], [-1, 1], atol=1e-12)
    np.testing.assert_allclose([v for _, v, _ in ext], [2, -2], atol=1e-12)


def test_affine_and_constant_have_no_extrema():
    b = PCBasis("legendre", 4)
    assert uq.local_extrema([1.0, 0, 0, 0, 0], b) == []
    assert uq.local_extrema([1.0, 2.0, 0, 0, 0], b) == []


def test_extrema_outside_zone_are_dropped():
    b = PCBasis("legendre", 2)
    mono_to_pc = np.linalg.solve(np.array([b.to_monomial(e) for e in np.eye(3)]).T, [0, -4.0, 1.0])
    # (xi - 2)^2 - 4 has its minimum at xi = 2 > sqrt(3)
    assert uq.local_extrema(mono_to_pc, b) == []


def _grid_scan(mono, lo, hi, n=10_000):
    x = np.linspace(lo, hi, n)
    y = np.polynomial.polynomial.polyval(x, mono)
    d = np.diff(y)
    return x[1:-1][np.sign(d[:-1]) != np.sign(d[1:])]


@pytest.mark.parametrize("family", [Family.HERMITE, Family.LEGENDRE])
def test_extrema_against_grid_scan(family):
    rng = np.random.default_rng(5)
    zone = uq.SamplingZone.for_family(family)
    lo, hi = zone.interval
    checked = 0
    for _ in range(500):
        deg = rng.integers(0, 7)
        b = PCBasis(family, int(deg))
        c = rng.normal(size=deg + 1)
        found = np.array([x for x, *_ in uq.local_extrema(c, b, zone)])
        scan = _grid_scan(b.to_monomial(c), lo, hi)
        # skip polynomials with near-double critical points, which a grid scan cannot resolve
        if len(found) != len(scan):
            mono = b.to_monomial(c)
            second = np.polynomial.polynomial.polyder(mono, 2)
            assert np.any(np.abs(np.polynomial.polynomial.polyval(found, second)) < 1e-2) or \
                np.any(np.minimum(np.abs(found - lo), np.abs(found - hi)) < 1e-3)
            continue
        if len(found):
            assert np.abs(np.sort(found) - scan).max() < 1e-3 * (hi - lo)
        checked += 1
    assert checked > 450


def test_pdf_peaks_of_constant_expansion():
    pdf, found = uq.pdf_peaks_of_expansion([1.5, 0.0], PCBasis("hermite", 1), 100, 0)
    assert pdf.degenerate and found[0][0] == 1.5


def test_probabilistic_diagram():
    b = PCBasis("hermite", 1)
    assert uq.probabilistic_diagram([], b).records == []
    d = uq.probabilistic_diagram([(0.5, [1.0, 0.1]), (0.7, [2.0, 0.1], False)], b, n_samples=2000)
    assert d.mus().tolist() == [0.5]
    assert sum(r.weight for r in d.records) == pytest.approx(1.0)
    assert d.values_at(0.5)[0] == pytest.approx(1.0, abs=0.05)


def test_pointwise_pdf_stats():
    a = uq.kde(np.random.default_rng(0).normal(size=500))
    grid, mean, var = uq.pointwise_pdf_stats([a, a])
    np.testing.assert_allclose(var, 0, atol=1e-15)
    assert np.trapezoid(mean, grid) == pytest.approx(1.0, abs=0.01)


def test_count_clusters():
    assert uq.count_clusters([]) == 0
    assert uq.count_clusters([1.0]) == 1
    assert uq.count_clusters([-1.5, -1.45, 0.0, 0.02, 1.5]) == 3
    assert uq.count_clusters([0.0, 0.1, 0.2], gap=0.1) == 1


def test_solver_noise_counts_as_point_mass():
    x = np.random.default_rng(4).uniform(-1e-10, 1e-10, 1000)
    pdf = uq.kde(x)
    assert pdf.degenerate and len(uq.peaks(pdf)) == 1
    assert not uq.kde(x * 1e5).degenerate
