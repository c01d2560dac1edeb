"""Post-processing of polynomial chaos solutions.

Sampling of 1D expansions, Gaussian kernel density estimates, local
extrema inside the sampling zone, peak picking and probabilistic
bifurcation diagrams.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .diagram import BifurcationDiagram
from .pcbasis import SQRT3, Family, PCBasis

log = logging.getLogger(__name__)

KDE_GRID_POINTS = 512
DEFAULT_PROMINENCE = 0.05
# sample spreads below this (relative to max(1, |x|)) are solver noise and count as a point mass
KDE_RESOLUTION = 1e-6


@dataclass(frozen=True)
class SamplingZone:
    family: Family
    interval: tuple

    @classmethod
    def for_family(cls, family) -> "SamplingZone":
        family = Family.parse(family)
        if family is Family.HERMITE:
            return cls(family, (-3.0, 3.0))
        return cls(family, (-SQRT3, SQRT3))


@dataclass
class PdfEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    n_samples: int
    degenerate: bool = False

    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.grid))


def draw_seeds(family, n_samples: int, rng_seed=None) -> np.ndarray:
    rng = np.random.default_rng(rng_seed)
    if Family.parse(family) is Family.HERMITE:
        return rng.standard_normal(n_samples)
    return rng.uniform(-SQRT3, SQRT3, n_samples)


def sample_expansion(coeffs, basis: PCBasis, n_samples: int, rng_seed=None) -> np.ndarray:
    """Evaluate a univariate expansion at seeds drawn from the basis measure."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    xi = draw_seeds(basis.family, n_samples, rng_seed)
    return basis.evaluate(coeffs, xi)


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    std = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(std, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = std
    return float(0.9 * spread * len(x) ** (-0.2))


def kde(samples, bandwidth: float | None = None, n_grid: int = KDE_GRID_POINTS,
        resolution: float = KDE_RESOLUTION) -> PdfEstimate:
    """Gaussian-kernel density on a uniform grid spanning samples +/- 3 bandwidths.

    The gridded density is rescaled to unit trapezoidal mass. Samples whose
    spread is below ``resolution * max(1, max|x|)`` give a narrow density
    flagged ``degenerate``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if len(x) < 10:
        raise ValueError("kde needs at least 10 samples")
    spread = x.max() - x.min()
    degenerate = bool(spread <= resolution * max(1.0, np.abs(x).max()))
    if degenerate:
        bandwidth = 1e-6 * max(1.0, abs(float(x.mean())))
    elif bandwidth is None:
        bandwidth = silverman_bandwidth(x)
        if bandwidth <= 0:
            bandwidth = spread / 100.0
    h = float(bandwidth)
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, n_grid)
    density = np.zeros(n_grid)
    chunk = max(1, 4_000_000 // n_grid)
    for start in range(0, len(x), chunk):
        z = (grid[:, None] - x[None, start:start + chunk]) / h
        density += np.exp(-0.5 * z * z).sum(axis=1)
    density /= len(x) * h * np.sqrt(2 * np.pi)
    # on a grid much coarser than the bandwidth (heavy tails) the quadrature mass drifts from 1
    mass = np.trapezoid(density, grid)
    if mass > 0:
        density /= mass
    return PdfEstimate(grid=grid, density=density, bandwidth=h, n_samples=len(x), degenerate=degenerate)


def peaks(pdf: PdfEstimate, prominence_frac: float = DEFAULT_PROMINENCE) -> list:
    """Local maxima of the density with prominence above ``prominence_frac * max``."""
    if not 0 < prominence_frac <= 1:
        raise ValueError("prominence_frac must lie in (0, 1]")
    dens = pdf.density
    top = dens.max()
    if top <= 0:
        return []
    # zero padding lets maxima on the grid edge count
    padded = np.concatenate([[0.0], dens, [0.0]])
    idx, _ = find_peaks(padded, prominence=prominence_frac * top)
    idx = idx - 1
    return sorted((float(pdf.grid[i]), float(dens[i])) for i in idx)


def local_extrema(coeffs, basis: PCBasis, zone: SamplingZone | None = None, imag_tol: float = 1e-9) -> list:
    """Critical points of a univariate expansion inside the sampling zone.

    Returns ``(xi, value, kind)`` with ``kind`` in ``{"min", "max", "flat"}``.
    """
    zone = zone or SamplingZone.for_family(basis.family)
    mono = np.trim_zeros(basis.to_monomial(coeffs), "b")
    if len(mono) <= 2:
        return []
    scale = np.abs(mono).max()
    deriv = np.polynomial.polynomial.polyder(mono)
    deriv = np.trim_zeros(np.where(np.abs(deriv) < 1e-14 * scale, 0.0, deriv), "b")
    if len(deriv) <= 1:
        return []
    roots = np.polynomial.polynomial.polyroots(deriv)
    lo, hi = zone.interval
    second = np.polynomial.polynomial.polyder(mono, 2)
    out = []
    for r in roots:
        if abs(r.imag) > imag_tol or not lo < r.real < hi:
            continue
        x = float(r.real)
        curv = float(np.polynomial.polynomial.polyval(x, second))
        kind = "min" if curv > 0 else "max" if curv < 0 else "flat"
        out.append((x, float(np.polynomial.polynomial.polyval(x, mono)), kind))
    out.sort()
    return out


def pdf_peaks_of_expansion(coeffs, basis: PCBasis, n_samples: int = 20_000, rng_seed=0,
                           prominence_frac: float = DEFAULT_PROMINENCE, bandwidth=None):
    """Sample, estimate the density and pick its peaks; returns ``(pdf, peaks)``."""
    samples = sample_expansion(coeffs, basis, n_samples, rng_seed)
    pdf = kde(samples, bandwidth)
    if pdf.degenerate:
        return pdf, [(float(samples.mean()), float(pdf.density.max()))]
    return pdf, peaks(pdf, prominence_frac)


def probabilistic_diagram(runs, basis: PCBasis, n_samples: int = 20_000, rng_seed=0,
                          prominence_frac: float = DEFAULT_PROMINENCE, bandwidth=None) -> BifurcationDiagram:
    """Peaks of the sampled density for each ``(mu_mean, coeffs[, converged])`` run.

    Weights are peak densities divided by their sum over the run.
    """
    diagram = BifurcationDiagram(probabilistic=True)
    for run in runs:
        mu_mean, coeffs = run[0], run[1]
        converged = run[2] if len(run) > 2 else True
        if not converged:
            log.info("skipping non-converged run at mu_mean=%g", mu_mean)
            continue
        _, found = pdf_peaks_of_expansion(coeffs, basis, n_samples, rng_seed, prominence_frac, bandwidth)
        total = sum(d for _, d in found) or 1.0
        for loc, dens in found:
            diagram.add(mu_mean, loc, None, dens / total)
    return diagram


def pointwise_pdf_stats(pdfs, grid=None, n_grid: int = KDE_GRID_POINTS):
    """Pointwise mean and variance of several densities on a shared grid."""
    if grid is None:
        lo = min(p.grid[0] for p in pdfs)
        hi = max(p.grid[-1] for p in pdfs)
        grid = np.linspace(lo, hi, n_grid)
    stack = np.array([np.interp(grid, p.grid, p.density, left=0.0, right=0.0) for p in pdfs])
    return grid, stack.mean(axis=0), stack.var(axis=0)


def count_clusters(values, gap: float = 0.1) -> int:
    """Single-linkage cluster count of scalar values at the given gap."""
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        return 0
    return int(1 + np.count_nonzero(np.diff(v) > gap))
