"""Karhunen-Loeve representations of stochastic parameters.

``scalar_kl`` covers the spatially constant parameter used by the
pitchfork and channel-flow solvers: ``mu = mu_bar + sigma * xi``.
``nystrom_kl`` discretises the covariance operator on a weighted grid and
keeps the dominant eigenpairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .pcbasis import SQRT3, Family


@dataclass(frozen=True)
class KLExpansion:
    """Mean plus ``n_kl`` weighted modes.

    ``lambdas`` and ``modes`` include the convention slot 0
    (``lambda_0 = 1``, ``pi_0 = mean``, ``xi_0 = 1``). ``modes`` holds one
    row per slot, evaluated on ``grid`` (a single column for a scalar
    parameter).
    """

    mean: np.ndarray
    lambdas: np.ndarray
    modes: np.ndarray
    seed_family: Family
    grid: np.ndarray | None = None
    weights: np.ndarray | None = None
    clipped: bool = False
    discarded_energy: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def n_kl(self) -> int:
        return len(self.lambdas) - 1

    @property
    def sqrt_lambdas(self) -> np.ndarray:
        return np.sqrt(self.lambdas)

    @property
    def sigma(self) -> float:
        """Standard deviation of a scalar expansion (0 for deterministic)."""
        return float(math.sqrt(self.lambdas[1])) if self.n_kl else 0.0

    @property
    def mu_bar(self) -> float:
        return float(np.ravel(self.mean)[0])

    def realize(self, xi) -> np.ndarray:
        """Field values for seed vectors ``xi`` of shape ``(n_samples, n_kl)``."""
        xi = np.asarray(xi, dtype=float)
        if xi.ndim == 1:
            xi = xi.reshape(-1, 1) if self.n_kl == 1 else xi.reshape(1, -1)
        if self.n_kl == 0:
            return np.broadcast_to(self.modes[0], (xi.shape[0], self.modes.shape[1])).copy()
        scaled = xi[:, : self.n_kl] * self.sqrt_lambdas[1:]
        return self.modes[0][None, :] + scaled @ self.modes[1:]

    def sample_seeds(self, n: int, rng) -> np.ndarray:
        if self.seed_family is Family.HERMITE:
            return rng.standard_normal((n, max(self.n_kl, 1)))
        return rng.uniform(-SQRT3, SQRT3, (n, max(self.n_kl, 1)))

    def truncation_error(self, total_variance: float) -> float:
        """Variance not captured by the kept modes."""
        return float(total_variance - self.lambdas[1:].sum())


def scalar_kl(mu_bar: float, sigma: float, seed_family="gaussian") -> KLExpansion:
    """One-mode expansion ``mu_bar + sigma * xi`` with unit-variance seed."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    family = Family.parse(seed_family)
    if sigma == 0:
        return KLExpansion(mean=np.array([float(mu_bar)]), lambdas=np.array([1.0]),
                           modes=np.array([[float(mu_bar)]]), seed_family=family)
    return KLExpansion(mean=np.array([float(mu_bar)]), lambdas=np.array([1.0, float(sigma) ** 2]),
                       modes=np.array([[float(mu_bar)], [1.0]]), seed_family=family)


def uniform_kl(lo: float, hi: float) -> KLExpansion:
    """``U(lo, hi)`` as a scalar expansion on the Legendre seed."""
    if hi < lo:
        raise ValueError("upper bound below lower bound")
    return scalar_kl(0.5 * (lo + hi), (hi - lo) / (2.0 * SQRT3), Family.LEGENDRE)


def nystrom_kl(cov_kernel, grid, weights, n_modes: int, mean=0.0,
               seed_family="gaussian", sym_tol: float = 1e-10) -> KLExpansion:
    """Dominant eigenpairs of the covariance operator on a quadrature grid.

    Solves ``W^1/2 K W^1/2 y = lambda y`` and returns ``pi = W^-1/2 y``, so
    the modes are orthonormal under the grid weights.
    """
    grid = np.asarray(grid, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("quadrature weights must be positive")
    pts = grid if grid.ndim > 1 else grid[:, None]
    args = pts[:, 0].tolist() if pts.shape[1] == 1 else list(pts)
    kmat = np.array([[cov_kernel(x, y) for y in args] for x in args], dtype=float)
    asym = np.abs(kmat - kmat.T).max() if kmat.size else 0.0
    if asym > sym_tol * max(1.0, np.abs(kmat).max()):
        raise ValueError(f"covariance matrix is not symmetric (max asymmetry {asym:.3e})")
    sw = np.sqrt(weights)
    vals, vecs = linalg.eigh(sw[:, None] * kmat * sw[None, :])
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    clipped = bool(np.any(vals < -1e-10))
    vals = np.where(vals < 0, 0.0, vals)
    scale = max(float(np.abs(vals).sum()), 1e-300)
    keep = [k for k in range(min(int(n_modes), len(vals))) if vals[k] > 1e-12 * scale]
    lam = vals[keep]
    modes = (vecs[:, keep] / sw[:, None]).T
    # fix the sign so the largest entry is positive
    for k in range(len(keep)):
        if modes[k, np.argmax(np.abs(modes[k]))] < 0:
            modes[k] *= -1.0
    mean_vec = np.broadcast_to(np.asarray(mean, dtype=float), (len(weights),)).copy()
    return KLExpansion(mean=mean_vec, lambdas=np.concatenate([[1.0], lam]),
                       modes=np.vstack([mean_vec, modes]) if len(keep) else mean_vec[None, :],
                       seed_family=Family.parse(seed_family), grid=grid, weights=weights,
                       clipped=clipped, discarded_energy=float(vals.sum() - lam.sum()))
