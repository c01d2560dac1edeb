"""Stochastic Galerkin solver for the supercritical pitchfork normal form.

Equilibria satisfy ``u (u^2 - mu) = 0``. With ``mu = mu_bar + sigma * xi``
and ``u(xi) = sum_i c_i psi_i(xi)`` the Galerkin system is

    R_k(c) = E[(u^3 - mu u) psi_k] = 0,    k = 0..N_PC,

solved by plain Newton from (possibly random) initial coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diagram import BifurcationDiagram
from .klexp import KLExpansion, scalar_kl, uniform_kl
from .pcbasis import Family, PCBasis
from . import uq_stats

# perturbation presets: half-widths of U(mu_bar - h, mu_bar + h)
EXPLORE_HALF_WIDTH = 1.0
REFINE_HALF_WIDTH = 0.01


@dataclass
class PitchforkPCSolution:
    coeffs: np.ndarray
    basis: PCBasis
    mu: KLExpansion
    converged: bool
    residual_norm: float
    iterations: int = 0
    status: str = "ok"
    history: list = field(default_factory=list)

    def evaluate(self, xi):
        return self.basis.evaluate(self.coeffs, xi)


class _Quadrature:
    """Gauss rule exact for the quartic integrands of residual and Jacobian."""

    def __init__(self, basis: PCBasis, mu_kl: KLExpansion):
        nodes, self.weights = basis.quadrature(2 * basis.max_degree + 2)
        self.psi = basis.vandermonde(nodes)
        self.mu = mu_kl.realize(nodes[:, : max(mu_kl.n_kl, 1)])[:, 0]


def _check(coeffs, basis):
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.size,):
        raise ValueError(f"expected {basis.size} coefficients, got shape {coeffs.shape}")
    return coeffs


def residual(coeffs, basis: PCBasis, mu_kl: KLExpansion, _quad=None) -> np.ndarray:
    coeffs = _check(coeffs, basis)
    q = _quad or _Quadrature(basis, mu_kl)
    u = q.psi @ coeffs
    return q.psi.T @ (q.weights * (u ** 3 - q.mu * u))


def jacobian(coeffs, basis: PCBasis, mu_kl: KLExpansion, _quad=None) -> np.ndarray:
    """``J[k, i] = E[(3 u^2 - mu) psi_i psi_k]``."""
    coeffs = _check(coeffs, basis)
    q = _quad or _Quadrature(basis, mu_kl)
    u = q.psi @ coeffs
    return (q.psi * (q.weights * (3 * u ** 2 - q.mu))[:, None]).T @ q.psi


def _is_singular(jac, coeffs, q, cond_limit) -> bool:
    """Relative test plus an absolute one scaled by the size of the Jacobian's terms."""
    sv = np.linalg.svd(jac, compute_uv=False)
    u = q.psi @ coeffs
    scale = np.abs(q.psi).T @ (q.weights * (3 * u ** 2 + np.abs(q.mu)))
    return bool(sv[-1] * cond_limit <= sv[0] or sv[-1] <= 1e-13 * float(scale.max()))


def newton_solve(initial, basis: PCBasis, mu_kl: KLExpansion, tol: float = 1e-10,
                 max_iter: int = 100, cond_limit: float = 1e13) -> PitchforkPCSolution:
    """Undamped Newton iteration; a singular Jacobian aborts with ``status='singular'``.

    The Jacobian counts as singular when its condition number exceeds
    ``cond_limit`` or its smallest singular value is below ``1e-13`` times
    the magnitude of the integrand ``3 u^2 + |mu|``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = _Quadrature(basis, mu_kl)
    c = _check(initial, basis).copy()
    history = []
    for it in range(max_iter + 1):
        r = residual(c, basis, mu_kl, q)
        rn = float(np.abs(r).max())
        history.append(rn)
        if not np.isfinite(rn):
            return PitchforkPCSolution(c, basis, mu_kl, False, rn, it, "diverged", history)
        if rn < tol:
            return PitchforkPCSolution(c, basis, mu_kl, True, rn, it, "ok", history)
        if it == max_iter:
            break
        jac = jacobian(c, basis, mu_kl, q)
        if not np.all(np.isfinite(jac)) or _is_singular(jac, c, q, cond_limit):
            return PitchforkPCSolution(c, basis, mu_kl, False, rn, it, "singular", history)
        c = c - np.linalg.solve(jac, r)
    return PitchforkPCSolution(c, basis, mu_kl, False, history[-1], max_iter, "max_iter", history)


def random_initializations(count: int, amplitude: float, rng_seed, n_coeffs: int) -> list:
    """``count`` vectors with i.i.d. entries uniform in ``[-amplitude, amplitude]``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    return [rng.uniform(-amplitude, amplitude, n_coeffs) for _ in range(count)]


def make_mu(mu_bar: float, family, spread: float) -> KLExpansion:
    """Parameter law: ``spread`` is the half-width for uniform, the variance for Gaussian."""
    if Family.parse(family) is Family.LEGENDRE:
        return uniform_kl(mu_bar - spread, mu_bar + spread)
    return scalar_kl(mu_bar, math.sqrt(spread), Family.HERMITE)


def solve_ensemble(basis: PCBasis, mu_kl: KLExpansion, count: int = 100, amplitude: float = 3.0,
                   rng_seed=42, tol: float = 1e-10, max_iter: int = 100) -> list:
    inits = random_initializations(count, amplitude, rng_seed, basis.size)
    return [newton_solve(c0, basis, mu_kl, tol, max_iter) for c0 in inits]


def distinct_solutions(solutions, resolution: float = 1e-6) -> list:
    """Converged coefficient vectors that differ by more than ``resolution``."""
    out = []
    for s in solutions:
        if s.converged and not any(np.abs(s.coeffs - o).max() <= resolution for o in out):
            out.append(s.coeffs)
    return out


@dataclass
class SweepEntry:
    mu_mean: float
    init_id: int
    solution: PitchforkPCSolution
    peaks: list


def sweep_diagram(mu_means, half_width: float, basis: PCBasis, inits_per_mu: int = 1,
                  amplitude: float = 3.0, rng_seed=0, n_samples: int = 20_000,
                  prominence_frac: float = uq_stats.DEFAULT_PROMINENCE,
                  tol: float = 1e-10, max_iter: int = 100):
    """Solve ``mu ~ U(mu_bar - h, mu_bar + h)`` for each mean and pick density peaks.

    Each mean gets its own deterministic RNG stream spawned from
    ``rng_seed``. Returns ``(diagram, entries)``; non-converged solves are
    kept in ``entries`` and added to the diagram with ``converged=False``.
    """
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    mu_means = np.asarray(mu_means, dtype=float)
    streams = np.random.SeedSequence(rng_seed).spawn(len(mu_means))
    diagram = BifurcationDiagram(probabilistic=True, observable_spec=("u", 0))
    entries = []
    for mu_bar, ss in zip(mu_means, streams):
        mu_kl = uniform_kl(mu_bar - half_width, mu_bar + half_width)
        rng = np.random.default_rng(ss)
        for init_id in range(inits_per_mu):
            c0 = rng.uniform(-amplitude, amplitude, basis.size)
            sol = newton_solve(c0, basis, mu_kl, tol, max_iter)
            found = []
            if sol.converged:
                _, found = uq_stats.pdf_peaks_of_expansion(
                    sol.coeffs, basis, n_samples, rng.integers(2**32), prominence_frac)
                total = sum(d for _, d in found) or 1.0
                for loc, dens in found:
                    diagram.add(mu_bar, loc, str(init_id), dens / total)
            else:
                diagram.add(mu_bar, float("nan"), str(init_id), 0.0, converged=False)
            entries.append(SweepEntry(float(mu_bar), init_id, sol, found))
    return diagram, entries
