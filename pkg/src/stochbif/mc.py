"""Monte Carlo ensembles of deterministic flow solves with random viscosity.

Each sample draws a viscosity, picks an initial guess according to a
policy and runs the deterministic Newton solver. The policies differ in
which solution branch the solver tends to land on, which is the bias the
intrusive method avoids.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .klexp import KLExpansion
from .nssolve import PASSES, FlowProblem, FlowState, SweepResult, newton_flow
from .pcbasis import Family

log = logging.getLogger(__name__)

DRAW_BOUNDS = (0.4, 2.5)


class InitPolicy(str, Enum):
    ZERO = "zero"
    CONTINUATION = "continuation"
    CYCLING = "cycling"

    @classmethod
    def parse(cls, value) -> "InitPolicy":
        if isinstance(value, cls):
            return value
        aliases = {"zeroguess": cls.ZERO, "continuationguess": cls.CONTINUATION,
                   "branchcycling": cls.CYCLING, "branch": cls.CYCLING}
        key = str(value).lower().replace("_", "").replace("-", "")
        if key in aliases:
            return aliases[key]
        return cls(str(value).lower())


@dataclass
class McSample:
    sample_id: int
    mu_draw: float
    state: FlowState
    init_policy: InitPolicy
    init_label: str = ""

    @property
    def converged(self) -> bool:
        return self.state.converged


@dataclass
class McEnsemble:
    samples: list
    init_policy: InitPolicy
    rng_seed: int
    rejected: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def mu_draws(self) -> np.ndarray:
        return np.array([s.mu_draw for s in self.samples])

    def converged_samples(self) -> list:
        return [s for s in self.samples if s.converged]


def draw_parameters(dist: KLExpansion, n_samples: int, rng_seed, bounds=DRAW_BOUNDS):
    """Seeded viscosity draws; Gaussian draws outside ``bounds`` are rejected and redrawn.

    Returns ``(draws, n_rejected)``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    lo, hi = bounds
    out = []
    rejected = 0
    while len(out) < n_samples:
        xi = dist.sample_seeds(n_samples - len(out), rng)
        vals = dist.realize(xi)[:, 0]
        if dist.seed_family is Family.HERMITE and dist.n_kl:
            ok = (vals >= lo) & (vals <= hi)
            rejected += int(np.count_nonzero(~ok))
            vals = vals[ok]
        out.extend(vals.tolist())
    if rejected:
        log.info("rejected %d draws outside [%g, %g]", rejected, lo, hi)
    return np.array(out[:n_samples]), rejected


def _branch_states(sweep: SweepResult, mu: float):
    """Distinct converged states at the sweep parameter nearest to ``mu``."""
    grid = np.array(sorted({m for (_, m) in sweep.states}))
    nearest = float(grid[np.argmin(np.abs(grid - mu))])
    out = []
    for label in PASSES:
        s = sweep.states.get((label, nearest))
        if s is None or not s.converged:
            continue
        if any(np.abs(s.v - o.v).max() <= 1e-8 * max(1.0, np.abs(o.v).max()) for _, o in out):
            continue
        out.append((label, s))
    return nearest, out


def run_mc(dist: KLExpansion, n_samples: int, init_policy, rng_seed, problem: FlowProblem,
           sweep: SweepResult | None = None, tol: float = 1e-9, max_iter: int = 30,
           jobs: int = 1) -> McEnsemble:
    """Solve the flow at ``n_samples`` seeded viscosity draws.

    ``zero`` starts every solve from the zero field. ``continuation``
    starts from a branch state of ``sweep`` at the nearest parameter,
    chosen uniformly at random per sample. ``cycling`` walks the passes of
    ``sweep`` round-robin (falling back to the first distinct state where a
    pass coincides with another).
    """
    policy = InitPolicy.parse(init_policy)
    if policy is not InitPolicy.ZERO and sweep is None:
        raise ValueError(f"init policy '{policy.value}' needs a deterministic sweep")
    draws, rejected = draw_parameters(dist, n_samples, rng_seed)
    picks = np.random.default_rng(np.random.SeedSequence(rng_seed).spawn(1)[0]).random(n_samples)

    def guess(k, mu):
        if policy is InitPolicy.ZERO:
            return None, "zero"
        _, states = _branch_states(sweep, mu)
        if not states:
            return None, "zero"
        if policy is InitPolicy.CONTINUATION:
            label, s = states[int(picks[k] * len(states))]
        else:
            wanted = PASSES[k % len(PASSES)]
            label, s = next(((lab, st) for lab, st in states if lab == wanted), states[0])
        return s, label

    def solve(k):
        mu = float(draws[k])
        init, label = guess(k, mu)
        state = newton_flow(init, mu, problem, tol, max_iter)
        if not state.converged:
            log.info("sample %d at mu=%g did not converge", k, mu)
        return McSample(k, mu, state, policy, label)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(solve, range(n_samples)))
    else:
        samples = [solve(k) for k in range(n_samples)]
    return McEnsemble(samples, policy, rng_seed, rejected)


@dataclass
class EnsembleStats:
    mean: np.ndarray          # velocity dofs
    variance: np.ndarray      # unbiased sample variance per velocity dof
    scatter: np.ndarray       # (n, 2): mu_draw, probe observable
    n_converged: int


def ensemble_stats(ensemble: McEnsemble, problem: FlowProblem) -> EnsembleStats:
    good = ensemble.converged_samples()
    if len(good) < 2:
        raise ValueError("ensemble statistics need at least 2 converged samples")
    V = np.array([s.state.v for s in good])
    scatter = np.array([(s.mu_draw, problem.observable(s.state.v)) for s in good])
    return EnsembleStats(V.mean(axis=0), V.var(axis=0, ddof=1), scatter, len(good))


def vy_variance(stats: EnsembleStats, problem: FlowProblem) -> np.ndarray:
    """Variance of the vertical velocity at every Q2 node."""
    n = problem.space.n_q2
    return stats.variance[n:2 * n]
