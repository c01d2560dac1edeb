"""Stochastic Galerkin (SSFEM) solver for the channel flow with random viscosity.

Velocity and pressure are expanded in one polynomial chaos basis,
``v(x, xi) = sum_j U[:, j] psi_j(xi)`` and likewise for ``p`` with ``Q``.
Projecting the flow equations on every ``psi_m`` gives, for each mode,

    A U K[:, m] + sum_{j,h} f3[j, h, m] N(U_j, U_h) - C^T Q c2[:, m] = 0,
    -C U c2[:, m] = 0,

where ``K[j, m] = E[mu psi_j psi_m]`` comes from the viscosity expansion
and ``c2``, ``f3`` are the second and third moment tensors of the basis.
Boundary data are deterministic: mode 0 carries the inflow, higher modes
vanish on Dirichlet dofs.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .klexp import KLExpansion
from scipy.special import ndtr

from .nssolve import FlowProblem, LinearSolverError, continuation_sweep, newton_flow
from .pcbasis import Family, MomentTensors, PCBasis, SQRT3, build_moment_tensors

log = logging.getLogger(__name__)

VELOCITY, PRESSURE = "velocity", "pressure"


@dataclass
class StochasticField:
    """Spatial dofs by chaos modes; column 0 is the mean."""

    coeffs: np.ndarray
    basis: PCBasis
    role: str = VELOCITY

    def mean(self) -> np.ndarray:
        return mean_field(self.coeffs)

    def variance(self) -> np.ndarray:
        return variance_field(self.coeffs, self.basis)

    def realize(self, xi) -> np.ndarray:
        """Field values ``(n_samples, n_dofs)`` at seed values ``xi``."""
        return self.basis.vandermonde(xi) @ self.coeffs.T


def mean_field(U) -> np.ndarray:
    return np.asarray(U)[:, 0].copy()


def variance_field(U, basis: PCBasis) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    return (U[:, 1:] ** 2 * basis.norms[None, 1:]).sum(axis=1)


class SsfemSystem:
    """Coupled Galerkin system for one viscosity law and one basis."""

    def __init__(self, problem: FlowProblem, basis: PCBasis, mu_kl: KLExpansion,
                 moments: MomentTensors | None = None):
        if basis.n_rv != 1:
            raise ValueError("the flow solver takes a single random viscosity seed")
        self.problem = problem
        self.basis = basis
        self.mu_kl = mu_kl
        self.moments = moments if moments is not None else build_moment_tensors(basis, mu_kl)
        coef = np.asarray(mu_kl.modes, dtype=float)[:, 0]
        self.K = np.einsum("i,ijm->jm", coef, self.moments.e3[: len(coef)])
        self.c2 = self.moments.c2
        self.f3 = self.moments.f3
        space = problem.space
        self.n_v, self.n_p = space.n_v, space.n_p
        self.P = basis.size
        self._free_maps = {}

    # layout: mode-major blocks [v_0, p_0, v_1, p_1, ...]
    @property
    def n_block(self) -> int:
        return self.n_v + self.n_p

    @property
    def n_unknowns(self) -> int:
        return self.P * self.n_block

    def pack(self, U, Q) -> np.ndarray:
        return np.concatenate([U, Q], axis=0).T.ravel()

    def unpack(self, z):
        blocks = np.asarray(z, dtype=float).reshape(self.P, self.n_block).T
        return blocks[: self.n_v].copy(), blocks[self.n_v:].copy()

    def boundary_modes(self) -> np.ndarray:
        """Prescribed values on Dirichlet dofs, one column per mode."""
        g = np.zeros((len(self.problem.dofs), self.P))
        g[:, 0] = self.problem.values
        return g

    def impose(self, U) -> np.ndarray:
        U = np.array(U, dtype=float)
        U[self.problem.dofs] = self.boundary_modes()
        return U

    def _element_modes(self, U):
        space = self.problem.space
        n = space.n_q2
        cells = space.q2_cells
        return np.stack([U[:n][cells], U[n:][cells]], axis=2)     # (M, 9, 2, P)

    def residual(self, U, Q, constrained: bool = True) -> np.ndarray:
        T = self.problem.tensors
        U = np.asarray(U, dtype=float)
        Q = np.asarray(Q, dtype=float)
        rv = (T.A @ U) @ self.K + T.convection_batch(self._element_modes(U), self.f3) \
            - (T.C.T @ Q) @ self.c2
        rp = -(T.C @ U) @ self.c2
        if constrained:
            dofs = self.problem.dofs
            rv[dofs] = U[dofs] - self.boundary_modes()
        return self.pack(rv, rp)

    # Jacobian ------------------------------------------------------------
    def _maps(self, full: bool = False):
        """Positions of the kept velocity entries inside the shared CSR data arrays.

        ``full=False`` keeps free velocity dofs only, ``full=True`` keeps all.
        """
        key = bool(full)
        if key not in self._free_maps:
            T = self.problem.tensors
            fv = np.arange(self.n_v) if full else self.problem.free_v
            A = T.A
            tag = sp.csr_matrix((np.arange(1, A.nnz + 1, dtype=float), A.indices, A.indptr), shape=A.shape)
            sub = tag[fv][:, fv].tocsr()
            sub.sort_indices()
            vv_pos = sub.data.astype(np.int64) - 1
            CT = T.C.T.tocsr()[fv].tocsr()
            C = T.C.tocsr()[:, fv].tocsr()
            self._free_maps[key] = (sub.indices.copy(), sub.indptr.copy(), vv_pos, CT, C, len(fv))
        return self._free_maps[key]

    def jacobian_free(self, U, full: bool = False) -> sp.csc_matrix:
        """Coupled Jacobian restricted to free velocity dofs and all pressure dofs.

        With ``full=True`` every velocity dof is kept and no constraint is applied.
        """
        T = self.problem.tensors
        indices, indptr, pos, CT, C, nf = self._maps(full)
        ue = self._element_modes(U)
        conv = np.array([T.convection_jacobian_elements(ue[..., h]).data for h in range(self.P)])
        a_data = T.A.data
        if T.A.nnz != conv.shape[1]:
            raise RuntimeError("convection and diffusion patterns differ")
        blocks = [[None] * self.P for _ in range(self.P)]
        for m in range(self.P):
            for j in range(self.P):
                w = self.f3[j, :, m]
                k = self.K[j, m]
                c = self.c2[j, m]
                if k == 0 and c == 0 and not np.any(w):
                    continue
                data = k * a_data + w @ conv
                vv = sp.csr_matrix((data[pos], indices, indptr), shape=(nf, nf))
                vp = -c * CT if c else None
                pv = -c * C if c else None
                if c:
                    blocks[m][j] = sp.bmat([[vv, vp], [pv, None]], format="csr")
                else:
                    blocks[m][j] = sp.bmat([[vv, sp.csr_matrix((nf, self.n_p))],
                                            [sp.csr_matrix((self.n_p, nf)), None]], format="csr")
        return sp.bmat(blocks, format="csc")

    def free_indices(self) -> np.ndarray:
        nb = self.n_block
        local = self.problem.free
        return (np.arange(self.P)[:, None] * nb + local[None, :]).ravel()

    def jacobian(self, U, Q=None) -> sp.csr_matrix:
        """Derivative of the constrained residual (identity rows on Dirichlet dofs)."""
        jac = self.jacobian_free(U, full=True).tocsr()
        n = self.n_unknowns
        mask = np.ones(n)
        mask[self.free_indices()] = 0.0
        return (sp.diags(1.0 - mask) @ jac + sp.diags(mask)).tocsr()


@dataclass
class SsfemResult:
    U: np.ndarray
    Q: np.ndarray
    basis: PCBasis
    converged: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def velocity(self) -> StochasticField:
        return StochasticField(self.U, self.basis, VELOCITY)

    @property
    def pressure(self) -> StochasticField:
        return StochasticField(self.Q, self.basis, PRESSURE)


def ssfem_residual(system: SsfemSystem, U, Q) -> np.ndarray:
    return system.residual(U, Q)


def default_initial(system: SsfemSystem, noise: float = 1e-2, rng_seed=0, det_state=None):
    """Deterministic solve at the mean viscosity in mode 0 plus seeded noise in higher modes."""
    problem = system.problem
    if det_state is None:
        det_state = newton_flow(None, system.mu_kl.mu_bar, problem)
    rng = np.random.default_rng(rng_seed)
    U = np.zeros((system.n_v, system.P))
    Q = np.zeros((system.n_p, system.P))
    U[:, 0] = det_state.v
    Q[:, 0] = det_state.p
    if system.P > 1 and noise > 0:
        U[:, 1:] = rng.uniform(-noise, noise, (system.n_v, system.P - 1))
        Q[:, 1:] = rng.uniform(-noise, noise, (system.n_p, system.P - 1))
    return system.impose(U), Q


def branch_initial(system: SsfemSystem, states=None, n_quad: int = 400, sweep_step: float = 0.01):
    """Projection of a piecewise-constant branch selection onto the chaos basis.

    The seed line is split into ``len(states)`` regions of equal
    probability and region ``k`` is mapped to ``states[k]``. The chaos
    coefficients are the Galerkin projection of this map. Without
    ``states``, a continuation sweep from above the critical region down
    to the mean viscosity supplies the upper, symmetric and lower branch
    states (only the symmetric one when the sweep finds no split).
    """
    problem = system.problem
    if states is None:
        mu_bar = float(system.mu_kl.mu_bar)
        sweep = continuation_sweep(max(mu_bar + 0.1, 1.1), mu_bar, sweep_step, problem)
        mu_last = sweep.diagram.mus()[0]
        states = [sweep.states[(lab, mu_last)] for lab in ("upper", "sym", "lower")
                  if (lab, mu_last) in sweep.states and sweep.states[(lab, mu_last)].converged]
    if not states:
        raise ValueError("no branch states to project")
    basis = system.basis
    xi, w = basis.quadrature(n_quad)
    x = xi[:, 0]
    cdf = ndtr(x) if basis.family is Family.HERMITE else (x + SQRT3) / (2 * SQRT3)
    region = np.minimum((cdf * len(states)).astype(int), len(states) - 1)
    psi = basis.vandermonde(xi)
    proj = (psi * w[:, None]) / basis.norms
    V = np.array([s.v for s in states])[region]
    Pq = np.array([s.p for s in states])[region]
    return system.impose(V.T @ proj), Pq.T @ proj


def ssfem_newton(system: SsfemSystem, initial=None, tol: float = 1e-8, max_iter: int = 50,
                 line_search: bool = True, max_halvings: int = 8) -> SsfemResult:
    """Newton iteration on the coupled system with backtracking on the residual infinity norm."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    start = time.perf_counter()
    U, Q = initial if initial is not None else default_initial(system)
    U = system.impose(U)
    Q = np.array(Q, dtype=float)
    if U.shape != (system.n_v, system.P) or Q.shape != (system.n_p, system.P):
        raise ValueError("initial fields do not match the system shape")
    z = system.pack(U, Q)
    free = system.free_indices()
    r = system.residual(*system.unpack(z))
    rn = float(np.abs(r).max())
    history = [rn]
    status = "max_iter"
    it = 0
    while it < max_iter:
        if rn < tol:
            status = "ok"
            break
        if not np.isfinite(rn):
            status = "diverged"
            break
        try:
            lu = spla.splu(system.jacobian_free(system.unpack(z)[0]))
        except RuntimeError as exc:
            status = "singular"
            log.warning("singular coupled Jacobian: %s", exc)
            break
        step = np.zeros_like(z)
        step[free] = -lu.solve(r[free])
        del lu
        t = 1.0
        for _ in range(max_halvings + 1):
            trial = z + t * step
            r_trial = system.residual(*system.unpack(trial))
            rn_trial = float(np.abs(r_trial).max())
            if not line_search or rn_trial < rn:
                break
            t *= 0.5
        else:
            status = "line_search_stalled"
            it += 1
            break
        z, r, rn = trial, r_trial, rn_trial
        history.append(rn)
        it += 1
    if status == "max_iter" and rn < tol:
        status = "ok"
    U, Q = system.unpack(z)
    diag = {"iterations": it, "residual_history": history, "residual_norm": rn, "status": status,
            "wall_time": time.perf_counter() - start, "n_unknowns": system.n_unknowns}
    return SsfemResult(U, Q, system.basis, status == "ok", diag)


def point_polynomial(U, space, point, component: int = 1) -> np.ndarray:
    """Chaos coefficients of one velocity component at a physical point."""
    nodes, w = space.point_weights(point)
    U = np.asarray(U, dtype=float)
    return w @ U[component * space.n_q2 + nodes]


def component_variance(U, basis: PCBasis, space, component: int = 1) -> np.ndarray:
    """Variance of one velocity component at every Q2 node."""
    n = space.n_q2
    return variance_field(np.asarray(U)[component * n:(component + 1) * n], basis)


__all__ = ["StochasticField", "SsfemSystem", "SsfemResult", "mean_field", "variance_field",
           "ssfem_residual", "ssfem_newton", "default_initial", "branch_initial", "point_polynomial",
           "component_variance", "LinearSolverError"]
