"""Steady incompressible Navier-Stokes solves on a Taylor-Hood space.

The unknown vector is ``x = [v, p]`` with ``v`` component-blocked. The
discrete equations are

    mu A v + N(v, v) - C^T p = 0,     -C v = 0,

with Dirichlet velocity dofs held at their prescribed values. In the full
residual the constrained rows read ``v - g``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .diagram import BifurcationDiagram
from .fem import FemTensors, TaylorHoodSpace, assemble_fem_tensors, build_space
from .mesh import build_channel_mesh

log = logging.getLogger(__name__)

PROBE = (15.0, 3.75)


class LinearSolverError(RuntimeError):
    pass


@dataclass
class FlowState:
    v: np.ndarray
    p: np.ndarray
    mu: float
    residual_norm: float = float("nan")
    converged: bool = False
    iterations: int = 0
    history: list = field(default_factory=list)
    jacobian_sign: int = 0      # sign of det of the last factored Jacobian, 0 if none

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.v, self.p])


class FlowProblem:
    """Assembled operators, constraint data and probe weights of one mesh."""

    def __init__(self, space: TaylorHoodSpace, tensors: FemTensors | None = None,
                 inflow_scale: float = 1.0, probe=PROBE):
        self.space = space
        self.tensors = tensors if tensors is not None else assemble_fem_tensors(space)
        self.dofs, self.values = space.dirichlet_vector(inflow_scale)
        self.free_v = space.free_velocity_dofs()
        self.free = np.concatenate([self.free_v, space.n_v + np.arange(space.n_p)])
        self.probe = tuple(probe)
        self._probe_nodes, self._probe_w = space.point_weights(self.probe)

    @classmethod
    def from_preset(cls, preset: str = "coarse-unstructured", refinement: int = 0, **kw) -> "FlowProblem":
        mesh = build_channel_mesh(preset, refinement)
        return cls(build_space(mesh), **kw)

    @property
    def n_dofs(self) -> int:
        return self.space.n_dofs

    def split(self, x):
        return x[: self.space.n_v], x[self.space.n_v:]

    def lift(self, v=None) -> np.ndarray:
        """Velocity vector with the Dirichlet values imposed."""
        out = np.zeros(self.space.n_v) if v is None else np.array(v, dtype=float)
        out[self.dofs] = self.values
        return out

    def zero_state(self, mu: float) -> FlowState:
        return FlowState(self.lift(), np.zeros(self.space.n_p), float(mu))

    def observable(self, v, component: int = 1) -> float:
        """Velocity component at the probe point."""
        off = component * self.space.n_q2
        return float(self._probe_w @ v[off + self._probe_nodes])

    def divergence(self, v) -> np.ndarray:
        return self.tensors.C @ v


def ns_residual(x, mu: float, problem: FlowProblem, constrained: bool = True,
                convection: bool = True) -> np.ndarray:
    T = problem.tensors
    v, p = problem.split(np.asarray(x, dtype=float))
    rv = mu * (T.A @ v) - T.C.T @ p
    if convection:
        rv = rv + T.convection(v)
    if constrained:
        rv[problem.dofs] = v[problem.dofs] - problem.values
    return np.concatenate([rv, -(T.C @ v)])


def ns_jacobian(x, mu: float, problem: FlowProblem, constrained: bool = True,
                convection: bool = True) -> sp.csr_matrix:
    T = problem.tensors
    v, _ = problem.split(np.asarray(x, dtype=float))
    top = mu * T.A
    if convection:
        top = top + T.convection_jacobian(v)
    jac = sp.bmat([[top, -T.C.T], [-T.C, None]], format="csr")
    if constrained:
        mask = np.zeros(jac.shape[0])
        mask[problem.dofs] = 1.0
        jac = (sp.diags(1.0 - mask) @ jac + sp.diags(mask)).tocsr()
    return jac


def _permutation_parity(perm) -> int:
    """+1 for even permutations, -1 for odd ones."""
    perm = np.asarray(perm)
    seen = np.zeros(len(perm), dtype=bool)
    transpositions = 0
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        k = start
        while not seen[k]:
            seen[k] = True
            k = perm[k]
            length += 1
        transpositions += length - 1
    return -1 if transpositions % 2 else 1


def determinant_sign(lu) -> int:
    """Sign of the determinant of a matrix from its SuperLU factors."""
    diag = lu.U.diagonal()
    if np.any(diag == 0):
        return 0
    neg = np.count_nonzero(diag < 0) % 2
    return (-1 if neg else 1) * _permutation_parity(lu.perm_r) * _permutation_parity(lu.perm_c)


def _factor(matrix):
    try:
        return spla.splu(matrix.tocsc())
    except RuntimeError as exc:   # exactly singular factor
        raise LinearSolverError(str(exc)) from exc


def newton_flow(initial: FlowState | None, mu: float, problem: FlowProblem, tol: float = 1e-9,
                max_iter: int = 30, line_search: bool = True, max_halvings: int = 8,
                convection: bool = True, with_sign: bool = False) -> FlowState:
    """Newton iteration with backtracking on the residual infinity norm.

    Dirichlet values are imposed on the initial guess, so the iteration
    runs over free velocity dofs and all pressure dofs. The sign of the
    Jacobian determinant from the last factorization is recorded; with
    ``with_sign`` it is computed even when no step was taken.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    init = initial if initial is not None else problem.zero_state(mu)
    x = np.concatenate([problem.lift(init.v), np.asarray(init.p, dtype=float)])
    free = problem.free
    r = ns_residual(x, mu, problem, convection=convection)
    rn = float(np.abs(r).max())
    history = [rn]
    it = 0
    sign = 0
    while rn >= tol and it < max_iter and np.isfinite(rn):
        jac = ns_jacobian(x, mu, problem, constrained=False, convection=convection)
        lu = _factor(jac[free][:, free])
        sign = determinant_sign(lu)
        step = np.zeros_like(x)
        step[free] = -lu.solve(r[free])
        t = 1.0
        for _ in range(max_halvings + 1):
            trial = x + t * step
            r_trial = ns_residual(trial, mu, problem, convection=convection)
            rn_trial = float(np.abs(r_trial).max())
            if not line_search or rn_trial < rn:
                break
            t *= 0.5
        else:
            # no decrease within the allowed halvings: stop with the last accepted iterate
            it += 1
            log.info("line search stalled at mu=%g, residual %.3e", mu, rn)
            break
        x, r, rn = trial, r_trial, rn_trial
        history.append(rn)
        it += 1
    v, p = problem.split(x)
    if with_sign and sign == 0 and np.isfinite(rn):
        jac = ns_jacobian(x, mu, problem, constrained=False, convection=convection)
        sign = determinant_sign(_factor(jac[free][:, free]))
    return FlowState(v.copy(), p.copy(), float(mu), rn, bool(rn < tol), it, history, sign)


def stokes_solve(mu: float, problem: FlowProblem) -> FlowState:
    """Linear Stokes flow: one Newton step without convection."""
    return newton_flow(None, mu, problem, tol=1e-10, max_iter=3, convection=False)


def mirror_state(state: FlowState, problem: FlowProblem, maps=None) -> FlowState:
    """Reflection of a flow about the channel axis (requires a mirror-symmetric mesh)."""
    vperm, vsign, pperm = maps if maps is not None else problem.space.mirror_dof_map()
    return FlowState(vsign * state.v[vperm], state.p[pperm], state.mu)


def asymmetric_direction(problem: FlowProblem, centre: float = 15.0, width: float = 5.0) -> np.ndarray:
    """Smooth velocity field that is odd under the axis reflection.

    The vertical component is a bump centred on the axis in the expansion
    region; it vanishes on walls and at the inlet.
    """
    space = problem.space
    geo = space.mesh.geometry
    L0 = geo.inlet_length

    def field(x, y):
        s = np.clip((x - L0) / (geo.total_length - L0), 0.0, 1.0)
        bump = np.exp(-(((x - centre) / width) ** 2)) * np.sin(np.pi * s) * np.sin(np.pi * y / geo.height)
        return np.zeros_like(x), np.where(x > L0, bump, 0.0)

    d = space.interpolate_velocity(field)
    d[problem.dofs] = 0.0
    return d / np.abs(d).max()


def critical_mode(state: FlowState, problem: FlowProblem) -> np.ndarray:
    """Eigenvector of the free Jacobian with eigenvalue closest to zero.

    Returned as a full ``(v, p)`` vector with zero Dirichlet entries,
    scaled so that the largest velocity entry is 1. Near a symmetry
    breaking bifurcation this is the dominant asymmetric perturbation.
    """
    jac = ns_jacobian(state.x, state.mu, problem, constrained=False)
    free = problem.free
    # fixed start vector keeps the result reproducible
    _, vecs = spla.eigs(jac[free][:, free].tocsc(), k=1, sigma=0.0, v0=np.ones(len(free)))
    out = np.zeros(problem.n_dofs)
    out[free] = vecs[:, 0].real
    return out / np.abs(out[: problem.space.n_v]).max()


@dataclass
class SweepResult:
    diagram: BifurcationDiagram
    states: dict            # (pass_id, mu) -> FlowState
    mu_star: float | None
    first_post_critical: float | None

    def branch_values(self, mu, tol: float = 1e-9) -> np.ndarray:
        """Sorted distinct converged observables at ``mu`` (merged within 1e-6)."""
        vals = np.sort(self.diagram.values_at(mu, tol))
        if len(vals) == 0:
            return vals
        keep = [vals[0]]
        for v in vals[1:]:
            if v - keep[-1] > 1e-6 * max(1.0, abs(v)):
                keep.append(v)
        return np.array(keep)


KICK_AMPLITUDES = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
PASSES = ("sym", "upper", "lower")


def _mu_grid(mu_from, mu_to, step):
    n = int(round(abs(mu_from - mu_to) / step))
    sign = -1.0 if mu_to < mu_from else 1.0
    return np.round(mu_from + sign * step * np.arange(n + 1), 12)


def seek_branches(base: FlowState, mu: float, problem: FlowProblem, direction=None,
                  amplitudes=KICK_AMPLITUDES, distinct_tol: float = 1e-3, tol: float = 1e-9,
                  max_iter: int = 30) -> dict:
    """Newton solves from ``base +/- a * direction`` for growing kick sizes ``a``.

    ``direction`` is a velocity vector or a full ``(v, p)`` vector.

    Returns ``{"upper": state, "lower": state}`` for the kicks that land on
    a converged state whose observable is above / below the base
    observable by more than ``distinct_tol``; missing keys were not found.
    """
    direction = asymmetric_direction(problem) if direction is None else np.asarray(direction, dtype=float)
    if len(direction) == len(base.v):
        direction = np.concatenate([direction, np.zeros(len(base.p))])
    obs0 = problem.observable(base.v)
    found = {}
    for label, sign in (("upper", 1.0), ("lower", -1.0)):
        for amp in amplitudes:
            kick = sign * amp * direction
            guess = FlowState(base.v + kick[: len(base.v)], base.p + kick[len(base.v):], mu)
            trial = newton_flow(guess, mu, problem, tol, max_iter)
            if not trial.converged:
                continue
            shift = problem.observable(trial.v) - obs0
            if abs(shift) > distinct_tol:
                key = "upper" if shift > 0 else "lower"
                found.setdefault(key, trial)
                if label in found:
                    break
    return found


def continuation_sweep(mu_from: float, mu_to: float, step: float, problem: FlowProblem,
                       distinct_tol: float = 1e-3, tol: float = 1e-9, max_iter: int = 30,
                       probe_window: int = 10, coincide_tol: float = 1e-6) -> SweepResult:
    """Three-pass natural-parameter continuation from ``mu_from`` down to ``mu_to``.

    Pass ``sym`` starts from the zero guess and warm-starts every solve
    from the previous converged state. A sign change of the Jacobian
    determinant along ``sym`` marks a crossed bifurcation; from there on
    (for at most ``probe_window`` parameters) kicked solves look for
    states with a different probe observable. The first parameter where
    they succeed is the first post-critical solve; passes ``upper`` and
    ``lower`` start from those states and continue downward; a warm
    start that falls back onto the symmetric state is replaced by a
    fresh kicked solve. ``mu_star``
    is the smallest parameter at or above which every pass reports the
    same observable.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    mus = _mu_grid(mu_from, mu_to, step)
    direction = np.concatenate([asymmetric_direction(problem), np.zeros(problem.space.n_p)])
    diagram = BifurcationDiagram(observable_spec=(problem.probe, 1))
    states = {}
    prev = None
    ref_sign = 0
    crossed_at = None
    first = None
    seeds = {}
    for k, mu in enumerate(mus):
        state = newton_flow(prev, mu, problem, tol, max_iter, with_sign=True)
        states[("sym", mu)] = state
        if state.converged:
            prev = state
            ref_sign = ref_sign or state.jacobian_sign
            if crossed_at is None and state.jacobian_sign and state.jacobian_sign != ref_sign:
                crossed_at = k
                try:
                    direction = critical_mode(state, problem)
                except (RuntimeError, ValueError) as exc:   # ARPACK failure: keep the generic bump
                    log.warning("critical mode unavailable at mu=%g: %s", mu, exc)
        else:
            log.warning("sym pass lost convergence at mu=%g", mu)
        if first is None and crossed_at is not None and k - crossed_at < probe_window and state.converged:
            found = seek_branches(state, mu, problem, direction, distinct_tol=distinct_tol,
                                  tol=tol, max_iter=max_iter)
            if found:
                first, seeds = float(mu), found
    for label in ("upper", "lower"):
        prev = seeds.get(label)
        for mu in mus:
            if first is None or mu > first + 1e-12:
                states[(label, mu)] = states[("sym", mu)]
                continue
            if mu == first and label in seeds:
                state = seeds[label]
            elif prev is None:
                # this side was not reached by the first kicks: keep looking
                sym = states[("sym", mu)]
                state = seek_branches(sym, mu, problem, direction, distinct_tol=distinct_tol,
                                      tol=tol, max_iter=max_iter).get(label, sym)
                if state is sym:
                    states[(label, mu)] = sym
                    continue
            else:
                state = newton_flow(prev, mu, problem, tol, max_iter)
                sym = states[("sym", mu)]
                collapsed = abs(problem.observable(state.v) - problem.observable(sym.v)) <= distinct_tol
                if sym.converged and (collapsed or not state.converged):
                    # the warm start fell back onto the symmetric branch: kick again
                    state = seek_branches(sym, mu, problem, direction, distinct_tol=distinct_tol,
                                          tol=tol, max_iter=max_iter).get(label, state)
            states[(label, mu)] = state
            if state.converged:
                prev = state
    for label in PASSES:
        for mu in mus:
            s = states[(label, mu)]
            diagram.add(mu, problem.observable(s.v), label, 1.0, s.converged)
    mu_star = _critical_from_diagram(diagram, coincide_tol) if first is not None else None
    return SweepResult(diagram, states, mu_star, first)


def _critical_from_diagram(diagram: BifurcationDiagram, tol: float):
    """Smallest mu at or above which every pass reports one observable."""
    mu_star = None
    for mu in sorted(diagram.mus(), reverse=True):
        vals = [r.observable for r in diagram.at(mu)]
        if vals and max(vals) - min(vals) <= tol * max(1.0, max(abs(v) for v in vals)):
            mu_star = float(mu)
        else:
            break
    return mu_star
