"""Taylor-Hood Q2-Q1 finite elements on quadrilateral channel meshes.

Velocity unknowns are ordered component-blocked: ``c * n_q2 + node`` for
``c in (0, 1)``. Geometry uses the bilinear corner map; Q2 nodes sit at the
mapped edge midpoints and cell centres.

Operators follow the weak form of the steady incompressible Navier-Stokes
equations:

* ``A[j, n] = int grad phi_j : grad phi_n``          (velocity x velocity)
* ``C[q, n] = int chi_q div phi_n``                   (pressure x velocity)
* ``D = C.T``
* ``B_e[n, j, h, d] = int phi_n phi_j d_d phi_h``     per element, scalar basis

so that the convection form is
``N(u, w)[n, c] = sum_{j,h,d} B[n, j, h, d] u_d[j] w_c[h]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import INLET, WALL, ChannelMesh

# Q2 local node reference coordinates: corners, edge midpoints (01, 12, 23, 30), centre
Q2_REF = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1],
                   [0, -1], [1, 0], [0, 1], [-1, 0], [0, 0]], dtype=float)
Q1_REF = Q2_REF[:4]


def reference_gauss(n: int = 3):
    x, w = np.polynomial.legendre.leggauss(n)
    pts = np.array([[a, b] for a in x for b in x])
    wts = np.array([wa * wb for wa in w for wb in w])
    return pts, wts


def _lagrange_1d(t):
    """Quadratic Lagrange basis at nodes -1, 0, 1 and derivatives."""
    t = np.asarray(t, dtype=float)
    val = np.stack([0.5 * t * (t - 1), 1 - t * t, 0.5 * t * (t + 1)], axis=-1)
    der = np.stack([t - 0.5, -2 * t, t + 0.5], axis=-1)
    return val, der


def q2_shape(pts):
    """Values ``(nq, 9)`` and reference gradients ``(nq, 9, 2)`` of the Q2 basis."""
    pts = np.atleast_2d(pts)
    vx, dx = _lagrange_1d(pts[:, 0])
    vy, dy = _lagrange_1d(pts[:, 1])
    ix = (Q2_REF[:, 0] + 1).astype(int)
    iy = (Q2_REF[:, 1] + 1).astype(int)
    val = vx[:, ix] * vy[:, iy]
    grad = np.stack([dx[:, ix] * vy[:, iy], vx[:, ix] * dy[:, iy]], axis=-1)
    return val, grad


def q1_shape(pts):
    """Values ``(nq, 4)`` and reference gradients ``(nq, 4, 2)`` of the bilinear basis."""
    pts = np.atleast_2d(pts)
    sx, sy = Q1_REF[:, 0], Q1_REF[:, 1]
    x, y = pts[:, :1], pts[:, 1:2]
    val = 0.25 * (1 + sx * x) * (1 + sy * y)
    grad = np.stack([0.25 * sx * (1 + sy * y), 0.25 * sy * (1 + sx * x)], axis=-1)
    return val, grad


def inlet_profile(x2, low: float = 2.5, high: float = 5.0, amplitude: float = 20.0):
    """Parabolic inflow ``(amplitude (high - x2)(x2 - low), 0)``."""
    x2 = np.asarray(x2, dtype=float)
    tol = 1e-12 * max(1.0, abs(high))
    if np.any(x2 < low - tol) or np.any(x2 > high + tol):
        raise ValueError(f"inlet coordinate outside [{low}, {high}]")
    vx = amplitude * (high - x2) * (x2 - low)
    out = np.stack([vx, np.zeros_like(vx)], axis=-1)
    return out if out.ndim > 1 else out.reshape(2)


class CsrAssembler:
    """Sums element matrices into a fixed CSR pattern with ``np.bincount``."""

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        keys = rows * shape[1] + cols
        uniq, self.inverse = np.unique(keys, return_inverse=True)
        self.shape = shape
        self.indices = (uniq % shape[1]).astype(np.int32)
        r = uniq // shape[1]
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=shape[0]))]).astype(np.int32)
        self.nnz = len(uniq)

    def assemble(self, values) -> sp.csr_matrix:
        data = np.bincount(self.inverse, weights=np.asarray(values, dtype=float).ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


@dataclass
class TaylorHoodSpace:
    """Q2 velocity and Q1 pressure dof maps with Dirichlet data."""

    mesh: ChannelMesh
    q2_nodes: np.ndarray            # (n_q2, 2) coordinates
    q2_cells: np.ndarray            # (M, 9) scalar Q2 node ids per quad
    constrained_dofs: np.ndarray    # velocity dof ids
    constrained_values: np.ndarray  # prescribed values at unit inflow scale
    edge_midpoints: dict = field(repr=False, default_factory=dict)

    @property
    def n_q2(self) -> int:
        return len(self.q2_nodes)

    @property
    def n_v(self) -> int:
        return 2 * self.n_q2

    @property
    def n_p(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_dofs(self) -> int:
        return self.n_v + self.n_p

    @property
    def p_cells(self) -> np.ndarray:
        return self.mesh.quads

    def v_cells(self) -> np.ndarray:
        """Element velocity dofs ``(M, 18)``: x-components then y-components."""
        return np.concatenate([self.q2_cells, self.q2_cells + self.n_q2], axis=1)

    def free_velocity_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_v, dtype=bool)
        mask[self.constrained_dofs] = False
        return np.flatnonzero(mask)

    def interpolate_velocity(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(x, y) -> (vx, vy)``."""
        vals = np.asarray(func(self.q2_nodes[:, 0], self.q2_nodes[:, 1]), dtype=float)
        return np.concatenate([np.broadcast_to(vals[0], (self.n_q2,)), np.broadcast_to(vals[1], (self.n_q2,))])

    def interpolate_pressure(self, func) -> np.ndarray:
        return np.broadcast_to(np.asarray(func(self.mesh.nodes[:, 0], self.mesh.nodes[:, 1]), dtype=float),
                               (self.n_p,)).copy()

    def dirichlet_vector(self, inflow_scale: float = 1.0) -> tuple:
        return self.constrained_dofs, inflow_scale * self.constrained_values

    def locate(self, point):
        """Cell index and reference coordinates of a physical point (Newton inversion)."""
        point = np.asarray(point, dtype=float)
        xy = self.mesh.nodes[self.mesh.quads]
        lo, hi = xy.min(axis=1) - 1e-10, xy.max(axis=1) + 1e-10
        cand = np.flatnonzero(np.all((point >= lo) & (point <= hi), axis=1))
        for cell in cand:
            ref = np.zeros(2)
            for _ in range(30):
                val, grad = q1_shape(ref[None, :])
                x = val[0] @ xy[cell]
                jac = grad[0].T @ xy[cell]
                step = np.linalg.solve(jac, point - x)
                ref += step
                if np.abs(step).max() < 1e-14:
                    break
            if np.all(np.abs(ref) <= 1 + 1e-9):
                return int(cell), np.clip(ref, -1.0, 1.0)
        raise ValueError(f"point {tuple(point)} lies outside the mesh")

    def point_weights(self, point):
        """Q2 node ids and interpolation weights reproducing a velocity component at ``point``."""
        cell, ref = self.locate(point)
        val, _ = q2_shape(ref[None, :])
        return self.q2_cells[cell], val[0]

    def pressure_point_weights(self, point):
        cell, ref = self.locate(point)
        val, _ = q1_shape(ref[None, :])
        return self.mesh.quads[cell], val[0]

    def mirror_dof_map(self, tol: float = 1e-9):
        """Velocity and pressure index maps of the reflection about the channel axis.

        Returns ``(vperm, vsign, pperm)``: the mirrored field is
        ``v'[k] = vsign[k] * v[vperm[k]]`` and ``p'[k] = p[pperm[k]]``.
        """
        from .mesh import mirror_permutation
        axis = self.mesh.geometry.axis
        qperm = mirror_permutation(self.q2_nodes, axis, tol)
        pperm = mirror_permutation(self.mesh.nodes, axis, tol)
        vperm = np.concatenate([qperm, qperm + self.n_q2])
        vsign = np.concatenate([np.ones(self.n_q2), -np.ones(self.n_q2)])
        return vperm, vsign, pperm


def build_space(mesh: ChannelMesh, inlet_amplitude: float = 20.0) -> TaylorHoodSpace:
    n = mesh.n_nodes
    quads = mesh.quads
    local_edges = ((0, 1), (1, 2), (2, 3), (3, 0))
    edge_id = {}
    edge_pts = []
    cells = np.empty((mesh.n_quads, 9), dtype=np.int64)
    cells[:, :4] = quads
    for e, q in enumerate(quads):
        for k, (a, b) in enumerate(local_edges):
            key = (min(q[a], q[b]), max(q[a], q[b]))
            if key not in edge_id:
                edge_id[key] = n + len(edge_pts)
                edge_pts.append(0.5 * (mesh.nodes[key[0]] + mesh.nodes[key[1]]))
            cells[e, 4 + k] = edge_id[key]
    n_edges = len(edge_pts)
    centres = mesh.nodes[quads].mean(axis=1)
    cells[:, 8] = n + n_edges + np.arange(mesh.n_quads)
    q2_nodes = np.vstack([mesh.nodes, np.array(edge_pts).reshape(-1, 2), centres])

    geo = mesh.geometry
    prescribed = {}

    def prescribe(node, value):
        for c in range(2):
            dof = node + c * len(q2_nodes)
            v = value[c]
            if dof in prescribed and abs(prescribed[dof] - v) > 1e-12 * max(1.0, abs(v)):
                raise ValueError(f"conflicting Dirichlet values on velocity dof {dof}")
            prescribed.setdefault(dof, v)

    # walls first so that inlet corner values (zero from the profile) agree
    for tag in (WALL, INLET):
        for a, b in mesh.edges_with_tag(tag):
            mid = edge_id[(min(a, b), max(a, b))]
            for node in (a, b, mid):
                if tag == WALL:
                    prescribe(node, (0.0, 0.0))
                else:
                    y = q2_nodes[node, 1]
                    prescribe(node, inlet_profile(y, geo.inlet_low, geo.inlet_high, inlet_amplitude))
    dofs = np.array(sorted(prescribed), dtype=np.int64)
    vals = np.array([prescribed[d] for d in dofs])
    return TaylorHoodSpace(mesh, q2_nodes, cells, dofs, vals, edge_id)


@dataclass
class FemTensors:
    """Assembled deterministic operators of one Taylor-Hood space."""

    space: TaylorHoodSpace
    A: sp.csr_matrix                # (n_v, n_v) vector Laplacian
    C: sp.csr_matrix                # (n_p, n_v) pressure-divergence coupling
    B: np.ndarray                   # (M, 9, 9, 9, 2) element trilinear form
    F_rhs: np.ndarray               # (n_v,) zero load
    mass_p: sp.csr_matrix = None
    _vv: CsrAssembler = field(default=None, repr=False)

    @property
    def D(self) -> sp.csr_matrix:
        return self.C.T.tocsr()

    # convection -------------------------------------------------------
    def _element_velocity(self, v):
        """Element nodal values ``(M, 9, 2)`` of a velocity vector."""
        n = self.space.n_q2
        cells = self.space.q2_cells
        return np.stack([v[:n][cells], v[n:][cells]], axis=-1)

    def convection(self, u, w=None) -> np.ndarray:
        """Global vector ``N(u, w)``; ``w`` defaults to ``u``."""
        ue = self._element_velocity(u)
        we = ue if w is None else self._element_velocity(w)
        adv = np.einsum("enjhd,ejd->enh", self.B, ue)
        loc = np.einsum("enh,ehc->enc", adv, we)
        return self._scatter_vector(loc)

    def convection_batch(self, ue_modes, coupling) -> np.ndarray:
        """``out[:, m] = sum_{j,h} coupling[j, h, m] N(u_j, u_h)``.

        ``ue_modes`` holds element values ``(M, 9, 2, P)``.
        """
        adv = np.einsum("enjhd,ejdJ->enhJ", self.B, ue_modes)
        mixed = np.einsum("ehcH,JHm->ehcJm", ue_modes, coupling)
        loc = np.einsum("enhJ,ehcJm->encm", adv, mixed)
        n = self.space.n_q2
        out = np.zeros((self.space.n_v, loc.shape[-1]))
        cells = self.space.q2_cells
        for c in range(2):
            for m in range(loc.shape[-1]):
                out[c * n:(c + 1) * n, m] = np.bincount(cells.ravel(), weights=loc[:, :, c, m].ravel(),
                                                        minlength=n)
        return out

    def _scatter_vector(self, loc):
        n = self.space.n_q2
        cells = self.space.q2_cells.ravel()
        return np.concatenate([np.bincount(cells, weights=loc[:, :, c].ravel(), minlength=n)
                               for c in range(2)])

    def convection_jacobian(self, w) -> sp.csr_matrix:
        """Derivative of ``v -> N(v, v)`` at ``v = w``: ``N(., w) + N(w, .)``."""
        return self.convection_jacobian_elements(self._element_velocity(w))

    def convection_jacobian_elements(self, we) -> sp.csr_matrix:
        # N(w, dv): [n c, h c] = sum_{j,d} B[n,j,h,d] w_d[j]
        adv = np.einsum("enjhd,ejd->enh", self.B, we)
        # N(dv, w): [n c, j d] = sum_h B[n,j,h,d] w_c[h]
        grad = np.einsum("enjhd,ehc->encjd", self.B, we)
        m = we.shape[0]
        loc = np.zeros((m, 2, 9, 2, 9))
        loc[:, 0, :, 0, :] += adv
        loc[:, 1, :, 1, :] += adv
        loc += grad.transpose(0, 2, 1, 4, 3)
        # element dofs are component-blocked: (c, node)
        return self._vv.assemble(loc.reshape(m, 18, 18))

    def vv_matrix(self, element_values) -> sp.csr_matrix:
        return self._vv.assemble(element_values)


def assemble_fem_tensors(space: TaylorHoodSpace, n_gauss: int = 3) -> FemTensors:
    mesh = space.mesh
    pts, wts = reference_gauss(n_gauss)
    phi, dphi_ref = q2_shape(pts)            # (nq, 9), (nq, 9, 2)
    chi, _ = q1_shape(pts)                   # (nq, 4)
    _, dgeo = q1_shape(pts)
    xy = mesh.nodes[mesh.quads]              # (M, 4, 2)
    jac = np.einsum("qkr,mkd->mqdr", dgeo, xy)   # dx_d / dref_r
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(det <= 0):
        raise ValueError("singular or inverted element mapping")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det
    # physical gradients: d phi / d x_d = sum_r dphi/dref_r * dref_r/dx_d
    dphi = np.einsum("qkr,mqrd->mqkd", dphi_ref, inv)     # (M, nq, 9, 2)
    wdet = det * wts[None, :]                               # (M, nq)

    stiff = np.einsum("mq,mqjd,mqnd->mjn", wdet, dphi, dphi)
    nm = mesh.n_quads
    a_loc = np.zeros((nm, 2, 9, 2, 9))
    a_loc[:, 0, :, 0, :] = stiff
    a_loc[:, 1, :, 1, :] = stiff
    vdofs = space.v_cells()
    rows = np.repeat(vdofs[:, :, None], 18, axis=2)
    cols = np.repeat(vdofs[:, None, :], 18, axis=1)
    vv = CsrAssembler(rows, cols, (space.n_v, space.n_v))
    A = vv.assemble(a_loc.reshape(nm, 18, 18))

    # C[q, (c, a)] = int chi_q d_c phi_a
    c_loc = np.einsum("mq,qp,mqad->mpda", wdet, chi, dphi).reshape(nm, 4, 18)
    prow = np.repeat(mesh.quads[:, :, None], 18, axis=2)
    pcol = np.repeat(vdofs[:, None, :], 4, axis=1)
    C = CsrAssembler(prow, pcol, (space.n_p, space.n_v)).assemble(c_loc)

    B = np.einsum("mq,qn,qj,mqhd->mnjhd", wdet, phi, phi, dphi)
    mp_loc = np.einsum("mq,qa,qb->mab", wdet, chi, chi)
    mrow = np.repeat(mesh.quads[:, :, None], 4, axis=2)
    mcol = np.repeat(mesh.quads[:, None, :], 4, axis=1)
    Mp = CsrAssembler(mrow, mcol, (space.n_p, space.n_p)).assemble(mp_loc)
    return FemTensors(space, A, C, B, np.zeros(space.n_v), Mp, vv)


@dataclass
class ConstrainedSystem:
    """Linear system with Dirichlet rows replaced by identity and columns eliminated."""

    matrix: sp.csr_matrix
    rhs: np.ndarray


def apply_dirichlet(matrix, rhs, dofs, values) -> ConstrainedSystem:
    """Strong imposition on a square system.

    Columns of constrained dofs are moved to the right-hand side so a
    symmetric matrix stays symmetric; their rows become identity rows.
    """
    matrix = sp.csr_matrix(matrix, dtype=float)
    n = matrix.shape[0]
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    uniq, counts = np.unique(dofs, return_counts=True)
    if np.any(counts > 1):
        for d in uniq[counts > 1]:
            if np.ptp(values[dofs == d]) > 0:
                raise ValueError(f"conflicting prescriptions on dof {d}")
    g = np.zeros(n)
    g[dofs] = values
    mask = np.zeros(n)
    mask[dofs] = 1.0
    rhs = np.asarray(rhs, dtype=float) - matrix @ g
    keep = sp.diags(1.0 - mask)
    out = (keep @ matrix @ keep + sp.diags(mask)).tocsr()
    rhs = rhs * (1.0 - mask) + g
    return ConstrainedSystem(out, rhs)


def stokes_system(tensors: FemTensors, mu: float):
    """Saddle-point matrix ``[[mu A, -C^T], [-C, 0]]`` (unconstrained)."""
    return sp.bmat([[mu * tensors.A, -tensors.C.T], [-tensors.C, None]], format="csr")
