"""Quadrilateral meshes of the 2D sudden-expansion channel.

The domain is ``([0, L_in] x [a, b]) U ([L_in, L] x [0, H])``; by default
``L_in = 10, L = 50, a = 2.5, b = 5, H = 7.5``. Meshes are block
structured: the inlet strip shares its horizontal grid lines with the
middle band of the wide channel. ``unstructured`` meshes move interior
nodes by a seeded jitter, which breaks the mirror symmetry about
``x2 = H / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

INLET, WALL, OUTLET = "inlet", "wall", "outlet"
BOUNDARY_TAGS = (INLET, WALL, OUTLET)


class SymmetryMode(str, Enum):
    SYMMETRIC = "symmetric"
    UNSTRUCTURED = "unstructured"


@dataclass(frozen=True)
class ChannelGeometry:
    inlet_length: float = 10.0
    total_length: float = 50.0
    inlet_low: float = 2.5
    inlet_high: float = 5.0
    height: float = 7.5

    def __post_init__(self):
        if not (self.inlet_length > 0 and self.total_length > self.inlet_length):
            raise ValueError("channel lengths must be positive and increasing")
        if not (0 < self.inlet_low < self.inlet_high < self.height):
            raise ValueError("inlet must lie strictly inside the channel height with positive width")

    @property
    def axis(self) -> float:
        return 0.5 * self.height


@dataclass(frozen=True)
class MeshPreset:
    nx_inlet: int
    n_band: int          # cells across the inlet strip and across each side band
    nx_main: int
    grading: float       # last/first cell width in the wide channel
    symmetry: SymmetryMode
    jitter: float = 0.1
    seed: int = 1234


# node counts: 1275, 1541, 935
PRESETS = {
    "coarse-unstructured": MeshPreset(22, 6, 58, 4.0, SymmetryMode.UNSTRUCTURED),
    "fine-unstructured": MeshPreset(24, 8, 52, 4.0, SymmetryMode.UNSTRUCTURED),
    "symmetric": MeshPreset(18, 4, 64, 4.0, SymmetryMode.SYMMETRIC),
}


@dataclass
class ChannelMesh:
    """Corner nodes, counter-clockwise quads and tagged boundary edges."""

    nodes: np.ndarray                 # (N, 2)
    quads: np.ndarray                 # (M, 4) int
    boundary_edges: np.ndarray        # (E, 2) int
    boundary_tags: list               # len E
    symmetry_mode: SymmetryMode = SymmetryMode.UNSTRUCTURED
    geometry: ChannelGeometry = field(default_factory=ChannelGeometry)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_quads(self) -> int:
        return len(self.quads)

    def edges_with_tag(self, tag) -> np.ndarray:
        mask = np.array([t == tag for t in self.boundary_tags], dtype=bool)
        return self.boundary_edges[mask]

    def min_jacobian(self) -> float:
        """Smallest bilinear-map Jacobian determinant over the 3x3 Gauss points."""
        from .fem import reference_gauss, q1_shape
        pts, _ = reference_gauss(3)
        _, dref = q1_shape(pts)
        xy = self.nodes[self.quads]                        # (M, 4, 2)
        jac = np.einsum("qkr,mkd->mqdr", dref, xy)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        return float(det.min())

    # plain text exchange format --------------------------------------
    def to_text(self) -> str:
        lines = [f"nodes {self.n_nodes} quads {self.n_quads}"]
        lines += [f"{x!r} {y!r}" for x, y in self.nodes.tolist()]
        lines += [" ".join(str(int(v)) for v in q) for q in self.quads]
        lines += [f"{int(a)} {int(b)} {t}" for (a, b), t in zip(self.boundary_edges, self.boundary_tags)]
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str, symmetry_mode=SymmetryMode.UNSTRUCTURED,
                  geometry: ChannelGeometry | None = None) -> "ChannelMesh":
        rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        head = rows[0]
        if len(head) != 4 or head[0] != "nodes" or head[2] != "quads":
            raise ValueError("mesh header must read 'nodes N quads M'")
        n, m = int(head[1]), int(head[3])
        nodes = np.array([[float(v) for v in r] for r in rows[1:1 + n]], dtype=float).reshape(n, 2)
        quads = np.array([[int(v) for v in r] for r in rows[1 + n:1 + n + m]], dtype=np.int64).reshape(m, 4)
        edge_rows = rows[1 + n + m:]
        edges = np.array([[int(r[0]), int(r[1])] for r in edge_rows], dtype=np.int64).reshape(-1, 2)
        tags = [r[2] for r in edge_rows]
        bad = set(tags) - set(BOUNDARY_TAGS)
        if bad:
            raise ValueError(f"unknown boundary tags {sorted(bad)}")
        return cls(nodes, quads, edges, tags, SymmetryMode(symmetry_mode), geometry or ChannelGeometry())

    @classmethod
    def load(cls, path, **kw) -> "ChannelMesh":
        with open(path) as fh:
            return cls.from_text(fh.read(), **kw)


def _graded(x0: float, x1: float, n: int, ratio: float) -> np.ndarray:
    """``n`` cells on ``[x0, x1]`` with geometric growth, last/first width = ratio."""
    if n == 1 or ratio == 1.0:
        return np.linspace(x0, x1, n + 1)
    q = ratio ** (1.0 / (n - 1))
    widths = q ** np.arange(n)
    pts = np.concatenate([[0.0], np.cumsum(widths)])
    pts = x0 + (x1 - x0) * pts / pts[-1]
    pts[-1] = x1
    return pts


def build_channel_mesh(preset: str | MeshPreset = "coarse-unstructured", refinement: int = 0,
                       symmetry_mode=None, geometry: ChannelGeometry | None = None,
                       jitter: float | None = None, seed: int | None = None) -> ChannelMesh:
    """Deterministic channel mesh from a named preset or explicit parameters.

    ``refinement`` splits every cell ``2**refinement`` times per direction.
    """
    if refinement < 0:
        raise ValueError("refinement must be >= 0")
    geo = geometry or ChannelGeometry()
    p = PRESETS[preset] if isinstance(preset, str) else preset
    mode = SymmetryMode(symmetry_mode) if symmetry_mode is not None else p.symmetry
    f = 2 ** refinement
    nx_in, nb, nx_m = p.nx_inlet * f, p.n_band * f, p.nx_main * f

    xs_in = np.linspace(0.0, geo.inlet_length, nx_in + 1)
    xs_m = _graded(geo.inlet_length, geo.total_length, nx_m, p.grading)
    # bands are mirror images of each other so the grid is symmetric about the axis
    ys_bot = np.linspace(0.0, geo.inlet_low, nb + 1)
    ys_mid = np.linspace(geo.inlet_low, geo.inlet_high, nb + 1)
    ys_top = np.linspace(geo.inlet_high, geo.height, nb + 1)
    if abs(geo.inlet_low - (geo.height - geo.inlet_high)) < 1e-12:
        ys_top = geo.height - ys_bot[::-1]
        ys_mid = np.concatenate([ys_mid[: nb // 2 + 1], geo.height - ys_mid[: (nb + 1) // 2][::-1]])
    ys_main = np.concatenate([ys_bot, ys_mid[1:], ys_top[1:]])

    nodes = []
    index = {}

    def node(i_key, x, y):
        if i_key not in index:
            index[i_key] = len(nodes)
            nodes.append((x, y))
        return index[i_key]

    # inlet block: columns 0..nx_in-1 are owned here, column nx_in is the shared interface
    quads = []
    for i in range(nx_in):
        for j in range(nb):
            ids = []
            for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                ii, jj = i + di, j + dj
                if ii == nx_in:
                    ids.append(node(("m", 0, nb + jj), xs_m[0], ys_main[nb + jj]))
                else:
                    ids.append(node(("i", ii, jj), xs_in[ii], ys_mid[jj]))
            quads.append(ids)
    ny_m = len(ys_main) - 1
    for i in range(nx_m):
        for j in range(ny_m):
            ids = [node(("m", i + di, j + dj), xs_m[i + di], ys_main[j + dj])
                   for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1))]
            quads.append(ids)
    # renumber by (x, y) so numbering is independent of block traversal
    nodes = np.array(nodes, dtype=float)
    order = np.lexsort((nodes[:, 1], nodes[:, 0]))
    renum = np.empty(len(order), dtype=np.int64)
    renum[order] = np.arange(len(order))
    nodes = nodes[order]
    quads = renum[np.array(quads, dtype=np.int64)]

    edges, tags = _boundary_edges(nodes, quads, geo)
    if mode is SymmetryMode.UNSTRUCTURED:
        amp = p.jitter if jitter is None else jitter
        nodes = _jitter(nodes, quads, edges, amp, p.seed if seed is None else seed)
    return ChannelMesh(nodes, quads, edges, tags, mode, geo)


def _boundary_edges(nodes, quads, geo):
    local = ((0, 1), (1, 2), (2, 3), (3, 0))
    count = {}
    for q in quads:
        for a, b in local:
            key = (min(q[a], q[b]), max(q[a], q[b]))
            count[key] = count.get(key, 0) + 1
    edges, tags = [], []
    for q in quads:
        for a, b in local:
            key = (min(q[a], q[b]), max(q[a], q[b]))
            if count[key] == 1:
                pa, pb = nodes[q[a]], nodes[q[b]]
                if abs(pa[0]) < 1e-12 and abs(pb[0]) < 1e-12:
                    tag = INLET
                elif abs(pa[0] - geo.total_length) < 1e-12 and abs(pb[0] - geo.total_length) < 1e-12:
                    tag = OUTLET
                else:
                    tag = WALL
                edges.append((q[a], q[b]))
                tags.append(tag)
    return np.array(edges, dtype=np.int64), tags


def _jitter(nodes, quads, edges, amplitude, seed):
    if amplitude < 0 or amplitude > 0.1:
        raise ValueError("jitter amplitude must lie in [0, 0.1]")
    on_boundary = np.zeros(len(nodes), dtype=bool)
    on_boundary[edges.ravel()] = True
    # shortest incident edge per node
    hmin = np.full(len(nodes), np.inf)
    for a, b in ((0, 1), (1, 2), (2, 3), (3, 0)):
        length = np.linalg.norm(nodes[quads[:, a]] - nodes[quads[:, b]], axis=1)
        np.minimum.at(hmin, quads[:, a], length)
        np.minimum.at(hmin, quads[:, b], length)
    rng = np.random.default_rng(seed)
    shift = rng.uniform(-1.0, 1.0, nodes.shape) * (amplitude / np.sqrt(2.0)) * hmin[:, None]
    shift[on_boundary] = 0.0
    return nodes + shift


def mirror_permutation(nodes, axis: float, tol: float = 1e-9) -> np.ndarray:
    """Index map ``k -> k'`` with ``nodes[k'] = reflect(nodes[k])`` about ``x2 = axis``."""
    from scipy.spatial import cKDTree
    reflected = nodes.copy()
    reflected[:, 1] = 2 * axis - reflected[:, 1]
    dist, perm = cKDTree(nodes).query(reflected)
    if dist.max() > tol:
        raise ValueError("node set is not mirror symmetric")
    return perm.astype(np.int64)
