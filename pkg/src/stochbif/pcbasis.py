"""Orthogonal polynomial chaos bases, Gauss quadrature and moment tensors.

Two continuous families are supported:

* ``hermite``: probabilists' Hermite polynomials ``He_n / sqrt(n!)``,
  orthonormal under the standard Gaussian measure.
* ``legendre``: ``P_n(xi / sqrt(3))`` for ``xi ~ U(-sqrt(3), sqrt(3))``,
  so the seed has zero mean and unit variance and ``E[psi_n^2] = 1/(2n+1)``.

Multivariate bases are total-degree tensor products with graded
lexicographic ordering of the multi-indices.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.polynomial import hermite_e, legendre

SQRT3 = math.sqrt(3.0)


class Family(str, Enum):
    HERMITE = "hermite"
    LEGENDRE = "legendre"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, Family):
            return value
        key = str(value).strip().lower()
        aliases = {
            "hermite": cls.HERMITE, "gaussian": cls.HERMITE, "normal": cls.HERMITE,
            "hermitegaussian": cls.HERMITE,
            "legendre": cls.LEGENDRE, "uniform": cls.LEGENDRE,
            "legendreuniform": cls.LEGENDRE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown polynomial family {value!r}") from None


def gauss_quadrature(family, n_points: int):
    """Gauss rule integrating against the probability density of the seed.

    Exact for polynomials of degree ``2 * n_points - 1``; weights sum to one.
    """
    family = Family.parse(family)
    n_points = int(n_points)
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    if family is Family.HERMITE:
        nodes, weights = hermite_e.hermegauss(n_points)
        weights = weights / math.sqrt(2.0 * math.pi)
    else:
        nodes, weights = legendre.leggauss(n_points)
        nodes = SQRT3 * nodes
        weights = 0.5 * weights
    return nodes, weights


def univariate_vandermonde(family, max_degree: int, xi) -> np.ndarray:
    """Values of the degree 0..max_degree polynomials, shape ``xi.shape + (M+1,)``."""
    family = Family.parse(family)
    xi = np.asarray(xi, dtype=float)
    if family is Family.HERMITE:
        vals = hermite_e.hermevander(xi, max_degree)
        scale = np.array([1.0 / math.sqrt(math.factorial(n)) for n in range(max_degree + 1)])
        return vals * scale
    return legendre.legvander(xi / SQRT3, max_degree)


def univariate_norms(family, max_degree: int) -> np.ndarray:
    family = Family.parse(family)
    if family is Family.HERMITE:
        return np.ones(max_degree + 1)
    return 1.0 / (2.0 * np.arange(max_degree + 1) + 1.0)


def graded_multi_indices(max_degree: int, n_rv: int) -> list[tuple[int, ...]]:
    """Total-degree multi-indices, by degree then reverse-lexicographic inside a degree.

    For one variable this is simply ``[(0,), (1,), ..., (M,)]``.
    """
    out = []
    for total in range(max_degree + 1):
        level = [a for a in itertools.product(range(total + 1), repeat=n_rv) if sum(a) == total]
        level.sort(reverse=True)
        out.extend(level)
    return out


@dataclass(frozen=True)
class PCBasis:
    """Truncated polynomial chaos basis of total degree ``max_degree``."""

    family: Family
    max_degree: int
    n_rv: int = 1
    multi_indices: tuple = field(init=False, repr=False)
    norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if int(self.max_degree) < 0:
            raise ValueError("max_degree must be >= 0")
        if int(self.n_rv) < 1:
            raise ValueError("n_rv must be >= 1")
        object.__setattr__(self, "max_degree", int(self.max_degree))
        object.__setattr__(self, "n_rv", int(self.n_rv))
        idx = tuple(graded_multi_indices(self.max_degree, self.n_rv))
        object.__setattr__(self, "multi_indices", idx)
        uni = univariate_norms(self.family, self.max_degree)
        norms = np.array([np.prod([uni[d] for d in alpha]) for alpha in idx])
        norms.setflags(write=False)
        object.__setattr__(self, "norms", norms)

    @property
    def n_pc(self) -> int:
        """Number of basis functions minus one."""
        return len(self.multi_indices) - 1

    @property
    def size(self) -> int:
        return len(self.multi_indices)

    def vandermonde(self, xi) -> np.ndarray:
        """All basis functions at the points ``xi``.

        ``xi`` has shape ``(n_points,)`` for one variable or
        ``(n_points, n_rv)``; the result has shape ``(n_points, n_pc + 1)``.
        """
        xi = np.asarray(xi, dtype=float)
        if self.n_rv == 1:
            xi = xi.reshape(-1, 1) if xi.ndim <= 1 else xi
        if xi.ndim == 1:
            xi = xi.reshape(1, -1)
        if xi.shape[-1] != self.n_rv:
            raise ValueError(f"expected {self.n_rv} seed variables, got {xi.shape[-1]}")
        uni = [univariate_vandermonde(self.family, self.max_degree, xi[:, d]) for d in range(self.n_rv)]
        out = np.ones((xi.shape[0], self.size))
        for k, alpha in enumerate(self.multi_indices):
            for d, a in enumerate(alpha):
                if a:
                    out[:, k] *= uni[d][:, a]
        return out

    def eval_poly(self, index: int, xi) -> float:
        """Value of ``psi_index`` at a single seed vector ``xi``."""
        if not 0 <= int(index) <= self.n_pc:
            raise IndexError(f"basis index {index} outside 0..{self.n_pc}")
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if xi.shape != (self.n_rv,):
            raise ValueError(f"xi must have {self.n_rv} entries, got shape {xi.shape}")
        return float(self.vandermonde(xi.reshape(1, -1))[0, int(index)])

    def evaluate(self, coeffs, xi) -> np.ndarray:
        """Evaluate the expansion ``sum_i coeffs[i] psi_i(xi)`` (vectorised in ``xi``)."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != self.size:
            raise ValueError(f"expected {self.size} coefficients, got {coeffs.shape[0]}")
        return self.vandermonde(xi) @ coeffs

    def quadrature(self, n_points: int):
        """Tensor Gauss rule in ``n_rv`` dimensions; returns ``(nodes (n, n_rv), weights)``."""
        x, w = gauss_quadrature(self.family, n_points)
        if self.n_rv == 1:
            return x.reshape(-1, 1), w
        grids = np.meshgrid(*([x] * self.n_rv), indexing="ij")
        wgrids = np.meshgrid(*([w] * self.n_rv), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
        return nodes, weights

    def to_monomial(self, coeffs) -> np.ndarray:
        """Power-series coefficients (ascending) of a univariate expansion."""
        if self.n_rv != 1:
            raise ValueError("monomial conversion only for one seed variable")
        coeffs = np.asarray(coeffs, dtype=float)
        out = np.zeros(self.max_degree + 1)
        for n, c in enumerate(coeffs):
            if c == 0.0:
                continue
            basis = np.zeros(n + 1)
            basis[n] = 1.0
            if self.family is Family.HERMITE:
                mono = hermite_e.herme2poly(basis) / math.sqrt(math.factorial(n))
            else:
                mono = legendre.leg2poly(basis) / SQRT3 ** np.arange(n + 1)
            out[: len(mono)] += c * mono
        return out


def tensor_node_count(max_degree: int) -> int:
    """Gauss node count that integrates every triple-product moment exactly."""
    return math.ceil((3 * max_degree + 2) / 2) + 1


@dataclass(frozen=True)
class MomentTensors:
    """Expectations of basis products used by every Galerkin projection.

    ``c2[j, m] = E[psi_j psi_m]``,
    ``e3[i, j, m] = E[xi_i sqrt(lambda_i) psi_j psi_m]`` (slot ``i = 0`` is the
    deterministic convention ``xi_0 = 1, lambda_0 = 1``),
    ``f3[m, l, i] = E[psi_i psi_l psi_m]``.
    """

    c2: np.ndarray
    e3: np.ndarray
    f3: np.ndarray

    def to_json(self) -> str:
        return json.dumps({"c2": "@c2", "e3": "@e3", "f3": "@f3"}).replace(
            '"@c2"', _json_array(self.c2)).replace(
            '"@e3"', _json_array(self.e3)).replace(
            '"@f3"', _json_array(self.f3))

    @classmethod
    def from_json(cls, text: str) -> "MomentTensors":
        data = json.loads(text)
        return cls(*(np.asarray(data[k], dtype=float) for k in ("c2", "e3", "f3")))


def _json_array(a: np.ndarray) -> str:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return format(float(a), ".17g")
    return "[" + ", ".join(_json_array(x) for x in a) + "]"


def build_moment_tensors(basis: PCBasis, kl=None) -> MomentTensors:
    """Assemble ``c2``, ``e3`` and ``f3`` by Gauss quadrature.

    ``kl`` supplies ``sqrt_lambdas`` (length ``n_kl + 1`` including slot 0);
    without it only the deterministic slot is built.
    """
    if kl is None:
        sqrt_lam = np.array([1.0])
    else:
        sqrt_lam = np.asarray(kl.sqrt_lambdas, dtype=float)
        if len(sqrt_lam) - 1 > basis.n_rv:
            raise ValueError(
                f"expansion has {len(sqrt_lam) - 1} random modes but the basis has {basis.n_rv} seeds")
        if kl.n_kl and kl.seed_family is not basis.family:
            raise ValueError("seed family of the expansion does not match the basis family")
    nodes, weights = basis.quadrature(tensor_node_count(basis.max_degree))
    psi = basis.vandermonde(nodes)
    wpsi = psi * weights[:, None]
    c2 = wpsi.T @ psi
    seeds = np.column_stack([np.ones(len(weights)), nodes])[:, : len(sqrt_lam)]
    e3 = np.einsum("q,qi,qj,qm->ijm", weights, seeds * sqrt_lam, psi, psi)
    f3 = np.einsum("qm,ql,qi->mli", wpsi, psi, psi)
    # exact zeros where orthogonality makes them vanish analytically
    for arr in (c2, e3, f3):
        arr[np.abs(arr) < 1e-14 * max(1.0, np.abs(arr).max())] = 0.0
    return MomentTensors(c2=c2, e3=e3, f3=f3)
