"""Bifurcation diagram records shared by the deterministic and stochastic solvers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DiagramRecord:
    mu: float
    observable: float
    branch_label: str | None = None
    weight: float = 1.0
    converged: bool = True


@dataclass
class BifurcationDiagram:
    """List of ``(mu, observable, branch, weight)`` rows.

    Deterministic diagrams carry ``weight = 1``; probabilistic ones carry
    normalised peak densities.
    """

    records: list = field(default_factory=list)
    observable_spec: tuple = ((15.0, 3.75), 1)
    probabilistic: bool = False

    def add(self, mu, observable, branch_label=None, weight=1.0, converged=True):
        self.records.append(DiagramRecord(float(mu), float(observable), branch_label,
                                          float(weight), bool(converged)))

    def __len__(self):
        return len(self.records)

    def mus(self) -> np.ndarray:
        return np.array(sorted({r.mu for r in self.records}))

    def at(self, mu, tol=1e-12, converged_only=True) -> list:
        return [r for r in self.records if abs(r.mu - mu) <= tol
                and (r.converged or not converged_only)]

    def values_at(self, mu, tol=1e-12) -> np.ndarray:
        return np.array([r.observable for r in self.at(mu, tol)])

    def branch(self, label) -> list:
        return [r for r in self.records if r.branch_label == label]
