"""A probabilistic bifurcation diagram of the pitchfork from density peaks.

For each mean viscosity a narrow uniform law is solved from one random
start and the peaks of the sampled density are recorded. Below zero only
the trivial root exists. Above zero the start decides which roots the
expansion follows, and expansions that jump between roots inside the
narrow law add scattered peaks around +-sqrt(mean).

Run with ``python3 demos/pitchfork_diagram.py``.
"""
import numpy as np

from stochbif import pitchfork as pf
from stochbif.pcbasis import PCBasis

means = np.linspace(-0.5, 1.5, 21)
diagram, entries = pf.sweep_diagram(means, half_width=0.01, basis=PCBasis("legendre", 5),
                                    inits_per_mu=3, rng_seed=0)
print(" mean   sqrt(mean)   peaks found over three starts")
for mu in means:
    peaks = " ".join(f"{v:+.3f}" for v in sorted({round(float(v), 3) for v in diagram.values_at(mu)}))
    root = f"{np.sqrt(mu):.3f}" if mu > 0 else "-"
    print(f"{mu:+.2f}   {root:>8}     {peaks}")
print(f"\n{sum(e.solution.converged for e in entries)} of {len(entries)} solves converged")
