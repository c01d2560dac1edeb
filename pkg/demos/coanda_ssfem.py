"""Stochastic Galerkin solve of the channel flow with an uncertain viscosity.

The viscosity follows N(0.9, 0.001), just below the pitchfork. The coupled
system for three chaos modes is solved by Newton from the deterministic
mean solution plus small noise. The vertical velocity at the probe becomes
a cubic in the Gaussian seed; its variance field shows where the
uncertainty concentrates.

Takes one to two minutes on the coarse preset: ``python3 demos/coanda_ssfem.py``.
"""
import math

import numpy as np

from stochbif import uq_stats as uq
from stochbif.klexp import scalar_kl
from stochbif.nssolve import FlowProblem
from stochbif.pcbasis import PCBasis
from stochbif.ssfem import SsfemSystem, component_variance, point_polynomial, ssfem_newton

problem = FlowProblem.from_preset("coarse-unstructured")
basis = PCBasis("hermite", 3)
system = SsfemSystem(problem, basis, scalar_kl(0.9, math.sqrt(0.001), "hermite"))
print(f"coupled system with {system.n_unknowns} unknowns")

result = ssfem_newton(system)
diag = result.diagnostics
print(f"converged: {result.converged} after {diag['iterations']} steps "
      f"({diag['wall_time']:.0f} s), residual history "
      + " ".join(f"{r:.1e}" for r in diag["residual_history"]))

coeffs = point_polynomial(result.U, problem.space, problem.probe)
print("\nprobe polynomial coefficients:", np.array2string(coeffs, precision=5))
for xi, value, kind in uq.local_extrema(coeffs, basis):
    print(f"  local {kind} {value:+.5f} at seed {xi:+.3f}")

var = component_variance(result.U, basis, problem.space)
k = int(np.argmax(var))
x, y = problem.space.q2_nodes[k]
print(f"\nlargest vertical-velocity variance {var[k]:.3e} at ({x:.2f}, {y:.2f})")
