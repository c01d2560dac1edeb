"""Symmetry breaking of the channel flow found by three-pass continuation.

A symmetric jet entering the wide channel stays symmetric at high
viscosity. Lowering the viscosity, the Jacobian determinant changes sign
at the pitchfork, kicks along the critical mode find the two wall-hugging
states, and the upper and lower passes follow them downward.

Runs on the coarse preset in a few minutes: ``python3 demos/coanda_continuation.py``.
"""
import time

from stochbif.nssolve import FlowProblem, continuation_sweep

problem = FlowProblem.from_preset("coarse-unstructured")
print(f"{problem.space.mesh.n_nodes} mesh nodes, {problem.n_dofs} unknowns, probe at {problem.probe}")

start = time.perf_counter()
sweep = continuation_sweep(1.1, 0.8, 0.02, problem)
print(f"sweep took {time.perf_counter() - start:.0f} s")
print(f"passes agree down to mu* = {sweep.mu_star}; first split found at {sweep.first_post_critical}")

print("\n  mu     vertical velocity at the probe, one value per distinct branch")
for mu in sorted(sweep.diagram.mus(), reverse=True):
    values = ", ".join(f"{v:+.4f}" for v in sweep.branch_values(mu))
    print(f"{mu:.2f}   {values}")
