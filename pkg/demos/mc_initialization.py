"""Monte Carlo sampling of the channel flow depends on the initial guess.

Below the pitchfork every viscosity draw admits three flows. Starting each
Newton solve from zero almost always returns the symmetric one, so the
sample variance is tiny. Starting from a randomly chosen continuation
branch returns all three, and the probe values split into clusters.

Uses 40 draws on the coarse preset (a few minutes): ``python3 demos/mc_initialization.py``.
"""
import math

from stochbif import uq_stats as uq
from stochbif.klexp import scalar_kl
from stochbif.mc import ensemble_stats, run_mc, vy_variance
from stochbif.nssolve import FlowProblem, continuation_sweep

problem = FlowProblem.from_preset("coarse-unstructured")
law = scalar_kl(0.9, math.sqrt(0.001), "gaussian")
sweep = continuation_sweep(1.1, 0.75, 0.01, problem)

for policy in ("zero", "continuation"):
    ensemble = run_mc(law, 40, policy, rng_seed=1, problem=problem, sweep=sweep)
    stats = ensemble_stats(ensemble, problem)
    probe = stats.scatter[:, 1]
    print(f"{policy:>12}: {stats.n_converged} converged, "
          f"max v_y variance {vy_variance(stats, problem).max():.3e}, "
          f"{uq.count_clusters(probe, 0.1)} probe clusters, "
          f"probe range [{probe.min():+.3f}, {probe.max():+.3f}]")
