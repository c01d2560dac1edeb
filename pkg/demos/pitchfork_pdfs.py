"""Random viscosity in the pitchfork normal form: what one Galerkin solve can show.

The equilibria of u^3 - mu u = 0 are 0 and +-sqrt(mu). With mu drawn from
U(0.8, 1.2) every realization has three roots, but a single chaos expansion
u(xi) is one smooth function of the seed, so each Newton start settles on one
root family. Running many random starts and sampling each expansion shows
which families appear and how sharply their densities peak.

Run with ``python3 demos/pitchfork_pdfs.py``.
"""
import numpy as np

from stochbif import pitchfork as pf
from stochbif import uq_stats as uq
from stochbif.klexp import uniform_kl
from stochbif.pcbasis import PCBasis

basis = PCBasis("legendre", 5)
law = uniform_kl(0.8, 1.2)
solutions = pf.solve_ensemble(basis, law, count=100, amplitude=3.0, rng_seed=42)
converged = [s for s in solutions if s.converged]
print(f"{len(converged)} of {len(solutions)} random starts converged")

# many starts land on expansions that jump between root families; they
# differ in their fluctuation coefficients
distinct = pf.distinct_solutions(converged, 1e-6)
print(f"{len(distinct)} distinct expansions; the first six (mean and first fluctuation coefficient):")
for coeffs in distinct[:6]:
    print(f"  u0 = {coeffs[0]:+.4f}   u1 = {coeffs[1]:+.4f}")

# sample each of those expansions and list the peaks of its density
for k, coeffs in enumerate(distinct[:6]):
    pdf, found = uq.pdf_peaks_of_expansion(coeffs, basis, 20_000, rng_seed=k)
    peaks = ", ".join(f"{loc:+.3f}" for loc, _ in found)
    print(f"expansion {k}: density mass {pdf.mass():.3f}, peaks at {peaks}")

# the smoothest expansion on the upper family tracks sqrt(mu) pointwise
upper = min((c for c in distinct if c[0] > 0.5), key=lambda c: np.abs(c[2:]).sum())
xi = np.linspace(-np.sqrt(3), np.sqrt(3), 5)
mu = law.realize(xi[:, None])[:, 0]
print("\nseed     mu       u(xi)    sqrt(mu)")
for x, m, u in zip(xi, mu, basis.evaluate(upper, xi[:, None])):
    print(f"{x:+.3f}  {m:.4f}  {u:.5f}  {np.sqrt(m):.5f}")
