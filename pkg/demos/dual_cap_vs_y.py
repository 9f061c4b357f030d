"""Dual upper bounds as a function of the multiplier y.

The baseline density gives E[V_c(y Z_T, f)] for each y; adding x*y and
minimizing over y yields the cap used everywhere else.  A Nelder-Mead search
over perturbed densities then tries to push each bound down further.
"""

import numpy as np

from mcduality.dual import dual_bound_mmm, minimize_dual
from mcduality.market import HestonParams, TimeGrid, simulate_heston_market
from mcduality.rng import RandomStream
from mcduality.utility import ConjugatePair, UtilitySpec, logistic_claim

x = 0.75
rho = 0.3
pair = ConjugatePair(UtilitySpec.power(0.5))
claim = logistic_claim(rate=-2.0, scale=2.0)

params = HestonParams(mu=0.5, kappa=2.0, theta=1.0, sigma=0.7, v0=1.0)
bundle = simulate_heston_market(params.with_rho(rho), TimeGrid(1.0, 96),
                                8000, RandomStream(7))

print(f"x = {x}, rho = {rho}, claim range [{claim.phi_min}, {claim.phi_max}]")
print("   y    baseline bound    + x*y     improved (NM)")
best = np.inf
for y in (0.3, 0.5, 0.8, 1.0, 1.25, 1.6, 2.0):
    base = dual_bound_mmm(pair, y, bundle, claim)
    opt = minimize_dual(pair, y, bundle, claim=claim, budget=40)
    capped = base.mean + x * y
    best = min(best, capped)
    print(f"{y:5.2f}   {base.mean:8.4f}+-{base.stderr:.4f} {capped:9.4f}"
          f"   {opt.estimate.mean + x * y:9.4f}  [{opt.best.label}]")
print(f"cap = min over the grid = {best:.4f}")
