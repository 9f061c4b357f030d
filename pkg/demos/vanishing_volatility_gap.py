# Exponential investor facing a digital claim in a two-driver market whose
# second volatility leg shrinks like 1/n.  The finite-n value is the same
# for every n, but the limit market loses the hedge and the value drops by
# a strictly positive amount -- reproduced here by Monte Carlo bounds.

import math

from mcduality.market import TimeGrid
from mcduality.pricing import degenerate_example

res = degenerate_example(alpha=1.0, x=0.0, n_values=[1, 2, 4, 8],
                         grid=TimeGrid(1.0, 128), paths=10_000, seed=7,
                         buckets=8, degree=2, budget=40)

print(f"analytic value, any finite n : {res.analytic_value_n:.6f}"
      f"   (= -e^(-1/2) = {-math.exp(-0.5):.6f})")
print(f"analytic value, limit market : {res.analytic_value_limit:.6f}")
print(f"analytic gap                 : {res.analytic_gap:.6f}")
print()
print("  n   hedge price      residual sd   primal bound        value at hedge price")
for r in res.rows:
    b = r.bound.estimate
    print(f"{r.n:3.0f}   {r.hedge_price:.4f}+-{r.hedge_price_stderr:.4f}"
          f"   {r.residual_sd:9.4f}   {b.mean:8.4f}+-{b.stderr:.4f}"
          f"   {r.value_mc:8.4f}+-{r.value_mc_stderr:.4f}")
gap, gap_se = res.mc_gap
print()
print(f"limit-market bound : {res.limit_bound.mean:.4f} +- {res.limit_bound.stderr:.4f}")
print(f"mc gap             : {gap:.4f} +- {gap_se:.4f}   (analytic {res.analytic_gap:.4f})")
