#!/usr/bin/env python3
"""Cyclic rearrangement drains diagonal mass without touching marginals.

Start from the worst coupling of two atoms (all mass on coincident
pairs), let the swap search rearrange it, and confirm the marginals
survive to machine precision.  Then run the same search on an LP
optimum: no rearrangement can improve it, so the plan comes back
unchanged.
"""

from mmot.cost import coulomb
from mmot.grid import GridSpec
from mmot.harness import swap_search
from mmot.lp import solve_mmot
from mmot.measure import UniformBall, discretize
from mmot.transport import TransportPlan, plan_cost

model = coulomb(2)
grid = GridSpec(level=1, window_halfwidth=1.0, dimension=1)

# Everything sits on the diagonal: the most repulsive-hostile start.
diag = TransportPlan(grid, 2, {((-1,), (-1,)): 0.5, ((2,), (2,)): 0.5})
print("diagonal plan, cell-bound cost:", plan_cost(diag, model, cost_mode="cell"))

fixed, log = swap_search(diag, model)
for line in log:
    print(" ", line)

print("rearranged atoms:")
for cells, w in sorted(fixed.atoms.items()):
    print(f"  {cells!r} -> {w!r}")

drift = 0.0
for i in range(2):
    old, new = diag.marginal(i), fixed.marginal(i)
    for c in set(old) | set(new):
        drift = max(drift, abs(old.get(c, 0.0) - new.get(c, 0.0)))
print(f"max marginal drift after rearrangement: {drift:.3e}")
print()

# The optimum of the LP admits no strictly improving rearrangement.
mu = discretize(UniformBall(center=(0.0,), radius=1.0), GridSpec(2, 1.0, 1))
plan, _, value = solve_mmot(mu, model)
print(f"ball optimum at level 2, value {value!r}")
stable, log = swap_search(plan, model)
for line in log:
    print(" ", line)
print("plan unchanged:", stable.atoms == plan.atoms)
