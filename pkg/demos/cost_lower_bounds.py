#!/usr/bin/env python3
"""The cell cost bound from below, level by level.

For a fixed triple of points the pairwise-separable cell cost is a
finite lower bound on the exact interaction; refining the grid can only
push it up, and it converges to the exact value as cells shrink onto
the points.  The sup-distance arithmetic is exact integer work, so the
monotonicity holds without any tolerance.
"""

import numpy as np

from mmot.cost import cell_cost_lower, coulomb, pointwise_cost
from mmot.grid import GridSpec, cell_of

rng = np.random.default_rng(7)
model = coulomb(3)

pts = rng.uniform(-1.0, 1.0, size=(3, 3))
exact = pointwise_cost(model, pts)
print("three random points in the cube [-1, 1]^3:")
for p in pts:
    print(f"  ({p[0]:+.4f}, {p[1]:+.4f}, {p[2]:+.4f})")
print(f"exact interaction: {exact!r}")
print()

print(f"{'level':>5} {'cell bound':>18} {'share of exact':>15}")
prev = 0.0
for level in range(9):
    grid = GridSpec(level, 1.0, 3)
    cells = tuple(cell_of(p, grid) for p in pts)
    bound = cell_cost_lower(model, cells, grid)
    assert prev <= bound <= exact
    prev = bound
    print(f"{level:>5} {bound:>18.12f} {bound / exact:>14.2%}")

print()
print("10000 random triples, levels 0..6: bound chain 0 <= c_0 <= ... <= c_6 <= exact")
bad = 0
for _ in range(10_000):
    pts = rng.uniform(-1.0, 1.0, size=(3, 3))
    exact = pointwise_cost(model, pts)
    prev = 0.0
    for level in range(7):
        grid = GridSpec(level, 1.0, 3)
        bound = cell_cost_lower(model, tuple(cell_of(p, grid) for p in pts), grid)
        if not (prev <= bound <= exact):
            bad += 1
            break
        prev = bound
print(f"violations: {bad}")
