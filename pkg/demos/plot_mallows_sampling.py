"""
Sampling Mallows permutations
=============================

A Mallows permutation is a noisy copy of the identity. Smaller phi means
less noise, and the displacement of any element has a geometric tail.
"""

import numpy as np

from mallowmatch.mallows import MallowsParams, Permutation, displacement_stats, pmf, sample, tail_bound

# the six permutations of three items at phi = 0.5
params = MallowsParams(phi=0.5, t=3)
for order in [(1, 2, 3), (1, 3, 2), (2, 1, 3), (2, 3, 1), (3, 1, 2), (3, 2, 1)]:
    p = Permutation.from_order(order)
    print(order, round(pmf(p, params) * 21, 6), "/ 21")

# one long draw and how far its elements wandered
rng = np.random.default_rng(0)
big = sample(MallowsParams(phi=0.9, t=1000), rng)
stats = displacement_stats(big)
print("max displacement:", stats.max_abs_displacement)

# share of elements displaced by at least d; one draw, so it only roughly
# follows the per-element ceiling 2 phi^d
for d in (5, 10, 20, 40):
    print(d, (stats.per_element >= d).mean(), tail_bound(d, 0.9))
