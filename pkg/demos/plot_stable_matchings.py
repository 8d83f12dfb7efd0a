"""
Stable matchings of a small market
==================================

Deferred acceptance gives the two extreme stable matchings. Walking the
rotations between them lists every stable matching, and brute force
agrees on small markets.
"""

from mallowmatch.market import MarketConfig, generate
from mallowmatch.matching import Side, brute_force_stable, deferred_acceptance, enumerate_stable, is_stable

instance = generate(MarketConfig(n=8, k=1, phi_m=1.0, phi_w=1.0, seed=3))

men_best = deferred_acceptance(instance, Side.MEN)
women_best = deferred_acceptance(instance, Side.WOMEN)
print("man-optimal:  ", men_best.pairs())
print("woman-optimal:", women_best.pairs())
print("both stable:", is_stable(instance, men_best), is_stable(instance, women_best))

stable = enumerate_stable(instance)
print(len(stable), "stable matchings")
print("same as brute force:", stable.as_set() == brute_force_stable(instance).as_set())

# the extra woman is single in every stable matching
print("single women:", {tuple(sorted(mu.unmatched_women)) for mu in stable.matchings})
