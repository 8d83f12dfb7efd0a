"""Rank statistics of matchings: displacements, gaps and average-rank welfare."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .market import MarketInstance, PreferenceProfile
from .matching import InstabilityError, Matching, StableSet, blocking_pairs

__all__ = [
    "DisplacementSummary",
    "PairGapReport",
    "WelfareReport",
    "WelfareRatios",
    "HolzmanResult",
    "maximal_displacement",
    "market_displacement",
    "pair_gaps",
    "holzman_check",
    "average_ranks",
    "welfare_ratios",
]


@dataclass(frozen=True)
class DisplacementSummary:
    delta: int
    per_target: np.ndarray


@dataclass(frozen=True)
class PairGapReport:
    men: np.ndarray
    women: np.ndarray
    mutual_gap: np.ndarray
    central_gap: np.ndarray
    quantile_gap: np.ndarray | None
    max_mutual_gap: int
    max_central_gap: int
    max_quantile_gap: float | None


@dataclass(frozen=True)
class WelfareReport:
    a_m: float
    a_w: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class WelfareRatios:
    men_pessimal_over_optimal: float   # A_M(mu_W) / A_M(mu_M)
    women_pessimal_over_optimal: float  # A_W(mu_M) / A_W(mu_W)
    max_women_over_men: float          # max over members of A_W / A_M
    max_men_over_women: float          # max over members of A_M / A_W

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HolzmanResult:
    holds: bool
    bound: int
    worst_gap: int
    witness: tuple[int, int] | None

    def __bool__(self) -> bool:
        return self.holds


def maximal_displacement(profile: PreferenceProfile) -> DisplacementSummary:
    """Spread of each target's rank across all agents of a profile."""
    ranks = profile.ranks
    per = (ranks.max(axis=0) - ranks.min(axis=0)).astype(np.int64)
    return DisplacementSummary(int(per.max()), per)


def market_displacement(instance: MarketInstance) -> tuple[int, int]:
    """(Delta(R_M), Delta(R_W))."""
    return (maximal_displacement(instance.men_prefs).delta,
            maximal_displacement(instance.women_prefs).delta)


def _matched(instance: MarketInstance, matching: Matching):
    if matching.n_men != instance.n or matching.n_women != instance.n_women:
        raise ValueError("matching and instance dimensions disagree")
    men = np.flatnonzero(matching.man_to_woman >= 0)
    return men, matching.man_to_woman[men]


def pair_gaps(instance: MarketInstance, matching: Matching) -> PairGapReport:
    """Mutual, central-order and (balanced only) quantile gaps per matched pair."""
    men, women = _matched(instance, matching)
    r_mw = instance.men_prefs.ranks[men, women].astype(np.int64)
    r_wm = instance.women_prefs.ranks[women, men].astype(np.int64)
    mutual = np.abs(r_mw - r_wm)
    # central ranks are id + 1 on both sides; the offsets cancel
    central = np.abs(men - women)
    quantile = None
    if instance.k == 0:
        quantile = central / instance.n
    return PairGapReport(
        men=men,
        women=women,
        mutual_gap=mutual,
        central_gap=central,
        quantile_gap=quantile,
        max_mutual_gap=int(mutual.max(initial=0)),
        max_central_gap=int(central.max(initial=0)),
        max_quantile_gap=None if quantile is None else float(quantile.max(initial=0.0)),
    )


def holzman_check(instance: MarketInstance, matching: Matching) -> HolzmanResult:
    """Check |r_m(w) - r_w(m)| <= 2 max(Delta(R_W), Delta(R_M)) on every pair.

    Only meaningful for stable matchings, so an unstable input raises
    :class:`InstabilityError` instead of returning a verdict.
    """
    blockers = blocking_pairs(instance, matching)
    if blockers:
        raise InstabilityError(f"matching is blocked by {blockers[0]}")
    d_m, d_w = market_displacement(instance)
    bound = 2 * max(d_m, d_w)
    gaps = pair_gaps(instance, matching)
    worst = gaps.max_mutual_gap
    witness = None
    if worst > bound:
        i = int(np.argmax(gaps.mutual_gap))
        witness = (int(gaps.men[i]), int(gaps.women[i]))
    return HolzmanResult(worst <= bound, bound, worst, witness)


def average_ranks(instance: MarketInstance, matching: Matching) -> WelfareReport:
    """Average 1-based partner rank per side, over matched agents only."""
    if (matching.man_to_woman < 0).any():
        raise ValueError("every man must be matched")
    men, women = _matched(instance, matching)
    a_m = (instance.men_prefs.ranks[men, women].sum(dtype=np.int64) + men.size) / men.size
    a_w = (instance.women_prefs.ranks[women, men].sum(dtype=np.int64) + women.size) / women.size
    return WelfareReport(float(a_m), float(a_w))


def welfare_ratios(instance: MarketInstance, stable_set: StableSet) -> WelfareRatios:
    opt = average_ranks(instance, stable_set.mu_m)
    pes = average_ranks(instance, stable_set.mu_w)
    reports = [average_ranks(instance, mu) for mu in stable_set.matchings]
    return WelfareRatios(
        men_pessimal_over_optimal=pes.a_m / opt.a_m,
        women_pessimal_over_optimal=opt.a_w / pes.a_w,
        max_women_over_men=max(r.a_w / r.a_m for r in reports),
        max_men_over_women=max(r.a_m / r.a_w for r in reports),
    )
