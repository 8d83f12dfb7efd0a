"""Stable matchings: deferred acceptance, stability checks and enumeration.

The full stable set is enumerated through rotations. Starting from the
man-optimal matching, exposed rotations are eliminated one at a time until
the woman-optimal matching is reached; this visits every rotation exactly
once and the visit order is a linear extension of the rotation poset.
Precedence edges are then read off the preference lists and every closed
subset of the poset is turned back into a matching.

In unbalanced markets the surplus women never receive a proposal in the
man-optimal matching and stay single in every stable matching. They are kept
in the men's lists: when a man's next acceptable woman is single he cannot
take part in a rotation, which is exactly the constraint they impose.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels
from .market import MarketInstance, Side

__all__ = [
    "Matching",
    "BlockingPair",
    "Rotation",
    "StableSet",
    "InstabilityError",
    "deferred_acceptance",
    "blocking_pairs",
    "is_stable",
    "find_rotations",
    "rotation_precedence",
    "enumerate_stable",
    "brute_force_stable",
    "matching_to_json",
    "matching_from_json",
]


class InstabilityError(ValueError):
    """A matching expected to be stable has a blocking pair."""


class Matching:
    """One-to-one matching of n men into n + k women.

    ``man_to_woman[m]`` is a 0-based woman id (or -1); the reverse map and
    the set of single women are derived.
    """

    __slots__ = ("man_to_woman", "woman_to_man", "_key")

    def __init__(self, man_to_woman, n_women: int):
        m2w = np.array(man_to_woman, dtype=np.int64)
        if m2w.ndim != 1:
            raise ValueError("man_to_woman must be 1-D")
        if (m2w >= n_women).any() or (m2w < -1).any():
            raise ValueError("partner id out of range")
        w2m = np.full(n_women, -1, dtype=np.int64)
        matched = np.flatnonzero(m2w >= 0)
        w2m[m2w[matched]] = matched
        if np.count_nonzero(w2m >= 0) != matched.size:
            raise ValueError("two men share a partner")
        m2w.setflags(write=False)
        w2m.setflags(write=False)
        self.man_to_woman = m2w
        self.woman_to_man = w2m
        self._key = tuple(m2w.tolist())

    @classmethod
    def from_pairs(cls, pairs, n_men: int, n_women: int) -> Matching:
        m2w = np.full(n_men, -1, dtype=np.int64)
        for m, w in pairs:
            m2w[m] = w
        return cls(m2w, n_women)

    @property
    def n_men(self) -> int:
        return self.man_to_woman.size

    @property
    def n_women(self) -> int:
        return self.woman_to_man.size

    @property
    def unmatched_women(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.woman_to_man < 0).tolist())

    @property
    def unmatched_men(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.man_to_woman < 0).tolist())

    def pairs(self) -> list[tuple[int, int]]:
        return [(m, w) for m, w in enumerate(self._key) if w >= 0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Matching):
            return NotImplemented
        return self._key == other._key and self.n_women == other.n_women

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return f"Matching({list(self._key)}, n_women={self.n_women})"


class BlockingPair(NamedTuple):
    man: int
    woman: int


@dataclass(frozen=True)
class Rotation:
    """Cyclic move: man ``pairs[i][0]`` leaves ``pairs[i][1]`` for ``pairs[i+1][1]``."""

    pairs: tuple[tuple[int, int], ...]

    def moves(self) -> Iterator[tuple[int, int, int]]:
        """Yield (man, old woman, new woman)."""
        r = len(self.pairs)
        for i, (m, w) in enumerate(self.pairs):
            yield m, w, self.pairs[(i + 1) % r][1]


@dataclass
class StableSet:
    matchings: list[Matching]
    truncated: bool
    man_optimal: int
    woman_optimal: int
    rotations: list[Rotation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.matchings)

    def as_set(self) -> frozenset[Matching]:
        return frozenset(self.matchings)

    @property
    def mu_m(self) -> Matching:
        return self.matchings[self.man_optimal]

    @property
    def mu_w(self) -> Matching:
        return self.matchings[self.woman_optimal]


def deferred_acceptance(instance: MarketInstance, proposing: Side = Side.MEN,
                        *, with_proposals: bool = False):
    """Proposing-side-optimal stable matching (Gale-Shapley)."""
    men, women = instance.men_prefs, instance.women_prefs
    if Side(proposing) is Side.MEN:
        m2w, _, proposals = _kernels.deferred_acceptance(men.orders, women.ranks)
        matching = Matching(m2w, instance.n_women)
    else:
        _, m2w, proposals = _kernels.deferred_acceptance(women.orders, men.ranks)
        matching = Matching(m2w, instance.n_women)
    if with_proposals:
        return matching, int(proposals)
    return matching


def _check_dims(instance: MarketInstance, matching: Matching) -> None:
    if matching.n_men != instance.n or matching.n_women != instance.n_women:
        raise ValueError(
            f"matching is {matching.n_men}x{matching.n_women}, "
            f"instance is {instance.n}x{instance.n_women}"
        )


def _blocking_mask(instance: MarketInstance, matching: Matching) -> np.ndarray:
    men_r = instance.men_prefs.ranks
    women_r = instance.women_prefs.ranks
    m2w, w2m = matching.man_to_woman, matching.woman_to_man
    # single agents rank their status below every partner
    m_cur = np.where(m2w >= 0, men_r[np.arange(instance.n), np.maximum(m2w, 0)], instance.n_women)
    w_cur = np.where(w2m >= 0, women_r[np.arange(instance.n_women), np.maximum(w2m, 0)], instance.n)
    return (men_r < m_cur[:, None]) & (women_r.T < w_cur[None, :])


def blocking_pairs(instance: MarketInstance, matching: Matching) -> list[BlockingPair]:
    _check_dims(instance, matching)
    ms, ws = np.nonzero(_blocking_mask(instance, matching))
    return [BlockingPair(int(m), int(w)) for m, w in zip(ms, ws)]


def is_stable(instance: MarketInstance, matching: Matching) -> bool:
    _check_dims(instance, matching)
    return not _blocking_mask(instance, matching).any()


# --- rotations ---------------------------------------------------------------


def _successor(instance: MarketInstance, m2w, w2m, m: int) -> int:
    """First woman after m's partner who would accept m; -1 if none.

    Returns ``-2`` when that woman is single, so m cannot rotate.
    """
    men, women = instance.men_prefs, instance.women_prefs
    order = men.orders[m]
    wr = women.ranks
    for j in range(int(men.ranks[m, m2w[m]]) + 1, instance.n_women):
        w = int(order[j])
        p = w2m[w]
        if p < 0:
            return -2
        if wr[w, m] < wr[w, p]:
            return w
    return -1


def _exposed_rotation(instance: MarketInstance, m2w, w2m) -> Rotation | None:
    n = instance.n
    succ = [_successor(instance, m2w, w2m, m) for m in range(n)]
    nxt = [int(w2m[s]) if s >= 0 else -1 for s in succ]
    state = [0] * n  # 0 unseen, 1 on current walk, 2 finished
    for start in range(n):
        if state[start]:
            continue
        path = []
        m = start
        while m >= 0 and state[m] == 0:
            state[m] = 1
            path.append(m)
            m = nxt[m]
        if m >= 0 and state[m] == 1:
            cycle = path[path.index(m):]
            return Rotation(tuple((c, int(m2w[c])) for c in cycle))
        for p in path:
            state[p] = 2
    return None


def find_rotations(instance: MarketInstance, mu_m: Matching | None = None) -> list[Rotation]:
    """All rotations, in the order a maximal elimination chain meets them."""
    if mu_m is None:
        mu_m = deferred_acceptance(instance, Side.MEN)
    m2w = mu_m.man_to_woman.copy()
    w2m = mu_m.woman_to_man.copy()
    rotations = []
    while True:
        rot = _exposed_rotation(instance, m2w, w2m)
        if rot is None:
            return rotations
        rotations.append(rot)
        for m, _, new in rot.moves():
            m2w[m] = new
            w2m[new] = m


def rotation_precedence(instance: MarketInstance, rotations: list[Rotation],
                        mu_m: Matching) -> list[set[int]]:
    """Direct predecessors of each rotation (indices into ``rotations``).

    Rule 1: if rotation a moves m onto w and rotation b moves m off w,
    then a precedes b. Rule 2: if b moves m past w (w strictly between m's
    old and new partner), w must already hold someone she prefers to m, so
    the rotation that first lifts her above m precedes b.
    """
    women_r = instance.women_prefs.ranks
    men = instance.men_prefs
    produced_by: dict[tuple[int, int], int] = {}
    history: dict[int, list[tuple[int, int]]] = {}
    for idx, rot in enumerate(rotations):
        for m, _, new in rot.moves():
            produced_by[(m, new)] = idx
            history.setdefault(new, []).append((idx, m))

    preds: list[set[int]] = [set() for _ in rotations]
    for idx, rot in enumerate(rotations):
        for m, old, new in rot.moves():
            src = produced_by.get((m, old))
            if src is not None:
                preds[idx].add(src)
            lo, hi = int(men.ranks[m, old]), int(men.ranks[m, new])
            for j in range(lo + 1, hi):
                w = int(men.orders[m, j])
                cutoff = women_r[w, m]
                if mu_m.woman_to_man[w] >= 0 and women_r[w, mu_m.woman_to_man[w]] < cutoff:
                    continue
                for src, partner in history.get(w, ()):
                    if women_r[w, partner] < cutoff:
                        preds[idx].add(src)
                        break
    for idx, ps in enumerate(preds):
        if any(p >= idx for p in ps):
            raise AssertionError("rotation chain is not a linear extension of the poset")
    return preds


def _closed_subsets(preds: list[set[int]]) -> Iterator[tuple[list[bool], int, bool]]:
    """Walk all down-closed subsets in a fixed depth-first order.

    Yields ``(choice, j, included)`` events as decisions are made or undone
    so the caller can keep a matching in sync; ``j == len(preds)`` marks a
    complete subset.
    """
    r = len(preds)
    choice: list[bool] = [False] * r

    def can_include(j: int) -> bool:
        return all(choice[p] for p in preds[j])

    j = 0
    while True:
        if j == r:
            yield choice, r, True
            j -= 1
            while j >= 0 and (choice[j] or not can_include(j)):
                if choice[j]:
                    choice[j] = False
                    yield choice, j, False
                j -= 1
            if j < 0:
                return
            choice[j] = True
            yield choice, j, True
            j += 1
        else:
            choice[j] = False
            j += 1


def enumerate_stable(instance: MarketInstance, cap: int = 10_000) -> StableSet:
    """All stable matchings (at most ``cap``; extremes are always kept)."""
    if cap < 2:
        raise ValueError("cap must be at least 2")
    mu_m = deferred_acceptance(instance, Side.MEN)
    mu_w = deferred_acceptance(instance, Side.WOMEN)
    rotations = find_rotations(instance, mu_m)
    preds = rotation_precedence(instance, rotations, mu_m)

    m2w = mu_m.man_to_woman.copy()
    out: list[Matching] = []
    truncated = False
    woman_optimal = None
    r = len(rotations)
    for choice, j, included in _closed_subsets(preds):
        if j < r:
            for m, old, new in rotations[j].moves():
                m2w[m] = new if included else old
            continue
        if len(out) == cap:
            truncated = True
            break
        out.append(Matching(m2w, instance.n_women))
        if all(choice):
            woman_optimal = len(out) - 1
    if woman_optimal is None:
        out.append(mu_w)
        woman_optimal = len(out) - 1
    if out[woman_optimal] != mu_w:
        raise AssertionError("rotation chain did not end at the woman-optimal matching")
    return StableSet(out, truncated, 0, woman_optimal, rotations)


# --- brute force oracle ----------------------------------------------------------


BRUTE_FORCE_MAX_MEN = 9
BRUTE_FORCE_MAX_WOMEN = 10


def brute_force_stable(instance: MarketInstance) -> StableSet:
    """Exhaustive search over injective matchings; testing oracle.

    Men are assigned in index order and a branch is cut as soon as two
    assigned couples already form a blocking pair, so only provably
    unstable completions are skipped.
    """
    n, l = instance.n, instance.n_women
    if n > BRUTE_FORCE_MAX_MEN or l > BRUTE_FORCE_MAX_WOMEN:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_MEN}, n + k <= {BRUTE_FORCE_MAX_WOMEN}")
    mr = instance.men_prefs.ranks.tolist()
    wr = instance.women_prefs.ranks.tolist()
    m2w = [-1] * n
    w2m = [-1] * l
    found: list[tuple[int, ...]] = []

    def compatible(m: int, w: int) -> bool:
        for m2 in range(m):
            w2 = m2w[m2]
            # m with w2, or m2 with w
            if mr[m][w2] < mr[m][w] and wr[w2][m] < wr[w2][m2]:
                return False
            if mr[m2][w] < mr[m2][w2] and wr[w][m2] < wr[w][m]:
                return False
        return True

    def extend(m: int) -> None:
        if m == n:
            for w in range(l):
                if w2m[w] < 0 and any(mr[x][w] < mr[x][m2w[x]] for x in range(n)):
                    return
            found.append(tuple(m2w))
            return
        for w in range(l):
            if w2m[w] < 0 and compatible(m, w):
                m2w[m], w2m[w] = w, m
                extend(m + 1)
                m2w[m], w2m[w] = -1, -1

    extend(0)
    matchings = [Matching(f, l) for f in found]
    men_cost = [sum(mr[m][w] for m, w in enumerate(f)) for f in found]
    women_cost = [sum(wr[w][m] for m, w in enumerate(f)) for f in found]
    return StableSet(
        matchings,
        truncated=False,
        man_optimal=int(np.argmin(men_cost)),
        woman_optimal=int(np.argmin(women_cost)),
    )


# --- serialization -----------------------------------------------------------------


def matching_to_json(matching: Matching) -> str:
    doc = {
        "man_to_woman": [w + 1 if w >= 0 else None for w in matching.man_to_woman.tolist()],
        "woman_to_man": [m + 1 if m >= 0 else None for m in matching.woman_to_man.tolist()],
    }
    return json.dumps(doc)


def matching_from_json(text: str) -> Matching:
    doc = json.loads(text)
    m2w = [w - 1 if w is not None else -1 for w in doc["man_to_woman"]]
    matching = Matching(m2w, len(doc["woman_to_man"]))
    expected = [m - 1 if m is not None else -1 for m in doc["woman_to_man"]]
    if matching.woman_to_man.tolist() != expected:
        raise ValueError("man_to_woman and woman_to_man disagree")
    return matching
