"""Mallows permutation model centred on the identity.

Permutations use the rank-vector convention: ``ranks[i]`` is the 1-based
position that element ``i + 1`` of the central order receives, so
``|ranks[i] - (i + 1)|`` is the displacement of that element.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from . import _kernels

__all__ = [
    "Permutation",
    "MallowsParams",
    "DisplacementStats",
    "inversions",
    "normalization_constant",
    "log_normalization_constant",
    "pmf",
    "sample",
    "sample_ranks",
    "displacement_stats",
    "tail_bound",
    "all_permutations",
]

# above this size pmf/Z are evaluated in log space
LOG_SPACE_THRESHOLD = 20


class Permutation:
    """Immutable permutation of ``1..t`` stored as a rank vector."""

    __slots__ = ("_ranks",)

    def __init__(self, ranks: Iterable[int]):
        arr = np.array(list(ranks) if not isinstance(ranks, np.ndarray) else ranks, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("a permutation needs a non-empty 1-D rank vector")
        t = arr.size
        seen = np.zeros(t + 1, dtype=bool)
        if arr.min() < 1 or arr.max() > t:
            raise ValueError(f"ranks must lie in 1..{t}")
        seen[arr] = True
        if not seen[1:].all():
            raise ValueError("ranks must be a bijection on 1..t")
        arr.setflags(write=False)
        self._ranks = arr

    @classmethod
    def from_order(cls, order: Iterable[int]) -> Permutation:
        """Build from an order vector: ``order[p]`` is the element at position p+1."""
        order = np.asarray(list(order), dtype=np.int64)
        ranks = np.empty_like(order)
        if order.size and (order.min() < 1 or order.max() > order.size):
            raise ValueError("order entries must lie in 1..t")
        ranks[order - 1] = np.arange(1, order.size + 1)
        return cls(ranks)

    @classmethod
    def identity(cls, t: int) -> Permutation:
        return cls(np.arange(1, t + 1))

    @classmethod
    def reversal(cls, t: int) -> Permutation:
        return cls(np.arange(t, 0, -1))

    @property
    def ranks(self) -> np.ndarray:
        return self._ranks

    @property
    def t(self) -> int:
        return int(self._ranks.size)

    @property
    def order(self) -> np.ndarray:
        """1-based order vector (element occupying each position)."""
        order = np.empty_like(self._ranks)
        order[self._ranks - 1] = np.arange(1, self.t + 1)
        return order

    def inverse(self) -> Permutation:
        return Permutation(self.order)

    def __len__(self) -> int:
        return self.t

    def __iter__(self) -> Iterator[int]:
        return iter(int(x) for x in self._ranks)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self._ranks, other._ranks)

    def __hash__(self) -> int:
        return hash(tuple(self._ranks.tolist()))

    def __repr__(self) -> str:
        return f"Permutation({tuple(self._ranks.tolist())})"


@dataclass(frozen=True)
class MallowsParams:
    phi: float
    t: int

    def __post_init__(self):
        if not 0.0 <= self.phi <= 1.0:
            raise ValueError(f"phi must lie in [0, 1], got {self.phi}")
        if self.t < 1:
            raise ValueError(f"t must be positive, got {self.t}")


@dataclass(frozen=True)
class DisplacementStats:
    max_abs_displacement: int
    per_element: np.ndarray


def inversions(p: Permutation) -> int:
    """Number of pairs i < j with p(i) > p(j)."""
    return int(_kernels.count_inversions(p.ranks - 1))


def log_normalization_constant(params: MallowsParams) -> float:
    """Natural log of Z = prod_{i=1..t} (1 - phi**i) / (1 - phi)."""
    phi, t = params.phi, params.t
    if phi == 0.0:
        return 0.0
    if phi == 1.0:
        return math.lgamma(t + 1)
    i = np.arange(1, t + 1)
    log_phi = math.log(phi)
    # log((1 - phi**i) / (1 - phi)), computed stably
    return float(np.sum(np.log(-np.expm1(i * log_phi))) - t * math.log1p(-phi))


def normalization_constant(params: MallowsParams) -> float:
    """Z such that sum over all permutations of phi**inv equals Z.

    Raises OverflowError when Z is not representable as a float; use
    :func:`log_normalization_constant` in that regime.
    """
    phi, t = params.phi, params.t
    if phi == 0.0:
        return 1.0
    if phi == 1.0:
        if t > 170:
            raise OverflowError(f"{t}! overflows a float; use log_normalization_constant")
        return float(math.factorial(t))
    if t <= LOG_SPACE_THRESHOLD:
        return math.prod((1.0 - phi**i) / (1.0 - phi) for i in range(1, t + 1))
    log_z = log_normalization_constant(params)
    if log_z > math.log(np.finfo(float).max):
        raise OverflowError("normalization constant overflows a float")
    return math.exp(log_z)


def pmf(p: Permutation, params: MallowsParams) -> float:
    if p.t != params.t:
        raise ValueError(f"permutation has {p.t} elements, params expect {params.t}")
    inv = inversions(p)
    if params.phi == 0.0:
        return 1.0 if inv == 0 else 0.0
    if params.phi == 1.0:
        return math.exp(-math.lgamma(params.t + 1))
    if params.t <= LOG_SPACE_THRESHOLD:
        return params.phi**inv / normalization_constant(params)
    return math.exp(inv * math.log(params.phi) - log_normalization_constant(params))


def sample_ranks(phi: float, t: int, uniforms: np.ndarray) -> np.ndarray:
    """0-based Mallows rank vectors, one per row of ``uniforms`` (shape ``(rows, t)``).

    Exact repeated-insertion sampling: position p takes the (V+1)-th smallest
    unplaced element, with V truncated-geometric, decoded through a Fenwick
    tree in O(t log t).
    """
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    if uniforms.ndim != 2 or uniforms.shape[1] != t:
        raise ValueError(f"uniforms must have shape (rows, {t})")
    out = np.empty(uniforms.shape, dtype=np.int32)
    if phi == 0.0:
        out[:] = np.arange(t, dtype=np.int32)
        return out
    _kernels.sample_rank_rows(uniforms, float(phi), out)
    return out


def sample(params: MallowsParams, rng: np.random.Generator) -> Permutation:
    """Draw one exact Mallows(phi, t) permutation, consuming t uniforms from ``rng``."""
    u = rng.random((1, params.t))
    return Permutation(sample_ranks(params.phi, params.t, u)[0] + 1)


def displacement_stats(p: Permutation) -> DisplacementStats:
    per = np.abs(p.ranks - np.arange(1, p.t + 1))
    per.setflags(write=False)
    return DisplacementStats(int(per.max()), per)


def tail_bound(d: int, phi: float) -> float:
    """Ceiling 2 * phi**d on P(|pi(i) - i| >= d); may exceed 1 (vacuous)."""
    if not 0.0 < phi < 1.0:
        raise ValueError(f"tail_bound needs 0 < phi < 1, got {phi}")
    if d < 1:
        raise ValueError(f"d must be at least 1, got {d}")
    return 2.0 * phi**d


def all_permutations(t: int) -> list[Permutation]:
    """Every permutation of 1..t in lexicographic rank-vector order."""
    return [Permutation(r) for r in itertools.permutations(range(1, t + 1))]
