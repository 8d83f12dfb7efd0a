"""Random two-sided markets with Mallows preferences.

Agent ids are 0-based array indices and coincide with the central order:
man ``i`` and woman ``i`` are both the ``(i+1)``-th best on their side.
Ranks are 1-based (rank 1 = most preferred).

Seeding: each agent's uniforms come from its own Philox stream keyed by the
master seed, with the counter's two high words set to ``(agent, side)``
(side 0 = men, 1 = women). Streams are therefore disjoint and the instance
does not depend on the order in which agents are generated.
"""
from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .mallows import Permutation, sample_ranks

__all__ = [
    "Side",
    "MarketConfig",
    "PreferenceProfile",
    "MarketInstance",
    "MAX_LIST_LENGTH",
    "generate",
    "agent_stream",
    "rank_of",
    "central_rank",
    "instance_to_json",
    "instance_from_json",
]

# default cap on n + k; profiles take Theta(n * (n + k)) memory
MAX_LIST_LENGTH = 200_000
MAX_SIZE_ENV = "MALLOWMATCH_MAX_SIZE"

_SEED_MASK = (1 << 64) - 1


class Side(enum.IntEnum):
    MEN = 0
    WOMEN = 1


@dataclass(frozen=True)
class MarketConfig:
    n: int
    k: int = 0
    phi_m: float | None = 0.5
    phi_w: float | None = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        for name in ("phi_m", "phi_w"):
            phi = getattr(self, name)
            # None marks a hand-built market with no generating coefficient
            if phi is not None and not 0.0 <= phi <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {phi}")
        if not 0 <= self.seed <= _SEED_MASK:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def n_women(self) -> int:
        return self.n + self.k


class PreferenceProfile:
    """One side's complete strict rankings of the other side.

    ``orders[a, j]`` is the 0-based id that agent ``a`` ranks in place
    ``j + 1``; ``ranks`` is the row-wise inverse (0-based ranks).
    """

    def __init__(self, side: Side, orders: np.ndarray, ranks: np.ndarray | None = None):
        orders = np.ascontiguousarray(orders, dtype=np.int32)
        if orders.ndim != 2:
            raise ValueError("orders must be a 2-D array")
        if ranks is None:
            ranks = np.empty_like(orders)
            _kernels.invert_rows(orders, ranks)
        orders.setflags(write=False)
        ranks.setflags(write=False)
        self.side = Side(side)
        self.orders = orders
        self.ranks = ranks

    @classmethod
    def from_ranks(cls, side: Side, ranks: np.ndarray) -> PreferenceProfile:
        ranks = np.ascontiguousarray(ranks, dtype=np.int32)
        orders = np.empty_like(ranks)
        _kernels.invert_rows(ranks, orders)
        return cls(side, orders, ranks)

    @property
    def n_agents(self) -> int:
        return self.orders.shape[0]

    @property
    def length(self) -> int:
        return self.orders.shape[1]

    def ranking(self, agent: int) -> Permutation:
        """Agent's ranking as a 1-based rank-vector Permutation."""
        return Permutation(self.ranks[agent] + 1)

    def __len__(self) -> int:
        return self.n_agents

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PreferenceProfile):
            return NotImplemented
        return self.side == other.side and np.array_equal(self.orders, other.orders)


@dataclass(frozen=True, eq=False)
class MarketInstance:
    config: MarketConfig
    men_prefs: PreferenceProfile
    women_prefs: PreferenceProfile = field(repr=False)

    def __post_init__(self):
        n, l = self.config.n, self.config.n_women
        if self.men_prefs.orders.shape != (n, l):
            raise ValueError(f"men's profile must be {n} x {l}")
        if self.women_prefs.orders.shape != (l, n):
            raise ValueError(f"women's profile must be {l} x {n}")

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def k(self) -> int:
        return self.config.k

    @property
    def n_women(self) -> int:
        return self.config.n_women

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MarketInstance):
            return NotImplemented
        return (
            self.config == other.config
            and self.men_prefs == other.men_prefs
            and self.women_prefs == other.women_prefs
        )

    @classmethod
    def from_orders(cls, men_orders, women_orders, phi_m=None, phi_w=None, seed=0):
        """Hand-built instance from 0-based order lists (no sampling)."""
        men_orders = _checked_orders(men_orders, "men")
        women_orders = _checked_orders(women_orders, "women")
        n, l = men_orders.shape
        cfg = MarketConfig(n=n, k=l - n, phi_m=phi_m, phi_w=phi_w, seed=seed)
        men = PreferenceProfile(Side.MEN, men_orders)
        women = PreferenceProfile(Side.WOMEN, women_orders)
        return cls(cfg, men, women)


def _checked_orders(orders, label: str) -> np.ndarray:
    orders = np.asarray(orders, dtype=np.int64)
    if orders.ndim != 2 or orders.shape[0] == 0:
        raise ValueError(f"{label}: expected a non-empty 2-D array of orders")
    if not (np.sort(orders, axis=1) == np.arange(orders.shape[1])).all():
        raise ValueError(f"{label}: every row must be a complete strict order")
    return orders


def agent_stream(seed: int, side: Side, agent: int) -> np.random.Generator:
    """Independent random stream for one agent (counter-based split)."""
    bitgen = np.random.Philox(key=[seed & _SEED_MASK, 0], counter=[0, 0, agent, int(side)])
    return np.random.Generator(bitgen)


def _sample_side(seed: int, side: Side, agents: int, length: int, phi: float) -> np.ndarray:
    if phi == 0.0:
        return np.tile(np.arange(length, dtype=np.int32), (agents, 1))
    u = np.empty((agents, length))
    for a in range(agents):
        u[a] = agent_stream(seed, side, a).random(length)
    return sample_ranks(phi, length, u)


def generate(config: MarketConfig, max_length: int | None = None) -> MarketInstance:
    """Sample a market: men rank n+k women ~ Mallows(phi_m), women rank n men ~ Mallows(phi_w)."""
    if config.phi_m is None or config.phi_w is None:
        raise ValueError("generate needs both phi_m and phi_w")
    if max_length is None:
        max_length = int(os.environ.get(MAX_SIZE_ENV, MAX_LIST_LENGTH))
    if config.n_women > max_length:
        raise MemoryError(f"n + k = {config.n_women} exceeds the configured maximum {max_length}")
    men_ranks = _sample_side(config.seed, Side.MEN, config.n, config.n_women, config.phi_m)
    women_ranks = _sample_side(config.seed, Side.WOMEN, config.n_women, config.n, config.phi_w)
    return MarketInstance(
        config,
        PreferenceProfile.from_ranks(Side.MEN, men_ranks),
        PreferenceProfile.from_ranks(Side.WOMEN, women_ranks),
    )


def rank_of(profile: PreferenceProfile, agent: int, target: int) -> int:
    """1-based position of ``target`` in ``agent``'s ranking."""
    if not 0 <= agent < profile.n_agents:
        raise KeyError(f"unknown {profile.side.name.lower()} agent {agent}")
    if not 0 <= target < profile.length:
        raise KeyError(f"unknown target {target}")
    return int(profile.ranks[agent, target]) + 1


def central_rank(agent: int) -> int:
    """Rank of an agent in the central order; ids are central positions."""
    return agent + 1


def instance_to_json(instance: MarketInstance) -> str:
    """Config plus both profiles as arrays of 1-based order vectors."""
    cfg = instance.config
    doc = {
        "config": {
            "n": cfg.n,
            "k": cfg.k,
            "phi_m": cfg.phi_m,
            "phi_w": cfg.phi_w,
            "seed": cfg.seed,
        },
        "men": (instance.men_prefs.orders + 1).tolist(),
        "women": (instance.women_prefs.orders + 1).tolist(),
    }
    return json.dumps(doc)


def instance_from_json(text: str) -> MarketInstance:
    doc = json.loads(text)
    cfg = doc["config"]
    men = np.asarray(doc["men"], dtype=np.int64) - 1
    women = np.asarray(doc["women"], dtype=np.int64) - 1
    inst = MarketInstance.from_orders(
        men, women, phi_m=cfg.get("phi_m"), phi_w=cfg.get("phi_w"), seed=cfg.get("seed", 0)
    )
    if inst.n != cfg["n"] or inst.k != cfg["k"]:
        raise ValueError("profile dimensions disagree with the stored config")
    return inst
