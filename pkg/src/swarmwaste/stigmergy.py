"""Crossroad tags and the pheromone processes robots apply to them.

Each tag stores one pheromone amount per incident road. When a robot
arrives at a crossroad it evaporates every amount linearly with the time
since the tag's last operation (clamping at zero), then reinforces the road
it arrived on with a share of the strongest amount it saw on the previous
tag (diffusion) and, if it carries waste, with an amount proportional to
the waste it found in the source bin (marking).
"""
from __future__ import annotations

from dataclasses import dataclass
from random import Random
from typing import Iterable


@dataclass(frozen=True)
class PheromoneParams:
    """Rates for evaporation, exploitation and marking.

    ``evaporation_rate`` is in amount per pheromone unit per minute,
    ``pheromone_per_liter`` is the marking gain per liter of waste found.
    The diffusion share is always ``1 - exploitation_rate``.
    """

    evaporation_rate: float
    exploitation_rate: float
    pheromone_per_liter: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.evaporation_rate <= 1.0:
            raise ValueError(
                f"evaporation_rate={self.evaporation_rate} outside 0 <= evaporation_rate <= 1")
        if not 0.0 < self.exploitation_rate <= 1.0:
            raise ValueError(
                f"exploitation_rate={self.exploitation_rate} outside 0 < exploitation_rate <= 1")
        if not self.pheromone_per_liter >= 0.0:
            raise ValueError("pheromone_per_liter must be non-negative")

    @property
    def diffusion_rate(self) -> float:
        return 1.0 - self.exploitation_rate


@dataclass(slots=True)
class CrossroadTag:
    crossroad: int
    pheromone: dict[int, float]
    ts: float = 0.0
    deposit_distance: float = 0.0
    next_edge: int | None = None

    @classmethod
    def blank(cls, crossroad: int, edges: Iterable[int], deposit_distance: float = 0.0,
              next_edge: int | None = None) -> "CrossroadTag":
        return cls(crossroad, {e: 0.0 for e in sorted(edges)}, 0.0, deposit_distance, next_edge)


@dataclass(slots=True)
class ArrivalContext:
    arrival_edge: int
    now: float
    carrying: bool = False
    waste_found: float = 0.0
    last_max: float = 0.0


def update_tag(tag: CrossroadTag, ctx: ArrivalContext, params: PheromoneParams) -> CrossroadTag:
    """Apply one robot interaction to ``tag`` in place and return it."""
    pher = tag.pheromone
    if ctx.arrival_edge not in pher:
        raise ValueError(f"road {ctx.arrival_edge} is not incident to crossroad {tag.crossroad}")
    elapsed = ctx.now - tag.ts
    if elapsed < 0:
        raise ValueError(f"time regression at crossroad {tag.crossroad}: {ctx.now} < {tag.ts}")
    if ctx.carrying and ctx.waste_found < 0:
        raise ValueError("waste_found must be non-negative")
    if ctx.last_max < 0:
        raise ValueError("last_max must be non-negative")
    decay = params.evaporation_rate * params.pheromone_per_liter * elapsed
    if decay:
        for e, p in pher.items():
            p = p - decay
            pher[e] = p if p > 0.0 else 0.0
    p = pher[ctx.arrival_edge]
    if ctx.carrying:
        p = p + params.pheromone_per_liter * ctx.waste_found
    p = p + params.diffusion_rate * ctx.last_max
    pher[ctx.arrival_edge] = p
    tag.ts = ctx.now
    return tag


def max_pheromone(tag: CrossroadTag) -> float:
    return max(tag.pheromone.values(), default=0.0)


def select_edge(tag: CrossroadTag, came_from: int | None, exploitation_rate: float,
                rng: Random, avoid_backtrack: bool = True) -> int:
    """Pick the next road out of a crossroad.

    With probability ``exploitation_rate`` the strongest road is taken,
    provided the candidate amounts are not all equal; ties among the
    strongest are broken uniformly. Otherwise a uniformly random candidate
    is returned. The arrival road is excluded unless it is the only road
    (or ``avoid_backtrack`` is off).
    """
    pher = tag.pheromone
    if not pher:
        raise ValueError(f"crossroad {tag.crossroad} has no roads")
    edges = list(pher)
    if len(edges) == 1:
        return edges[0]
    if avoid_backtrack and came_from in pher:
        cands = [e for e in edges if e != came_from]
    else:
        cands = edges
    u = rng.random()
    if u < exploitation_rate:
        amounts = [pher[e] for e in cands]
        top = max(amounts)
        if top != min(amounts):
            best = [e for e in cands if pher[e] == top]
            return best[0] if len(best) == 1 else rng.choice(best)
    return cands[0] if len(cands) == 1 else rng.choice(cands)
