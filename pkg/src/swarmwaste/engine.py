"""Discrete-time simulation of one or more days, with metric accumulation and snapshots."""
from __future__ import annotations

import csv
import hashlib
import heapq
import io
import json
import logging
import math
import pickle
import struct
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from random import Random
from typing import Any

from . import __version__
from .agents import (CARRY, ML_PER_LITER, RECHARGE, WANDER, Citizen, Robot, TrashBin, Truck,
                     citizen_tick, nearest_neighbor_route, robot_tick, to_ml, truck_tick)
from .scenario import Scenario, build_routing, place_deposits, shortest_path_tree
from .stigmergy import CrossroadTag, PheromoneParams

log = logging.getLogger(__name__)

MODES = ("MPF", "CPF", "TRUCK")
DAY_MINUTES = 1440.0

# (window start, window end, origin kind, destination kind), minutes after midnight
TRIP_WINDOWS = (
    (420.0, 540.0, "home", "work"),
    (720.0, 840.0, "work", "amenity"),
    (1020.0, 1140.0, "amenity", "home"),
)

SWEPT_VALUES = {
    "n_robots": (20, 35, 50),
    "evaporation_rate": (0.05, 0.15, 0.30),
    "exploitation_rate": (0.6, 0.75, 0.9),
    "carriable_waste": (6.0, 12.0, 18.0),
    "n_deposits": (2, 3, 5),
}


class ConfigError(ValueError):
    """A run configuration is invalid or incompatible with the scenario."""


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run on a given scenario.

    Speeds are in meters per minute, distances in meters, volumes in liters.
    CPF mode forces a single deposit; TRUCK mode forces zero robots.
    """

    mode: str = "MPF"
    n_robots: int = 20
    evaporation_rate: float = 0.15
    exploitation_rate: float = 0.6
    carriable_waste: float = 12.0
    n_deposits: int = 3
    waste_per_citizen: float = 8.42
    drop_radius: float = 50.0
    n_citizens: int = 10000
    pheromone_per_liter: float = 1.0
    walk_speed: float = 80.0
    robot_speed: float = 250.0
    robot_range: float = 30000.0
    safety_factor: float = 1.1
    bin_capacity: float = 125.0
    tick_seconds: float = 5.0
    days: int = 1
    seed: int = 0
    deposit_seed: int = 0
    kmeans_iters: int = 100
    avoid_backtrack: bool = True
    robot_start: str = "deposit"
    truck_rate: float = 240.0
    truck_start: float = 420.0
    truck_end: float = 720.0
    record_trace: bool = False
    check_invariants: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode={self.mode!r} must be one of {', '.join(MODES)}")
        if self.mode == "CPF":
            object.__setattr__(self, "n_deposits", 1)
        elif self.mode == "TRUCK":
            object.__setattr__(self, "n_robots", 0)
        checks = [
            ("n_robots", self.n_robots >= 0, "n_robots >= 0"),
            ("evaporation_rate", 0.0 <= self.evaporation_rate <= 1.0, "0 <= evaporation_rate <= 1"),
            ("exploitation_rate", 0.0 < self.exploitation_rate <= 1.0,
             "0 < exploitation_rate <= 1"),
            ("carriable_waste", 0.0 < self.carriable_waste <= self.bin_capacity,
             "0 < carriable_waste <= bin_capacity"),
            ("n_deposits", self.n_deposits >= 1, "n_deposits >= 1"),
            ("waste_per_citizen", 0.0 < self.waste_per_citizen <= self.bin_capacity,
             "0 < waste_per_citizen <= bin_capacity"),
            ("drop_radius", self.drop_radius >= 0.0, "drop_radius >= 0"),
            ("n_citizens", self.n_citizens >= 0, "n_citizens >= 0"),
            ("pheromone_per_liter", self.pheromone_per_liter >= 0.0, "pheromone_per_liter >= 0"),
            ("walk_speed", self.walk_speed > 0.0, "walk_speed > 0"),
            ("robot_speed", self.robot_speed > 0.0, "robot_speed > 0"),
            ("robot_range", self.robot_range > 0.0, "robot_range > 0"),
            ("safety_factor", self.safety_factor >= 1.0, "safety_factor >= 1"),
            ("bin_capacity", self.bin_capacity > 0.0, "bin_capacity > 0"),
            ("tick_seconds", self.tick_seconds > 0.0 and (86400.0 / self.tick_seconds).is_integer(),
             "tick_seconds > 0 dividing one day"),
            ("days", self.days >= 1, "days >= 1"),
            ("robot_start", self.robot_start in ("deposit", "random"),
             "robot_start in {deposit, random}"),
            ("truck_rate", self.truck_rate > 0.0, "truck_rate > 0"),
            ("truck_end", 0.0 <= self.truck_start <= self.truck_end <= DAY_MINUTES,
             "0 <= truck_start <= truck_end <= 1440"),
        ]
        for key, ok, rule in checks:
            if not ok:
                raise ConfigError(f"{key}={getattr(self, key)!r} violates {rule}")

    @property
    def params(self) -> PheromoneParams:
        return PheromoneParams(self.evaporation_rate, self.exploitation_rate,
                               self.pheromone_per_liter)

    @property
    def n_ticks(self) -> int:
        return int(round(self.days * 86400.0 / self.tick_seconds))

    def flags(self) -> list[str]:
        """Parameters lying outside the swept experimental values."""
        out = []
        if self.mode == "TRUCK":
            return out
        for key, allowed in SWEPT_VALUES.items():
            if key == "n_deposits" and self.mode == "CPF":
                continue
            if getattr(self, key) not in allowed:
                out.append(f"{key}={getattr(self, key)!r} outside swept values {allowed}")
        return out

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        kw = {}
        for k, v in data.items():
            default = known[k].default
            try:
                if isinstance(default, bool):
                    if not isinstance(v, bool):
                        raise TypeError
                elif isinstance(default, int):
                    if isinstance(v, bool) or not float(v).is_integer():
                        raise TypeError
                    v = int(v)
                elif isinstance(default, float):
                    if isinstance(v, bool):
                        raise TypeError
                    v = float(v)
                elif isinstance(default, str):
                    v = str(v)
            except (TypeError, ValueError):
                raise ConfigError(f"{k}={v!r}: expected {type(default).__name__}") from None
            kw[k] = v
        return cls(**kw)


@dataclass
class DayMetrics:
    """Time-averaged performance of one run.

    ``aut_pct`` is the mean of (liters in bins) / (bins x capacity) over all
    ticks and ``ftb_pct`` the mean fraction of bins that cannot take another
    drop; both are fractions in [0, 1].
    """

    aut_pct: float
    ftb_pct: float
    generated_l: float
    delivered_l: float
    picked_up_l: float
    truck_collected_l: float
    ticks: int
    max_mission_minutes: float = 0.0
    min_range_m: float = math.inf
    trace: list[dict] | None = field(default=None, repr=False)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("trace")
        return d

    def to_json(self, provenance: dict | None = None) -> str:
        d = self.to_dict()
        if provenance is not None:
            d = {"provenance": provenance, "metrics": d}
        return json.dumps(d, indent=1, sort_keys=True) + "\n"


TRACE_COLUMNS = ("tick", "uncollected_liters", "full_bins", "robots_wander", "robots_carry",
                 "robots_recharge", "delivered_liters")


def trace_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TRACE_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


class InvariantError(AssertionError):
    pass


class SimState:
    """Mutable state of one run.

    Also serves as the ``world`` handed to the agent tick functions.
    """

    def __init__(self, config: RunConfig, scenario: Scenario):
        self.config = config
        self.scenario = scenario
        self.tick_index = 0
        self.tick_minutes = config.tick_seconds / 60.0
        self.waste_ml = to_ml(config.waste_per_citizen)
        self.capacity_ml = to_ml(config.bin_capacity)
        self.walk_speed = config.walk_speed
        self.safety_factor = config.safety_factor
        self.full_range = config.robot_range
        self.exploitation_rate = config.exploitation_rate
        self.avoid_backtrack = config.avoid_backtrack
        self.params = config.params
        self.rng = Random(config.seed)
        self.generated_ml = 0
        self.delivered_ml = 0
        self.picked_ml = 0
        self.truck_collected_ml = 0
        self.swaps = 0
        self.max_mission = 0.0
        self.min_range = math.inf
        self.uncollected_sum = 0
        self.full_sum = 0
        self.trace: list[dict] | None = [] if config.record_trace else None
        self.bins = {s.id: TrashBin(s.id, to_ml(config.carriable_waste), self.capacity_ml)
                     for s in scenario.bins}
        self.routing = None
        self.tags: dict[int, CrossroadTag] = {}
        self.robots: list[Robot] = []
        self.citizens: list[Citizen] = []
        self.truck: Truck | None = None
        self.wakeups: list[tuple[float, int]] = []
        self._trees: dict[int, tuple[dict, dict]] = {}
        self._near: dict[int, tuple[int, ...]] | None = None
        self.bins_along: dict[tuple[int, int], tuple[tuple[float, int], ...]] = {}

    # -- helpers used by agents -------------------------------------------

    @property
    def now(self) -> float:
        return self.tick_index * self.tick_minutes

    def note_mission(self, minutes: float) -> None:
        if minutes > self.max_mission:
            self.max_mission = minutes

    def note_range(self, range_m: float) -> None:
        if range_m < self.min_range:
            self.min_range = range_m

    def path(self, src: int, dst: int) -> tuple[list[int], list[int], float]:
        """Shortest route between two crossroads as (nodes, roads, length)."""
        tree = self._trees.get(dst)
        if tree is None:
            dist, nxt, _ = shortest_path_tree(self.scenario, [(0, dst)])
            tree = self._trees[dst] = (dist, nxt)
        dist, nxt = tree
        nodes, edges = [src], []
        node = src
        while node != dst:
            e = nxt[node]
            edges.append(e)
            node = self.scenario.other_end(e, node)
            nodes.append(node)
        return nodes, edges, dist[src]

    def _near_bins(self) -> dict[int, tuple[int, ...]]:
        """Bins within the drop radius of each road segment."""
        if self._near is None:
            scen, phi = self.scenario, self.config.drop_radius
            pts = {b.id: scen.point_on_road(b.road, b.offset) for b in scen.bins}
            near = {}
            for r in scen.roads:
                (ax, ay), (bx, by) = scen.node_xy[r.a], scen.node_xy[r.b]
                dx, dy = bx - ax, by - ay
                seg2 = dx * dx + dy * dy
                hits = []
                for bid, (px, py) in pts.items():
                    t = 0.0 if seg2 == 0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / seg2))
                    qx, qy = ax + t * dx - px, ay + t * dy - py
                    if qx * qx + qy * qy <= phi * phi:
                        hits.append(bid)
                near[r.id] = tuple(sorted(hits))
            self._near = near
        return self._near

    def encounters(self, nodes: list[int], edges: list[int]) -> list[tuple[float, int]]:
        """Distance along a path at which each nearby bin first comes within the drop radius."""
        scen, phi = self.scenario, self.config.drop_radius
        phi2 = phi * phi
        found: dict[int, float] = {}
        if not edges:
            px, py = scen.node_xy[nodes[0]]
            for b in scen.bins:
                bx, by = scen.point_on_road(b.road, b.offset)
                if (bx - px) ** 2 + (by - py) ** 2 <= phi2:
                    found[b.id] = 0.0
        near = self._near_bins()
        cum = 0.0
        for i, e in enumerate(edges):
            (ax, ay), (qx, qy) = scen.node_xy[nodes[i]], scen.node_xy[nodes[i + 1]]
            dx, dy = qx - ax, qy - ay
            a = dx * dx + dy * dy
            length = scen.road_length[e]
            for bid in near[e]:
                if bid in found:
                    continue
                site = scen.bin_by_id[bid]
                bx, by = scen.point_on_road(site.road, site.offset)
                ex, ey = ax - bx, ay - by
                c = ex * ex + ey * ey - phi2
                if c <= 0.0:
                    f = 0.0
                else:
                    b = 2.0 * (dx * ex + dy * ey)
                    disc = b * b - 4.0 * a * c
                    if a == 0.0 or disc < 0.0:
                        continue
                    f = (-b - math.sqrt(disc)) / (2.0 * a)
                    if not 0.0 <= f <= 1.0:
                        continue
                found[bid] = cum + f * length
            cum += length
        return sorted((d, b) for b, d in found.items())

    # -- bookkeeping -----------------------------------------------------

    def uncollected_ml(self) -> int:
        return sum(b.loose_ml + b.packed_units * b.unit_ml for b in self.bins.values())

    def full_bins(self) -> int:
        lam = self.waste_ml
        return sum(1 for b in self.bins.values() if b.remaining_ml < lam)

    def check(self) -> None:
        """Assert the conservation identity and per-agent invariants."""
        in_bins = self.uncollected_ml()
        on_robots = sum(r.cargo_ml for r in self.robots)
        on_citizens = sum(c.carried_ml for c in self.citizens)
        rhs = in_bins + on_robots + self.delivered_ml + self.truck_collected_ml + on_citizens
        if self.generated_ml != rhs:
            raise InvariantError(
                f"tick {self.tick_index}: generated {self.generated_ml} mL != bins {in_bins} + "
                f"robots {on_robots} + delivered {self.delivered_ml} + truck "
                f"{self.truck_collected_ml} + citizens {on_citizens}")
        if self.delivered_ml + on_robots != self.picked_ml:
            raise InvariantError(f"tick {self.tick_index}: cargo discipline broken")
        for b in self.bins.values():
            if b.loose_ml < 0 or b.stored_ml > b.capacity_ml:
                raise InvariantError(f"bin {b.site} out of bounds: {b}")
            if b.packed_units < b.slots and b.loose_ml >= b.unit_ml:
                raise InvariantError(f"bin {b.site} not packed eagerly: {b}")
        for r in self.robots:
            if (r.cargo_ml > 0) != (r.state is CARRY):
                raise InvariantError(f"robot {r.id}: cargo/state mismatch ({r.state})")
            if r.range_m < 0:
                raise InvariantError(f"robot {r.id}: negative range")
        for c in self.citizens:
            if c.carried_ml not in (0, self.waste_ml):
                raise InvariantError(f"citizen {c.id}: carries {c.carried_ml} mL")
        for tag in self.tags.values():
            if any(p < 0 for p in tag.pheromone.values()):
                raise InvariantError(f"negative pheromone at crossroad {tag.crossroad}")

    def metrics(self) -> DayMetrics:
        n = self.tick_index
        n_bins = len(self.bins)
        aut = self.uncollected_sum / (n * n_bins * self.capacity_ml) if n and n_bins else 0.0
        ftb = self.full_sum / (n * n_bins) if n and n_bins else 0.0
        return DayMetrics(
            aut_pct=aut, ftb_pct=ftb,
            generated_l=self.generated_ml / ML_PER_LITER,
            delivered_l=self.delivered_ml / ML_PER_LITER,
            picked_up_l=self.picked_ml / ML_PER_LITER,
            truck_collected_l=self.truck_collected_ml / ML_PER_LITER,
            ticks=n, max_mission_minutes=self.max_mission, min_range_m=self.min_range,
            trace=self.trace)


def _draw_itineraries(state: SimState, rng: Random) -> None:
    cfg, scen = state.config, state.scenario
    if cfg.n_citizens == 0:
        return
    by_kind = {k: [b.id for b in scen.buildings if b.kind == k] for k in ("home", "work", "amenity")}
    missing = [k for k, v in by_kind.items() if not v]
    if missing:
        raise ConfigError(f"n_citizens={cfg.n_citizens} needs buildings of kind {', '.join(missing)}")
    for cid in range(cfg.n_citizens):
        home = rng.choice(by_kind["home"])
        anchors = {"home": home, "work": rng.choice(by_kind["work"]),
                   "amenity": rng.choice(by_kind["amenity"])}
        itinerary = []
        parcels = set()
        for day in range(cfg.days):
            base = day * DAY_MINUTES
            parcels.add(len(itinerary) + rng.randrange(len(TRIP_WINDOWS)))
            for lo, hi, _, dest in TRIP_WINDOWS:
                itinerary.append((base + rng.uniform(lo, hi), anchors[dest]))
        start = scen.building_by_id[home].crossroad
        state.citizens.append(Citizen(cid, start, itinerary, frozenset(parcels)))
        state.wakeups.append((itinerary[0][0], cid))
    heapq.heapify(state.wakeups)


def init(config: RunConfig, scenario: Scenario) -> SimState:
    """Build the initial state of a run.

    Deposits are placed by k-means when the scenario has none (robot modes
    only). Tags start with zero pheromone, robots at deposits (round-robin)
    with a full battery, citizens at home, bins empty.
    """
    for flag in config.flags():
        log.info("config flag: %s", flag)
    if config.mode != "TRUCK":
        if scenario.deposits is None:
            if config.n_deposits > len(scenario.crossroads):
                raise ConfigError(f"n_deposits={config.n_deposits} exceeds crossroad count "
                                  f"{len(scenario.crossroads)}")
            if config.n_deposits > len(scenario.bins):
                raise ConfigError(f"n_deposits={config.n_deposits} exceeds bin count "
                                  f"{len(scenario.bins)}")
            scenario = scenario.with_deposits(
                place_deposits(scenario, config.n_deposits, config.deposit_seed, config.kmeans_iters))
        elif len(scenario.deposits) != config.n_deposits:
            raise ConfigError(f"n_deposits={config.n_deposits} but scenario defines "
                              f"{len(scenario.deposits)} deposits")
    state = SimState(config, scenario)
    rng = state.rng
    if config.mode != "TRUCK":
        routing = build_routing(scenario)
        state.routing = routing
        state.tags = {c.id: CrossroadTag.blank(c.id, scenario.incident[c.id],
                                               routing.distance[c.id], routing.next_edge[c.id])
                      for c in scenario.crossroads}
        along: dict[tuple[int, int], list[tuple[float, int]]] = {}
        for s in scenario.bins:
            r = scenario.road_by_id[s.road]
            along.setdefault((r.id, r.a), []).append((s.offset, s.id))
            along.setdefault((r.id, r.b), []).append((r.length - s.offset, s.id))
        state.bins_along = {k: tuple(sorted(v)) for k, v in along.items()}
        depots = list(scenario.deposits.crossroads)
        nodes = sorted(scenario.node_xy)
        for i in range(config.n_robots):
            start = depots[i % len(depots)] if config.robot_start == "deposit" else rng.choice(nodes)
            state.robots.append(Robot(i, start, config.robot_range, config.robot_speed))
    else:
        state.truck = Truck(nearest_neighbor_route(scenario), config.truck_rate,
                            config.truck_start, config.truck_end)
    _draw_itineraries(state, rng)
    return state


def tick(state: SimState) -> SimState:
    """Advance one tick: citizens by id, then robots by id, then the truck."""
    state.tick_index += 1
    now = state.tick_index * state.tick_minutes
    heap = state.wakeups
    if heap and heap[0][0] <= now:
        due = []
        while heap and heap[0][0] <= now:
            due.append(heapq.heappop(heap)[1])
        due.sort()
        citizens, rng = state.citizens, state.rng
        for cid in due:
            wake = citizen_tick(citizens[cid], state, now, rng)
            if wake != math.inf:
                heapq.heappush(heap, (wake, cid))
    for r in state.robots:
        robot_tick(r, state, now, state.rng)
    if state.truck is not None:
        truck_tick(state.truck, state, now)
    unc = 0
    full = 0
    lam = state.waste_ml
    for b in state.bins.values():
        stored = b.loose_ml + b.packed_units * b.unit_ml
        unc += stored
        if b.capacity_ml - stored < lam:
            full += 1
    state.uncollected_sum += unc
    state.full_sum += full
    if state.trace is not None:
        states = [r.state for r in state.robots]
        state.trace.append({
            "tick": state.tick_index, "uncollected_liters": unc / ML_PER_LITER, "full_bins": full,
            "robots_wander": states.count(WANDER), "robots_carry": states.count(CARRY),
            "robots_recharge": states.count(RECHARGE),
            "delivered_liters": state.delivered_ml / ML_PER_LITER})
    if state.config.check_invariants:
        state.check()
    return state


def run(state: SimState, n_ticks: int | None = None) -> SimState:
    n = state.config.n_ticks - state.tick_index if n_ticks is None else n_ticks
    for _ in range(n):
        tick(state)
    return state


def run_day(config: RunConfig, scenario: Scenario) -> DayMetrics:
    """Simulate the configured span and return its time-averaged metrics."""
    return run(init(config, scenario)).metrics()


# -- snapshots -------------------------------------------------------------

SNAPSHOT_MAGIC = b"SWSNAP"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct(">6sH32s")


class SnapshotError(ValueError):
    pass


def snapshot(state: SimState) -> bytes:
    """Serialize a state.

    Layout: 6-byte magic ``SWSNAP``, big-endian uint16 format version,
    SHA-256 of the payload, then the zlib-compressed pickle of the state.
    """
    payload = zlib.compress(pickle.dumps(state, protocol=4), 6)
    return _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, hashlib.sha256(payload).digest()) + payload


def restore(data: bytes) -> SimState:
    if len(data) < _HEADER.size:
        raise SnapshotError("snapshot truncated: header incomplete")
    magic, version, digest = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotError("not a swarmwaste snapshot")
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"snapshot version {version} unsupported (expected {SNAPSHOT_VERSION})")
    payload = data[_HEADER.size:]
    if hashlib.sha256(payload).digest() != digest:
        raise SnapshotError("snapshot corrupted: checksum mismatch")
    state = pickle.loads(zlib.decompress(payload))
    if not isinstance(state, SimState):
        raise SnapshotError("snapshot does not contain a simulation state")
    return state


def provenance(config: RunConfig, scenario_source: dict) -> dict:
    return {"artifact": "swarmwaste", "version": __version__, "seed": config.seed,
            "config": config.to_dict(), "scenario": scenario_source}


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    return replace(config, **overrides)
