"""Behavioral models: citizens, trash bins, robots and the truck baseline.

Waste volumes are held as integer milliliters so that the conservation
identity can be asserted exactly; public helpers accept and report liters.

The ``world`` argument of the tick functions is the engine's simulation
state. The attributes read from it are: ``scenario``, ``routing``,
``tags``, ``bins``, ``params``, ``config``-derived scalars
(``tick_minutes``, ``waste_ml``, ``walk_speed``, ``safety_factor``,
``full_range``, ``exploitation_rate``, ``avoid_backtrack``) and the
bookkeeping counters it owns.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from random import Random

from .stigmergy import ArrivalContext, max_pheromone, select_edge, update_tag

ML_PER_LITER = 1000


def to_ml(liters: float) -> int:
    return int(round(liters * ML_PER_LITER))


class StrandedError(RuntimeError):
    """A robot ran out of range away from a deposit."""


# -- trash bins ------------------------------------------------------------

@dataclass(slots=True)
class TrashBin:
    site: int
    unit_ml: int
    capacity_ml: int = 125 * ML_PER_LITER
    loose_ml: int = 0
    packed_units: int = 0

    @classmethod
    def empty(cls, site: int, unit_size: float, capacity: float = 125.0) -> "TrashBin":
        unit_ml, capacity_ml = to_ml(unit_size), to_ml(capacity)
        if unit_ml <= 0 or unit_ml > capacity_ml:
            raise ValueError(f"unit size {unit_size} L must be in (0, capacity]")
        return cls(site, unit_ml, capacity_ml)

    @property
    def slots(self) -> int:
        return self.capacity_ml // self.unit_ml

    @property
    def stored_ml(self) -> int:
        return self.loose_ml + self.packed_units * self.unit_ml

    @property
    def remaining_ml(self) -> int:
        return self.capacity_ml - self.loose_ml - self.packed_units * self.unit_ml

    @property
    def loose(self) -> float:
        return self.loose_ml / ML_PER_LITER

    @property
    def stored(self) -> float:
        return self.stored_ml / ML_PER_LITER

    @property
    def unit_size(self) -> float:
        return self.unit_ml / ML_PER_LITER

    @property
    def capacity(self) -> float:
        return self.capacity_ml / ML_PER_LITER


def absorb_ml(b: TrashBin, ml: int) -> TrashBin:
    if ml < 0:
        raise ValueError("cannot absorb a negative volume")
    if ml > b.remaining_ml:
        raise ValueError(f"bin {b.site}: deposit of {ml} mL exceeds remaining {b.remaining_ml} mL")
    b.loose_ml += ml
    slots = b.capacity_ml // b.unit_ml
    while b.loose_ml >= b.unit_ml and b.packed_units < slots:
        b.loose_ml -= b.unit_ml
        b.packed_units += 1
    return b


def bin_absorb(b: TrashBin, liters: float) -> TrashBin:
    """Drop ``liters`` into the bin and pack whole units eagerly."""
    return absorb_ml(b, to_ml(liters))


def bin_is_full(b: TrashBin, waste_per_drop: float) -> bool:
    """True when the bin cannot take another drop of ``waste_per_drop`` liters."""
    return b.remaining_ml < to_ml(waste_per_drop)


# -- citizens --------------------------------------------------------------

@dataclass(slots=True)
class Citizen:
    id: int
    crossroad: int
    itinerary: list[tuple[float, int]]
    parcel_trips: frozenset[int] = frozenset()
    carried_ml: int = 0
    trip: int = 0
    depart: float | None = None
    path: list[int] = field(default_factory=list)
    total: float = 0.0
    encounters: list[tuple[float, int]] = field(default_factory=list)
    next_encounter: int = 0

    @property
    def traveling(self) -> bool:
        return self.depart is not None

    @property
    def carried(self) -> float:
        return self.carried_ml / ML_PER_LITER


def citizen_tick(c: Citizen, world, now: float, rng: Random | None = None) -> float:
    """Advance one citizen to time ``now``.

    Starts a due trip, drops the carried parcel into the first bin passed
    within the drop radius that can still take it, and completes the trip on
    arrival. Returns the next time the citizen needs attention (``inf`` when
    the itinerary is exhausted).
    """
    if c.depart is None:
        if c.trip >= len(c.itinerary) or c.itinerary[c.trip][0] > now:
            return c.itinerary[c.trip][0] if c.trip < len(c.itinerary) else math.inf
        _start_trip(c, world)
    walk = world.walk_speed
    traveled = walk * (now - c.depart)
    if c.carried_ml:
        enc = c.encounters
        while c.next_encounter < len(enc) and enc[c.next_encounter][0] <= traveled:
            b = world.bins[enc[c.next_encounter][1]]
            c.next_encounter += 1
            if b.remaining_ml >= c.carried_ml:
                absorb_ml(b, c.carried_ml)
                c.carried_ml = 0
                break
    if traveled >= c.total:
        c.crossroad = c.path[-1]
        c.depart = None
        c.path = []
        c.encounters = []
        c.next_encounter = 0
        c.trip += 1
        return c.itinerary[c.trip][0] if c.trip < len(c.itinerary) else math.inf
    arrive = c.depart + c.total / walk
    if c.carried_ml and c.next_encounter < len(c.encounters):
        return min(arrive, c.depart + c.encounters[c.next_encounter][0] / walk)
    return arrive


def _start_trip(c: Citizen, world) -> None:
    depart, building = c.itinerary[c.trip]
    dest = world.scenario.building_by_id[building].crossroad
    if c.trip in c.parcel_trips and not c.carried_ml:
        c.carried_ml = world.waste_ml
        world.generated_ml += world.waste_ml
    c.path, edges, c.total = world.path(c.crossroad, dest)
    c.depart = depart
    c.next_encounter = 0
    c.encounters = world.encounters(c.path, edges) if c.carried_ml else []


# -- robots ----------------------------------------------------------------

class RobotState(str, enum.Enum):
    WANDER = "Wander"
    CARRY = "Carry"
    RECHARGE = "Recharge"


WANDER, CARRY, RECHARGE = RobotState.WANDER, RobotState.CARRY, RobotState.RECHARGE


@dataclass(slots=True)
class Robot:
    id: int
    node: int
    range_m: float
    speed: float
    state: RobotState = WANDER
    edge: int | None = None
    origin: int | None = None
    pos: float = 0.0
    came_from: int | None = None
    cargo_ml: int = 0
    waste_found: float = 0.0
    last_max: float = 0.0
    low_battery: bool = False
    mission_start: float = 0.0

    @property
    def cargo(self) -> tuple[float, float] | None:
        if not self.cargo_ml:
            return None
        return self.cargo_ml / ML_PER_LITER, self.waste_found


def robot_tick(robot: Robot, world, now: float, rng: Random) -> None:
    """Move a robot for one tick and run its state machine at every event.

    Wander robots pick up a packed unit when they pass a bin that holds one,
    then Carry it along the routing table to the nearest deposit, marking
    each crossroad on the way. Recharge robots follow the same table and get
    a fresh battery at the deposit. The range check runs at every crossroad.
    """
    budget = robot.speed * world.tick_minutes
    lengths = world.scenario.road_length
    while budget > 0.0:
        if robot.edge is None and not _depart(robot, world, now, rng):
            return
        length = lengths[robot.edge]
        remaining = length - robot.pos
        arrive = budget >= remaining
        step = remaining if arrive else budget
        if robot.state is WANDER:
            sites = world.bins_along.get((robot.edge, robot.origin))
            if sites:
                lo, hi = robot.pos, robot.pos + step
                for at, site in sites:
                    if (lo < at or (lo == 0.0 and at == 0.0)) and at <= hi:
                        if _pickup(robot, world.bins[site], world, now):
                            break
        robot.range_m -= step
        budget -= step
        if arrive:
            _arrive(robot, world, now)
        else:
            robot.pos += step
            if robot.range_m <= 0.0:
                raise StrandedError(f"robot {robot.id} stranded on road {robot.edge}")


def _pickup(robot: Robot, b: TrashBin, world, now: float) -> bool:
    if b.packed_units < 1:
        return False
    found = b.loose_ml + b.packed_units * b.unit_ml
    b.packed_units -= 1
    absorb_ml(b, 0)
    robot.cargo_ml = b.unit_ml
    robot.waste_found = found / ML_PER_LITER
    robot.state = CARRY
    robot.mission_start = now
    world.picked_ml += b.unit_ml
    return True


def _arrive(robot: Robot, world, now: float) -> None:
    node = world.scenario.other_end(robot.edge, robot.origin)
    via = robot.edge
    tag = world.tags[node]
    carrying = robot.state is CARRY
    update_tag(tag, ArrivalContext(via, now, carrying, robot.waste_found if carrying else 0.0,
                                   robot.last_max), world.params)
    robot.last_max = max_pheromone(tag)
    robot.node, robot.came_from = node, via
    robot.edge, robot.origin, robot.pos = None, None, 0.0
    dist = world.routing.distance[node]
    if dist == 0.0:
        if robot.state is CARRY:
            world.delivered_ml += robot.cargo_ml
            robot.cargo_ml, robot.waste_found = 0, 0.0
            robot.state = WANDER
            world.note_mission(now - robot.mission_start)
            if robot.low_battery:
                _swap(robot, world)
        elif robot.state is RECHARGE:
            _swap(robot, world)
            robot.state = WANDER
            world.note_mission(now - robot.mission_start)
        return
    if robot.range_m < dist - 1e-6 or robot.range_m <= 0.0:
        raise StrandedError(
            f"robot {robot.id} at crossroad {node} has {robot.range_m:.3f} m for {dist:.3f} m")
    world.note_range(robot.range_m)
    if robot.range_m <= world.safety_factor * dist:
        if robot.state is CARRY:
            robot.low_battery = True
        elif robot.state is WANDER:
            robot.state = RECHARGE
            robot.mission_start = now


def _swap(robot: Robot, world) -> None:
    robot.range_m = world.full_range
    robot.low_battery = False
    world.swaps += 1


def _depart(robot: Robot, world, now: float, rng: Random) -> bool:
    node = robot.node
    scen = world.scenario
    if robot.state is WANDER:
        if not scen.incident[node]:
            return False
        e = select_edge(world.tags[node], robot.came_from, world.exploitation_rate, rng,
                        world.avoid_backtrack)
        ahead = world.routing.distance[scen.other_end(e, node)]
        if robot.range_m - scen.road_length[e] < ahead:
            # the chosen road would leave too little range to reach a deposit
            if world.routing.distance[node] == 0.0:
                _swap(robot, world)
            else:
                robot.state = RECHARGE
                robot.mission_start = now
                e = world.routing.next_edge[node]
    else:
        e = world.routing.next_edge[node]
    robot.edge, robot.origin, robot.pos = e, node, 0.0
    return True


# -- truck -----------------------------------------------------------------

@dataclass(slots=True)
class Truck:
    route: tuple[int, ...]
    rate_per_hour: float = 240.0
    window_start: float = 420.0
    window_end: float = 720.0
    day: int = 0
    served: int = 0
    log: list[tuple[float, int]] = field(default_factory=list)

    @property
    def interval(self) -> float:
        return 60.0 / self.rate_per_hour

    def due(self) -> float:
        """Time of the next scheduled service, or ``inf`` if none remains today."""
        if self.served >= len(self.route):
            return math.inf
        t = self.window_start + (self.served + 1) * self.interval
        return self.day * 1440.0 + t if t <= self.window_end else math.inf


def truck_tick(truck: Truck, world, now: float) -> None:
    """Empty every bin whose scheduled service time has been reached."""
    day = int(now // 1440.0)
    if day > truck.day:
        truck.day, truck.served = day, 0
    while truck.due() <= now:
        site = truck.route[truck.served]
        b = world.bins[site]
        world.truck_collected_ml += b.stored_ml
        b.loose_ml, b.packed_units = 0, 0
        truck.served += 1
        truck.log.append((now, site))


def nearest_neighbor_route(scenario) -> tuple[int, ...]:
    """Greedy tour over bin positions starting at the lowest bin id."""
    if not scenario.bins:
        return ()
    ids = [b.id for b in scenario.bins]
    xy = scenario.bin_positions()
    order = sorted(range(len(ids)), key=ids.__getitem__)
    left = set(order[1:])
    tour = [order[0]]
    while left:
        cx, cy = xy[tour[-1]]
        nxt = min(left, key=lambda i: ((xy[i, 0] - cx) ** 2 + (xy[i, 1] - cy) ** 2, ids[i]))
        left.remove(nxt)
        tour.append(nxt)
    return tuple(ids[i] for i in tour)
