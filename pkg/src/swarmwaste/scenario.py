"""World model: road graph, buildings, bins, deposits and nearest-deposit routing.

A :class:`Scenario` is immutable once built. Deposits are optional at load
time; :func:`place_deposits` clusters bin positions with Lloyd's k-means and
snaps the centroids to crossroads, and :func:`build_routing` turns a deposit
set into a per-crossroad table of distance and next hop.
"""
from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import jsonschema
import numpy as np

BUILDING_KINDS = ("home", "work", "amenity")


class ScenarioError(ValueError):
    """A scenario violates one of its structural invariants."""


class ScenarioParseError(ScenarioError):
    """A scenario file could not be parsed or does not match the schema."""


@dataclass(frozen=True)
class Crossroad:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Road:
    id: int
    a: int
    b: int
    length: float


@dataclass(frozen=True)
class Building:
    id: int
    crossroad: int
    kind: str


@dataclass(frozen=True)
class BinSite:
    id: int
    road: int
    offset: float


@dataclass(frozen=True)
class Deposit:
    id: int
    crossroad: int


@dataclass(frozen=True)
class DepositSet:
    deposits: tuple[Deposit, ...]

    def __post_init__(self):
        object.__setattr__(self, "deposits", tuple(self.deposits))
        nodes = [d.crossroad for d in self.deposits]
        if len(set(nodes)) != len(nodes):
            raise ScenarioError("deposit crossroads must be distinct")
        ids = [d.id for d in self.deposits]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate deposit id")

    def __iter__(self) -> Iterator[Deposit]:
        return iter(self.deposits)

    def __len__(self) -> int:
        return len(self.deposits)

    @property
    def crossroads(self) -> tuple[int, ...]:
        return tuple(d.crossroad for d in self.deposits)


def _unique_ids(records, section):
    seen = set()
    for r in records:
        if r.id < 0:
            raise ScenarioError(f"{section}: negative id {r.id}")
        if r.id in seen:
            raise ScenarioError(f"{section}: duplicate id {r.id}")
        seen.add(r.id)


@dataclass(frozen=True)
class Scenario:
    """Immutable road network with buildings, bin sites and (optionally) deposits.

    Construction validates every invariant: unique ids, known endpoints,
    positive road lengths, no self-loops, bin offsets within their road and a
    connected graph. Derived lookups are cached on first access.
    """

    crossroads: tuple[Crossroad, ...]
    roads: tuple[Road, ...]
    buildings: tuple[Building, ...] = ()
    bins: tuple[BinSite, ...] = ()
    deposits: DepositSet | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        for attr in ("crossroads", "roads", "buildings", "bins"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        self._validate()

    def _validate(self):
        if not self.crossroads:
            raise ScenarioError("scenario has no crossroads")
        for section, records in (("crossroads", self.crossroads), ("roads", self.roads),
                                 ("buildings", self.buildings), ("bins", self.bins)):
            _unique_ids(records, section)
        for c in self.crossroads:
            if not (math.isfinite(c.x) and math.isfinite(c.y)):
                raise ScenarioError(f"crossroad {c.id}: non-finite position")
        nodes = self.node_xy
        for r in self.roads:
            if r.a not in nodes or r.b not in nodes:
                missing = r.a if r.a not in nodes else r.b
                raise ScenarioError(f"road {r.id}: unknown endpoint {missing}")
            if r.a == r.b:
                raise ScenarioError(f"road {r.id}: self-loop at crossroad {r.a}")
            if not (math.isfinite(r.length) and r.length > 0):
                raise ScenarioError(f"road {r.id}: non-positive length {r.length}")
        for b in self.buildings:
            if b.crossroad not in nodes:
                raise ScenarioError(f"building {b.id}: unknown crossroad {b.crossroad}")
            if b.kind not in BUILDING_KINDS:
                raise ScenarioError(f"building {b.id}: unknown kind {b.kind!r}")
        roads = self.road_by_id
        for s in self.bins:
            if s.road not in roads:
                raise ScenarioError(f"bin {s.id}: unknown road {s.road}")
            if not (0.0 <= s.offset <= roads[s.road].length):
                raise ScenarioError(
                    f"bin {s.id}: offset exceeds length ({s.offset} > {roads[s.road].length})"
                    if s.offset > 0 else f"bin {s.id}: negative offset {s.offset}")
        if self.deposits is not None:
            for d in self.deposits:
                if d.crossroad not in nodes:
                    raise ScenarioError(f"deposit {d.id}: unknown crossroad {d.crossroad}")
        self._check_connected()

    def _check_connected(self):
        start = self.crossroads[0].id
        seen = {start}
        queue = deque([start])
        incident = self.incident
        while queue:
            u = queue.popleft()
            for e in incident[u]:
                v = self.other_end(e, u)
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        if len(seen) != len(self.crossroads):
            lost = min(c.id for c in self.crossroads if c.id not in seen)
            raise ScenarioError(
                f"disconnected graph: crossroad {lost} unreachable from crossroad {start}")

    # -- derived lookups -------------------------------------------------

    @cached_property
    def node_xy(self) -> dict[int, tuple[float, float]]:
        return {c.id: (c.x, c.y) for c in self.crossroads}

    @cached_property
    def road_by_id(self) -> dict[int, Road]:
        return {r.id: r for r in self.roads}

    @cached_property
    def road_length(self) -> dict[int, float]:
        return {r.id: r.length for r in self.roads}

    @cached_property
    def incident(self) -> dict[int, tuple[int, ...]]:
        """Incident road ids per crossroad, ascending."""
        inc: dict[int, list[int]] = {c.id: [] for c in self.crossroads}
        for r in self.roads:
            inc[r.a].append(r.id)
            inc[r.b].append(r.id)
        return {k: tuple(sorted(v)) for k, v in inc.items()}

    @cached_property
    def bin_by_id(self) -> dict[int, BinSite]:
        return {b.id: b for b in self.bins}

    @cached_property
    def building_by_id(self) -> dict[int, Building]:
        return {b.id: b for b in self.buildings}

    def other_end(self, road_id: int, node: int) -> int:
        r = self.road_by_id[road_id]
        return r.b if r.a == node else r.a

    def point_on_road(self, road_id: int, offset: float) -> tuple[float, float]:
        r = self.road_by_id[road_id]
        ax, ay = self.node_xy[r.a]
        bx, by = self.node_xy[r.b]
        f = offset / r.length
        return ax + f * (bx - ax), ay + f * (by - ay)

    def bin_positions(self) -> np.ndarray:
        """``(n_bins, 2)`` array of bin coordinates, in ``self.bins`` order."""
        if not self.bins:
            return np.zeros((0, 2))
        return np.array([self.point_on_road(b.road, b.offset) for b in self.bins], dtype=float)

    def with_deposits(self, deposits: DepositSet | None) -> "Scenario":
        return replace(self, deposits=deposits)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "crossroads": [{"id": c.id, "x": c.x, "y": c.y} for c in self.crossroads],
            "roads": [{"id": r.id, "a": r.a, "b": r.b, "length": r.length} for r in self.roads],
            "buildings": [{"id": b.id, "crossroad": b.crossroad, "kind": b.kind}
                          for b in self.buildings],
            "bins": [{"id": b.id, "road": b.road, "offset": b.offset} for b in self.bins],
        }
        if self.deposits is not None:
            d["deposits"] = [{"id": p.id, "crossroad": p.crossroad} for p in self.deposits]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping, name: str = "") -> "Scenario":
        try:
            jsonschema.validate(data, scenario_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ScenarioParseError(f"schema error at {where}: {exc.message}") from None
        xy = {c["id"]: (float(c["x"]), float(c["y"])) for c in data["crossroads"]}
        roads = []
        for r in data["roads"]:
            length = r.get("length")
            if length is None and r["a"] in xy and r["b"] in xy:
                (ax, ay), (bx, by) = xy[r["a"]], xy[r["b"]]
                length = math.hypot(bx - ax, by - ay)
            roads.append(Road(r["id"], r["a"], r["b"], float(length if length is not None else 0.0)))
        deposits = None
        if "deposits" in data:
            deposits = DepositSet(tuple(Deposit(d["id"], d["crossroad"]) for d in data["deposits"]))
        return cls(
            crossroads=tuple(Crossroad(c["id"], float(c["x"]), float(c["y"]))
                             for c in data["crossroads"]),
            roads=tuple(roads),
            buildings=tuple(Building(b["id"], b["crossroad"], b["kind"])
                            for b in data.get("buildings", [])),
            bins=tuple(BinSite(b["id"], b["road"], float(b["offset"])) for b in data.get("bins", [])),
            deposits=deposits,
            name=name,
        )


def scenario_schema() -> dict:
    text = resources.files("swarmwaste").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a JSON scenario file.

    The routing table is not built here; deposits may be absent.

    Raises
    ------
    ScenarioParseError
        Malformed JSON (with line/column) or a schema violation (with the
        offending field path).
    ScenarioError
        A structural invariant is violated.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return Scenario.from_dict(data, name=str(path))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(scenario.to_json())


def generate_grid(rows: int, cols: int, edge_len: float, n_bins: int,
                  n_buildings: int, seed: int) -> Scenario:
    """Rectangular lattice scenario.

    Crossroad ``r * cols + c`` sits at ``(c * edge_len, r * edge_len)``.
    Horizontal roads are numbered first, then vertical ones. Bins go at the
    midpoint of ``n_bins`` distinct roads drawn from a seeded generator;
    buildings are anchored at random crossroads with kinds assigned
    round-robin (home, work, amenity).
    """
    if rows < 2 or cols < 2:
        raise ValueError(f"grid needs rows, cols >= 2 (got {rows}x{cols})")
    if not edge_len > 0:
        raise ValueError(f"edge_len must be positive (got {edge_len})")
    n_edges = rows * (cols - 1) + cols * (rows - 1)
    if n_bins < 0 or n_bins > n_edges:
        raise ValueError(f"n_bins={n_bins} but only {n_edges} edges exist")
    if n_buildings < 0:
        raise ValueError("n_buildings must be non-negative")
    edge_len = float(edge_len)
    crossroads = [Crossroad(r * cols + c, c * edge_len, r * edge_len)
                  for r in range(rows) for c in range(cols)]
    roads = []
    for r in range(rows):
        for c in range(cols - 1):
            roads.append(Road(len(roads), r * cols + c, r * cols + c + 1, edge_len))
    for r in range(rows - 1):
        for c in range(cols):
            roads.append(Road(len(roads), r * cols + c, (r + 1) * cols + c, edge_len))
    rng = np.random.default_rng(seed)
    chosen = sorted(int(e) for e in rng.choice(n_edges, size=n_bins, replace=False))
    bins = [BinSite(i, e, edge_len / 2) for i, e in enumerate(chosen)]
    anchors = rng.integers(0, rows * cols, size=n_buildings)
    buildings = [Building(i, int(a), BUILDING_KINDS[i % 3]) for i, a in enumerate(anchors)]
    return Scenario(tuple(crossroads), tuple(roads), tuple(buildings), tuple(bins),
                    name=f"grid-{rows}x{cols}-{edge_len:g}m-seed{seed}")


# -- deposit placement -----------------------------------------------------

def kmeans(points: np.ndarray, k: int, seed: int, max_iters: int = 100):
    """Lloyd's algorithm in the plane.

    Initial centroids are ``k`` distinct points picked by a seeded generator.
    A cluster that empties is reseeded with the point lying farthest from its
    own centroid. Returns ``(centroids, labels, converged)``.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    rng = np.random.default_rng(seed)
    centroids = points[rng.choice(n, size=k, replace=False)].copy()
    labels = np.full(n, -1)
    for _ in range(max_iters):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new = d2.argmin(axis=1)
        if np.array_equal(new, labels):
            return centroids, labels, True
        labels = new
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = points[members].mean(axis=0)
        for j in range(k):
            if not (labels == j).any():
                own = ((points - centroids[labels]) ** 2).sum(axis=1)
                far = int(own.argmax())
                labels[far] = j
                centroids[j] = points[far]
    return centroids, labels, False


def place_deposits(scenario: Scenario, k: int, seed: int = 0, max_iters: int = 100) -> DepositSet:
    """Cluster bin positions into ``k`` groups and snap each centroid to a crossroad.

    Snapping takes the nearest crossroad (smallest id on ties); a centroid
    whose nearest crossroad is already taken moves to the next nearest
    unused one.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1 (got {k})")
    if k > len(scenario.bins):
        raise ValueError(f"k={k} exceeds bin count {len(scenario.bins)}")
    if k > len(scenario.crossroads):
        raise ValueError(f"k={k} exceeds crossroad count {len(scenario.crossroads)}")
    centroids, _, _ = kmeans(scenario.bin_positions(), k, seed, max_iters)
    ids = np.array([c.id for c in scenario.crossroads])
    xy = np.array([(c.x, c.y) for c in scenario.crossroads])
    used: set[int] = set()
    deposits = []
    for j, (cx, cy) in enumerate(centroids):
        d2 = (xy[:, 0] - cx) ** 2 + (xy[:, 1] - cy) ** 2
        for idx in np.lexsort((ids, d2)):
            node = int(ids[idx])
            if node not in used:
                used.add(node)
                deposits.append(Deposit(j, node))
                break
    return DepositSet(tuple(deposits))


# -- routing ---------------------------------------------------------------

def shortest_path_tree(scenario: Scenario, sources: Iterable[tuple[int, int]]):
    """Multi-source Dijkstra toward the sources.

    ``sources`` holds ``(label, crossroad)`` pairs. Every crossroad gets the
    distance to its nearest source, the label of that source (smallest label
    on ties) and the first road to take toward it (smallest road id on ties).

    Returns ``(distance, next_edge, label)`` dicts keyed by crossroad.
    """
    inf = math.inf
    dist: dict[int, float] = {c.id: inf for c in scenario.crossroads}
    label: dict[int, int | None] = {c.id: None for c in scenario.crossroads}
    nxt: dict[int, int | None] = {c.id: None for c in scenario.crossroads}
    heap = []
    for lab, node in sources:
        if (0.0, lab) < (dist[node], label[node] if label[node] is not None else inf):
            dist[node], label[node] = 0.0, lab
    for node, d in dist.items():
        if d == 0.0:
            heapq.heappush(heap, (0.0, label[node], node))
    done = set()
    incident, lengths, road = scenario.incident, scenario.road_length, scenario.road_by_id
    while heap:
        d, lab, u = heapq.heappop(heap)
        if u in done or d != dist[u] or lab != label[u]:
            continue
        done.add(u)
        for e in incident[u]:
            r = road[e]
            v = r.b if r.a == u else r.a
            if v in done:
                continue
            cand = d + lengths[e]
            cur = dist[v]
            if cand < cur or (cand == cur and lab < label[v]):
                dist[v], label[v], nxt[v] = cand, lab, e
                heapq.heappush(heap, (cand, lab, v))
            elif cand == cur and lab == label[v] and e < nxt[v]:
                nxt[v] = e
    return dist, nxt, label


@dataclass(frozen=True)
class RoutingTable:
    distance: Mapping[int, float]
    next_edge: Mapping[int, int | None]
    nearest: Mapping[int, int]

    def walk(self, scenario: Scenario, node: int) -> list[int]:
        """Crossroads visited by following next hops from ``node`` to a deposit."""
        path = [node]
        while self.next_edge[node] is not None:
            node = scenario.other_end(self.next_edge[node], node)
            path.append(node)
        return path


def build_routing(scenario: Scenario, deposits: DepositSet | Sequence[Deposit] | None = None) -> RoutingTable:
    deposits = scenario.deposits if deposits is None else deposits
    if not deposits:
        raise ValueError("routing needs at least one deposit")
    for d in deposits:
        if d.crossroad not in scenario.node_xy:
            raise ValueError(f"deposit {d.id}: unknown crossroad {d.crossroad}")
    dist, nxt, label = shortest_path_tree(scenario, ((d.id, d.crossroad) for d in deposits))
    return RoutingTable(dist, nxt, label)
