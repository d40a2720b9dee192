import csv
import io
import json
from fractions import Fraction

import pytest

from swarmwaste.agents import CARRY, RECHARGE
from swarmwaste.engine import (ConfigError, RunConfig, SnapshotError, init, restore, run, run_day,
                               snapshot, tick, trace_csv)
from swarmwaste.scenario import (BinSite, Building, Crossroad, Deposit, DepositSet, Road, Scenario,
                                 generate_grid)

DESK = dict(n_citizens=1000, n_robots=10)


@pytest.fixture(scope="module")
def small_grid():
    return generate_grid(8, 8, 100, 12, 60, seed=3)


class TestConfig:
    def test_bounds(self):
        with pytest.raises(ConfigError, match="0 <= evaporation_rate <= 1"):
            RunConfig(evaporation_rate=1.5)

    def test_mode_forcing(self):
        assert RunConfig(mode="CPF", n_deposits=5).n_deposits == 1
        assert RunConfig(mode="TRUCK", n_robots=20).n_robots == 0

    def test_flags(self):
        assert RunConfig().flags() == []
        assert any("n_robots" in f for f in RunConfig(n_robots=10).flags())

    def test_from_dict(self):
        cfg = RunConfig.from_dict({"n_robots": 5, "evaporation_rate": 0.3})
        assert cfg.n_robots == 5
        with pytest.raises(ConfigError, match="unknown config key"):
            RunConfig.from_dict({"robots": 5})
        with pytest.raises(ConfigError, match="expected int"):
            RunConfig.from_dict({"n_robots": 2.5})

    def test_tick_must_divide_day(self):
        with pytest.raises(ConfigError, match="tick_seconds"):
            RunConfig(tick_seconds=7.0)


class TestInit:
    def test_mpf(self, desk_grid):
        s = init(RunConfig(n_deposits=3, **DESK), desk_grid)
        assert len(s.scenario.deposits) == 3
        assert all(v == 0.0 for t in s.tags.values() for v in t.pheromone.values())
        assert {r.node for r in s.robots} == set(s.scenario.deposits.crossroads)
        assert all(b.stored_ml == 0 for b in s.bins.values())
        assert len(s.tags) == 400

    def test_deterministic(self, desk_grid):
        a = init(RunConfig(seed=4, **DESK), desk_grid)
        b = init(RunConfig(seed=4, **DESK), desk_grid)
        assert snapshot(a) == snapshot(b)

    def test_truck(self, desk_grid):
        s = init(RunConfig(mode="TRUCK", n_citizens=10), desk_grid)
        assert s.robots == []
        assert sorted(s.truck.route) == sorted(b.id for b in desk_grid.bins)

    def test_deposit_count_mismatch(self, desk_grid):
        scen = desk_grid.with_deposits(DepositSet((Deposit(0, 0),)))
        with pytest.raises(ConfigError, match="defines 1"):
            init(RunConfig(n_deposits=3), scen)

    def test_too_many_deposits(self):
        scen = generate_grid(2, 2, 100, 4, 3, seed=0)
        with pytest.raises(ConfigError, match="exceeds crossroad count"):
            init(RunConfig(n_deposits=5, n_citizens=0), scen)

    def test_citizens_need_buildings(self):
        scen = generate_grid(3, 3, 100, 4, 0, seed=0)
        with pytest.raises(ConfigError, match="buildings of kind"):
            init(RunConfig(n_citizens=3, n_deposits=2), scen)


class TestRun:
    def test_empty_world(self, small_grid):
        m = run_day(RunConfig(n_citizens=0, n_robots=0, n_deposits=2), small_grid)
        assert (m.aut_pct, m.ftb_pct) == (0.0, 0.0)

    def test_zero_citizens_with_robots(self, small_grid):
        m = run_day(RunConfig(n_citizens=0, n_robots=5, n_deposits=2), small_grid)
        assert (m.aut_pct, m.ftb_pct) == (0.0, 0.0)

    def test_truck_accumulates(self, desk_grid):
        m = run_day(RunConfig(mode="TRUCK", n_citizens=1000), desk_grid)
        assert m.aut_pct > 0
        assert 0 <= m.ftb_pct <= 1

    def test_single_drop_integrand(self):
        crossroads = (Crossroad(0, 0, 0), Crossroad(1, 100, 0))
        scen = Scenario(crossroads, (Road(0, 0, 1, 100.0),),
                        (Building(0, 0, "home"), Building(1, 1, "work"), Building(2, 1, "amenity")),
                        (BinSite(0, 0, 50.0),))
        s = init(RunConfig(n_citizens=1, n_robots=0, n_deposits=1, record_trace=True), scen)
        run(s)
        unc = [row["uncollected_liters"] for row in s.trace]
        assert set(unc) == {0.0, 8.42}
        first = unc.index(8.42)
        assert all(v == 8.42 for v in unc[first:])
        m = s.metrics()
        assert m.aut_pct == (len(unc) - first) * 8420 / (len(unc) * 125_000)

    def test_scripted_time_average(self, small_grid):
        s = init(RunConfig(n_citizens=0, n_robots=0, n_deposits=2), small_grid)
        n_bins = len(s.bins)
        exact_aut, exact_ftb = Fraction(0), Fraction(0)
        n = 2000
        for k in range(n):
            for i, b in enumerate(s.bins.values()):
                b.loose_ml = (k * 37 + i * 11) % 11_000
                b.packed_units = (k + i) % 11
            stored = [b.stored_ml for b in s.bins.values()]
            exact_aut += Fraction(sum(stored), n_bins * 125_000)
            exact_ftb += Fraction(sum(125_000 - v < 8420 for v in stored), n_bins)
            tick(s)
        m = s.metrics()
        assert abs(Fraction(m.aut_pct) - exact_aut / n) <= Fraction(1, 10**12) * (exact_aut / n)
        assert abs(Fraction(m.ftb_pct) - exact_ftb / n) <= Fraction(1, 10**12) * (exact_ftb / n)

    def test_conservation_every_tick(self, desk_grid):
        s = init(RunConfig(seed=11, check_invariants=True, **DESK), desk_grid)
        for _ in range(9000):  # past the morning trip window
            tick(s)
        assert s.generated_ml > 0 and s.picked_ml > 0

    def test_bounds_and_missions(self, desk_grid):
        m = run_day(RunConfig(seed=2, **DESK), desk_grid)
        assert 0 <= m.aut_pct <= 1 and 0 <= m.ftb_pct <= 1
        assert m.min_range_m > 0
        # longest Carry/Recharge leg: worst distance to a deposit plus one road, plus a tick
        s = init(RunConfig(seed=2, **DESK), desk_grid)
        worst = max(s.routing.distance.values()) + 100.0
        assert m.max_mission_minutes <= worst / 250.0 + s.tick_minutes

    def test_trace_columns(self, small_grid):
        s = init(RunConfig(n_citizens=50, n_robots=3, n_deposits=2, record_trace=True), small_grid)
        run(s, 300)
        rows = list(csv.DictReader(io.StringIO(trace_csv(s.trace))))
        assert len(rows) == 300
        assert list(rows[0]) == ["tick", "uncollected_liters", "full_bins", "robots_wander",
                                 "robots_carry", "robots_recharge", "delivered_liters"]
        assert all(int(r["robots_wander"]) + int(r["robots_carry"]) + int(r["robots_recharge"]) == 3
                   for r in rows)

    def test_recharge_happens_on_long_days(self, small_grid):
        s = init(RunConfig(n_citizens=50, n_robots=2, n_deposits=2, robot_range=2000.0,
                           check_invariants=True), small_grid)
        seen = set()
        for _ in range(3000):
            tick(s)
            seen.update(r.state for r in s.robots)
        assert RECHARGE in seen and s.swaps > 0

    def test_random_start(self, small_grid):
        m = run_day(RunConfig(n_citizens=60, n_robots=4, n_deposits=2, robot_start="random",
                              check_invariants=True), small_grid)
        assert 0 <= m.aut_pct <= 1


class TestDeterminism:
    def test_same_seed_same_bytes(self, small_grid):
        cfg = RunConfig(n_citizens=60, n_robots=4, n_deposits=2, seed=9)
        a, b = run(init(cfg, small_grid)), run(init(cfg, small_grid))
        assert a.metrics().to_json() == b.metrics().to_json()
        assert snapshot(a) == snapshot(b)

    def test_different_seed_differs(self, small_grid):
        a = run_day(RunConfig(n_citizens=60, n_robots=4, n_deposits=2, seed=1), small_grid)
        b = run_day(RunConfig(n_citizens=60, n_robots=4, n_deposits=2, seed=2), small_grid)
        assert a.to_json() != b.to_json()


class TestSnapshot:
    cfg = RunConfig(n_citizens=80, n_robots=4, n_deposits=2, seed=5)

    def test_tick_zero(self, small_grid):
        s = init(self.cfg, small_grid)
        r = restore(snapshot(s))
        run(s, 100)
        run(r, 100)
        assert snapshot(s) == snapshot(r)

    def test_mid_day(self, small_grid):
        direct = run(init(self.cfg, small_grid)).metrics()
        s = init(self.cfg, small_grid)
        run(s, 9000)
        resumed = run(restore(snapshot(s))).metrics()
        assert resumed.to_json() == direct.to_json()

    def test_truncated(self, small_grid):
        data = snapshot(init(self.cfg, small_grid))
        with pytest.raises(SnapshotError, match="corrupted"):
            restore(data[:-10])
        with pytest.raises(SnapshotError, match="truncated"):
            restore(data[:5])

    def test_version(self, small_grid):
        data = bytearray(snapshot(init(self.cfg, small_grid)))
        data[7] = 99
        with pytest.raises(SnapshotError, match="version"):
            restore(bytes(data))
