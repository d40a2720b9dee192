"""
Simulating one day of robot collection
======================================

Citizens walk their daily trips and drop waste in nearby bins; ten robots
wander on pheromone, carry waste home and recharge at deposits.
"""

from swarmwaste.engine import RunConfig, init, run, trace_csv
from swarmwaste.scenario import generate_grid

city = generate_grid(20, 20, 100.0, 50, 1000, seed=7)
config = RunConfig(mode="MPF", n_robots=10, n_citizens=1000, seed=1, record_trace=True)

# run the morning first, then the rest of the day
state = init(config, city)
run(state, n_ticks=12 * 720)
print(f"noon: {state.uncollected_ml() / 1000:.1f} L waiting in bins, {state.full_bins()} full bins")
run(state)

m = state.metrics()
print(f"AUT {m.aut_pct:.4f}  FTB {m.ftb_pct:.4f}")
print(f"generated {m.generated_l:.1f} L, delivered {m.delivered_l:.1f} L by robots")
print(f"longest mission {m.max_mission_minutes:.0f} min, lowest range {m.min_range_m:.0f} m")

# the trace has one row per sampled tick
lines = trace_csv(m.trace).splitlines()
print(lines[0])
print(lines[len(lines) // 2])
