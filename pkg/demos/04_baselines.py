"""
Robots against a garbage truck
==============================

Paired seeds for the pheromone swarm (MPF), the single-depot swarm (CPF)
and a truck visiting every bin once a day.
"""

from swarmwaste.engine import RunConfig
from swarmwaste.experiments import compare_baselines
from swarmwaste.scenario import generate_grid

city = generate_grid(20, 20, 100.0, 50, 1000, seed=7)
desk = dict(n_citizens=1000, n_robots=10)

report = compare_baselines(city, RunConfig(mode="MPF", **desk), RunConfig(mode="CPF", **desk),
                           RunConfig(mode="TRUCK", n_citizens=1000), replications=4)

for mode, s in report.stats().items():
    print(f"{mode:5s} AUT {s['aut_pct_mean']:.4f} +- {s['aut_pct_sd']:.4f}   "
          f"FTB {s['ftb_pct_mean']:.4f} +- {s['ftb_pct_sd']:.4f}")

for key in ("aut_pct", "ftb_pct"):
    wins = report.wins("MPF", "TRUCK", key)
    print(f"MPF beats the truck on {key} in {wins} of 4 pairs (sign test p={report.sign_test('MPF', 'TRUCK', key):.3f})")
