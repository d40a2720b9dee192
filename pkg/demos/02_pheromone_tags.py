"""
Pheromone on crossroad tags
===========================

One tag, a few robot visits, and the choice a robot makes when leaving.
"""

from collections import Counter
from random import Random

from swarmwaste.stigmergy import (ArrivalContext, CrossroadTag, PheromoneParams, max_pheromone,
                                  select_edge, update_tag)

params = PheromoneParams(evaporation_rate=0.15, exploitation_rate=0.6)

# a crossroad with three roads, last touched at minute 5
tag = CrossroadTag(crossroad=0, pheromone={1: 10.0, 2: 3.0, 3: 0.0}, ts=5.0)

# a loaded robot arrives on road 1 at minute 15; the bin it emptied held 12 L
# and the strongest trail on its previous tag was 10
update_tag(tag, ArrivalContext(arrival_edge=1, now=15.0, carrying=True, waste_found=12.0,
                               last_max=10.0), params)
print("after a loaded arrival:", tag.pheromone)

# an empty robot an hour later only diffuses; everything else just evaporates
update_tag(tag, ArrivalContext(arrival_edge=2, now=75.0, last_max=4.0), params)
print("an hour later:", tag.pheromone, "max", max_pheromone(tag))

# leaving the tag: exploit the strongest road 60% of the time, else wander
tag.pheromone = {1: 24.5, 2: 1.5, 3: 0.0}
rng = Random(1)
picks = Counter(select_edge(tag, came_from=3, exploitation_rate=0.6, rng=rng) for _ in range(10_000))
print("choices arriving from road 3:", dict(sorted(picks.items())))
