"""
Building a city, placing deposits and routing robots home
==========================================================

A synthetic street grid with bins and buildings, k-means deposit
placement, and the nearest-deposit routing table every crossroad tag holds.
"""

from swarmwaste.scenario import build_routing, generate_grid, place_deposits

# a 12x12 grid with 100 m blocks, 30 bins on road midpoints and 300 buildings
city = generate_grid(12, 12, 100.0, 30, 300, seed=7)
print(f"{len(city.crossroads)} crossroads, {len(city.roads)} roads, {len(city.bins)} bins")

# deposits sit at the crossroads closest to the k-means centroids of the bins
deposits = place_deposits(city, 3, seed=0)
for d in deposits.deposits:
    print(f"deposit {d.id} at crossroad {d.crossroad} {city.node_xy[d.crossroad]}")

# multi-source shortest paths: distance and first road towards the nearest deposit
table = build_routing(city, deposits)
far = max(table.distance, key=table.distance.get)
print(f"farthest crossroad {far} is {table.distance[far]:.0f} m from deposit {table.nearest[far]}")

# following next hops strictly shrinks the distance until a deposit is reached
walk = table.walk(city, far)
print("walk:", " -> ".join(str(n) for n in walk))
print("distances:", [round(table.distance[n]) for n in walk])
