import numpy as np
import pytest

from swarmwaste.scenario import BinSite, Crossroad, Road, Scenario, generate_grid


@pytest.fixture(scope="session")
def desk_grid():
    return generate_grid(20, 20, 100, 50, 1000, seed=7)


def random_connected_scenario(n_nodes, seed, extra_edges=None, integer_lengths=True):
    """Random planar-ish graph: a random spanning tree plus extra chords.

    Integer-valued lengths keep path sums exact in floating point.
    """
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, 2000, size=(n_nodes, 2))
    crossroads = [Crossroad(i, float(x), float(y)) for i, (x, y) in enumerate(xy)]
    pairs = set()
    order = rng.permutation(n_nodes)
    for k in range(1, n_nodes):
        u = int(order[k])
        v = int(order[rng.integers(0, k)])
        pairs.add((min(u, v), max(u, v)))
    extra = n_nodes if extra_edges is None else extra_edges
    while extra > 0 and n_nodes > 2:
        u, v = (int(a) for a in rng.choice(n_nodes, 2, replace=False))
        key = (min(u, v), max(u, v))
        if key not in pairs:
            pairs.add(key)
            extra -= 1
    roads = []
    for i, (u, v) in enumerate(sorted(pairs)):
        d = float(np.hypot(*(xy[u] - xy[v])))
        roads.append(Road(i, u, v, float(max(1, round(d))) if integer_lengths else max(d, 1e-3)))
    bins = [BinSite(i, r.id, r.length / 3) for i, r in enumerate(roads[: max(1, len(roads) // 4)])]
    return Scenario(tuple(crossroads), tuple(roads), (), tuple(bins))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
