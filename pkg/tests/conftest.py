import heapq
import math
import os

import pytest

from neighbours.network import make_env
from neighbours.prims import SensorState

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEMOS = os.path.join(ROOT, "demos")


def shortest_paths(nodes, weighted_edges, sources):
    """Dijkstra from a set of sources; unreachable nodes get inf."""
    adj = {n: [] for n in nodes}
    for a, b, w in weighted_edges:
        adj[a].append((b, w))
        adj[b].append((a, w))
    dist = {n: math.inf for n in nodes}
    heap = []
    for s in sources:
        dist[s] = 0.0
        heap.append((0.0, s))
    heapq.heapify(heap)
    while heap:
        d, n = heapq.heappop(heap)
        if d > dist[n]:
            continue
        for m, w in adj[n]:
            if d + w < dist[m]:
                dist[m] = d + w
                heapq.heappush(heap, (d + w, m))
    return dist


def weighted_env(nodes, weighted_edges, values=None):
    """Environment whose nbrRange reads the edge weights."""
    rel = {n: {} for n in nodes}
    for a, b, w in weighted_edges:
        rel[a][b] = rel[b][a] = w
    values = values or {}
    sensors = {n: SensorState(values.get(n, {}), {"nbrRange": rel[n]}) for n in nodes}
    return make_env(nodes, [(a, b) for a, b, _ in weighted_edges], sensors)


@pytest.fixture
def line5():
    nodes = list(range(5))
    edges = [(i, i + 1, 1.0) for i in range(4)]
    return nodes, edges


def hop_distances(nodes, edges, sources):
    return shortest_paths(nodes, [(a, b, 1.0) for a, b in edges], sources)


def random_weighted_graph(rng, max_nodes=15, p=0.3, unit=True):
    """A random graph with a spanning path (so it is connected) plus extra edges."""
    n = rng.randint(2, max_nodes)
    order = list(range(n))
    rng.shuffle(order)
    pairs = {tuple(sorted(e)) for e in zip(order, order[1:])}
    pairs |= {(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < p}
    w = (lambda: 1.0) if unit else (lambda: rng.uniform(0.1, 5.0))
    return list(range(n)), [(a, b, w()) for a, b in sorted(pairs)]


def run_rounds(program, env, rounds, scheduler=None, horizon=math.inf):
    from neighbours.network import RoundRobin, Simulator, Stop, initial_config
    sim = Simulator(program, horizon)
    res = sim.run(initial_config(env), scheduler or RoundRobin(), stop=Stop(max_rounds=rounds))
    return res.config


# (criterion, passed, detail) lines filled in by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
