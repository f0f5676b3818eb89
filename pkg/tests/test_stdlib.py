import math
import random

import pytest

from neighbours.core import Pair
from neighbours.hfc import check_hfc_prime
from neighbours.network import ShuffledRounds, UniformRandom, make_env
from neighbours.parser import parse_program
from neighbours.prims import SensorState
from neighbours.scenario import Topology, base_graph
from neighbours.stdlib import CATALOG, FILES, load_program, load_stdlib, source
from neighbours.core import Program, Val
from neighbours.typesys import format_scheme, infer_program

from conftest import (hop_distances, random_weighted_graph, run_rounds, shortest_paths,
                      weighted_env)


def test_catalog_schemes():
    schemes, _ = infer_program(Program(load_stdlib(), Val(0.0)))
    assert {e.name for e in CATALOG} <= set(schemes)
    for e in CATALOG:
        assert format_scheme(schemes[e.name]) == e.scheme, e.name


def test_catalog_files():
    for e in CATALOG:
        assert e.file in FILES
        assert f"def {e.name}(" in source(e.file)


def test_whole_library_in_fragment():
    assert check_hfc_prime(Program(load_stdlib(), Val(0.0))).ok


def line_env(n, values):
    return weighted_env(list(range(n)), [(i, i + 1, 1.0) for i in range(n - 1)], values)


def test_gradient_on_line(line5):
    nodes, edges = line5
    env = weighted_env(nodes, edges, {d: {"isSource": d == 0} for d in nodes})
    N = run_rounds(load_program("gradient(isSource(), nbrRange)"), env, 12)
    assert [N.roots()[d] for d in nodes] == [0.0, 1.0, 2.0, 3.0, 4.0]


def test_gradient_single_source_and_no_source():
    env = weighted_env([0], [], {0: {"isSource": True}})
    assert run_rounds(load_program("gradient(isSource(), nbrRange)"), env, 2).roots() == {0: 0.0}
    env = line_env(3, {d: {"isSource": False} for d in range(3)})
    roots = run_rounds(load_program("gradient(isSource(), nbrRange)"), env, 10).roots()
    assert all(v == math.inf for v in roots.values())


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_dijkstra_float_weights(seed):
    rng = random.Random(seed)
    nodes, edges = random_weighted_graph(rng, 12, unit=False)
    sources = rng.sample(nodes, rng.randint(1, 2))
    env = weighted_env(nodes, edges, {d: {"isSource": d in sources} for d in nodes})
    roots = run_rounds(load_program("gradient(isSource(), nbrRange)"), env, 3 * len(nodes) + 5).roots()
    oracle = shortest_paths(nodes, edges, sources)
    for d in nodes:
        assert roots[d] == pytest.approx(oracle[d], rel=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_gradientG_equals_gradient(seed):
    rng = random.Random(100 + seed)
    nodes, edges = random_weighted_graph(rng, 10, unit=False)
    env = weighted_env(nodes, edges, {d: {"isSource": d == 0} for d in nodes})
    rounds = 3 * len(nodes) + 5
    a = run_rounds(load_program("gradient(isSource(), nbrRange)"), env, rounds).roots()
    b = run_rounds(load_program("gradientG(isSource(), nbrRange)"), env, rounds).roots()
    assert all(a[d] == pytest.approx(b[d], rel=1e-12) for d in nodes)


def test_broadcast_nearest_source_value():
    env = line_env(6, {d: {"isSource": d in (0, 5), "cpu": float(10 * d)} for d in range(6)})
    roots = run_rounds(load_program("broadcast(isSource(), cpu(), nbrRange)"), env, 15).roots()
    # ties at equal distance go to the smaller value (pairs compare lexicographically)
    assert [roots[d] for d in range(6)] == [0.0, 0.0, 0.0, 50.0, 50.0, 50.0]


def test_G_at_source():
    env = line_env(2, {0: {"isSource": True}, 1: {"isSource": False}})
    p = load_program("G(mux(isSource(), 0.0, PositiveInfinity), 7, nbrRange, (v) => v + 1)")
    roots = run_rounds(p, env, 6).roots()
    assert roots[0] == Pair(0.0, 7.0)
    assert roots[1] == Pair(1.0, 8.0)


def test_T_decay_recurrence():
    p = load_program("T(10, 0, (x) => x - 1)")
    env = make_env([0])
    from neighbours.device import fire
    seen, theta = [], {}
    for _ in range(13):
        t = fire(0, theta, SensorState(), p)
        theta = {0: t}
        seen.append(t.root)
    # scalar oracle: x_{k+1} = min(max(x_k - 1, 0), 10), x_0 = 10
    x, expected = 10.0, []
    for _ in range(13):
        x = min(max(x - 1, 0.0), 10.0)
        expected.append(x)
    assert seen == expected


def test_C_counts_line_at_sink(line5):
    nodes, edges = line5
    env = weighted_env(nodes, edges, {d: {"isSource": d == 0} for d in nodes})
    p = load_program("C(gradient(isSource(), nbrRange), +, 1, 0)")
    roots = run_rounds(p, env, 20).roots()
    assert [roots[d] for d in nodes] == [5.0, 4.0, 3.0, 2.0, 1.0]


def test_C_single_and_disconnected():
    p = load_program("C(gradient(isSource(), nbrRange), +, 3, 0)")
    env = weighted_env([0], [], {0: {"isSource": True}})
    assert run_rounds(p, env, 3).roots() == {0: 3.0}
    env = weighted_env([0, 1, 2], [(0, 1, 1.0)], {d: {"isSource": d == 0} for d in range(3)})
    roots = run_rounds(p, env, 10).roots()
    assert roots[0] == 6.0 and roots[2] == 3.0      # device 2 only has its own value


def test_C_conservation_on_random_graphs():
    for seed in range(5):
        rng = random.Random(seed)
        nodes, edges = random_weighted_graph(rng, 12, unit=rng.random() < 0.5)
        sources = rng.sample(nodes, rng.randint(1, min(3, len(nodes))))
        local = {d: rng.randint(0, 9) for d in nodes}
        env = weighted_env(nodes, edges, {d: {"isSource": d in sources, "cpu": float(local[d])} for d in nodes})
        p = load_program("pair(gradient(isSource(), nbrRange), C(gradient(isSource(), nbrRange), +, cpu(), 0))")
        roots = run_rounds(p, env, 4 * len(nodes) + 10).roots()
        assert sum(roots[s].args[1] for s in sources) == sum(local.values())


def test_parentOf_prefers_least_potential_then_id():
    env = weighted_env([0, 1, 2, 3], [(0, 3, 1.0), (1, 3, 1.0), (2, 3, 1.0)],
                       {0: {"cpu": 1.0}, 1: {"cpu": 1.0}, 2: {"cpu": 0.0}, 3: {"cpu": 5.0}})
    roots = run_rounds(load_program("parentOf(cpu())"), env, 2).roots()
    assert roots[3] == 2.0 and roots[2] == -1.0


def leader_spacing(nodes, edges, leaders, grain):
    """(max distance to the nearest leader, min distance between two leaders)."""
    far = max(hop_distances(nodes, edges, leaders).values())
    close = math.inf
    for a in leaders:
        d = hop_distances(nodes, edges, [a])
        close = min([close] + [d[b] for b in leaders if b != a])
    return far, close


def run_S(nodes, edges, grain, seed, rounds=80, sched=None):
    rng = random.Random(f"rand:{seed}")
    env = weighted_env(nodes, [(a, b, 1.0) for a, b in edges], {d: {"rand": rng.random()} for d in nodes})
    N = run_rounds(load_program(f"S({grain}, nbrRange)"), env, rounds, sched or ShuffledRounds(seed))
    return sorted(d for d, v in N.roots().items() if v)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_S_spacing_on_geometric_graphs(seed):
    nodes, edges, _ = base_graph(Topology(kind="random-geometric", n=30, radius=0.3, seed=seed))
    grain = 3
    leaders = run_S(nodes, edges, grain, seed)
    far, close = leader_spacing(nodes, edges, leaders, grain)
    assert leaders
    assert far <= 1.5 * grain
    assert close > grain / 1.5


def test_S_single_node_and_far_pair():
    assert run_S([0], [], 3, 0, rounds=10) == [0]
    nodes = list(range(6))
    edges = [(i, i + 1) for i in range(5)]
    # end points are 5 hops apart, grain 2: both ends cannot be covered by one leader
    assert len(run_S(nodes, edges, 2, 0, rounds=60)) >= 2
    # two nodes at distance 1 > grain 0.5: both lead
    assert run_S([0, 1], [(0, 1)], 0.5, 0, rounds=20) == [0, 1]


def test_up_floods_a_new_version():
    rng = random.Random(4)
    nodes, edges = random_weighted_graph(rng, 10)
    env = weighted_env(nodes, edges, {d: {"upgrade": d == 3} for d in nodes})
    p = load_program("up(() => mux(upgrade(), pair(2, 20), pair(1, 10)))")
    diameter = max(max(hop_distances(nodes, [(a, b) for a, b, _ in edges], [s]).values()) for s in nodes)
    roots = run_rounds(p, env, int(diameter) + 2).roots()
    assert set(roots.values()) == {20.0}


def test_up_without_injection_is_constant():
    env = line_env(4, {d: {"upgrade": False} for d in range(4)})
    p = load_program("up(() => mux(upgrade(), pair(2, 20), pair(1, 10)))")
    assert set(run_rounds(p, env, 6).roots().values()) == {10.0}


def test_up_concurrent_versions_converge_to_highest():
    env = line_env(8, {d: {"b1": d == 1, "b2": d == 6} for d in range(8)})
    p = load_program("up(() => mux(b2(), pair(3, 30), mux(b1(), pair(2, 20), pair(1, 10))))")
    assert set(run_rounds(p, env, 12, UniformRandom(3)).roots().values()) == {30.0}


def test_up_spreads_functions():
    env = line_env(5, {d: {"upgrade": d == 4} for d in range(5)})
    p = load_program("up(() => mux(upgrade(), pair(2, (v) => v * 2), pair(1, (v) => v)))(21)")
    assert set(run_rounds(p, env, 8).roots().values()) == {42.0}


def test_neighbour_helpers():
    env = weighted_env([0, 1, 2, 3], [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)],
                       {d: {"cpu": float(d)} for d in range(4)})
    p = load_program("pair(counthood(), pair(sumhood(cpu()), minhood(cpu())))")
    r = run_rounds(p, env, 2).roots()[0]
    assert r == Pair(3.0, Pair(6.0, 1.0))
    p = load_program("foldhoodPlusSelf(min, cpu())")
    assert run_rounds(p, env, 2).roots() == {d: float(d) for d in range(4)}
