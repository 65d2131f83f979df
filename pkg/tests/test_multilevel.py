import itertools

import numpy as np
import pytest

from conftest import brute_cut, random_graph
from jetpart.dist import DistPartition, distribute
from jetpart.graph import Graph, edge_cut, gen_grid, gen_rgg2d
from jetpart.multilevel import JetConfig, coarsen, contract, initial_partition, jet_round, lp_refine, partition
from jetpart.partition import max_block_weight
from jetpart.rebalance import Rebalancer


def clique_edges(nodes):
    return [(a, b) for a, b in itertools.combinations(nodes, 2)]


def two_cliques(size):
    edges = clique_edges(range(size)) + clique_edges(range(size, 2 * size))
    u, v = zip(*edges)
    return Graph.from_edges(2 * size, u, v)


def barbell():
    # cliques A = 0..5 and B = 10..15, joined by the path 5 - 6 - 7 - 8 - 9 - 10
    edges = clique_edges(range(6)) + clique_edges(range(10, 16)) + [(5, 6), (6, 7), (7, 8), (8, 9), (9, 10)]
    u, v = zip(*edges)
    return Graph.from_edges(16, u, v)


def best_bisection(g, eps):
    cap = max_block_weight(g.n, 2, eps)
    best = None
    for side in itertools.product([0, 1], repeat=g.n - 1):
        a = np.array((0,) + side)
        if max(np.sum(a == 0), np.sum(a == 1)) > cap:
            continue
        c = edge_cut(g, a)
        best = c if best is None else min(best, c)
    return best


def test_temperature_schedule():
    assert JetConfig().temperatures() == [0.75, 0.625, 0.5, 0.375]
    assert JetConfig(rounds=1).temperatures() == [0.75]
    assert JetConfig(rounds=2, tau_start=1, tau_end=0).temperatures() == [1.0, 0.5]


def test_config_validation_and_roundtrip(tmp_path):
    for bad in ({"refiner": "fm"}, {"tau_start": 0.2, "tau_end": 0.5}, {"rounds": 0}, {"patience": 0}, {"alpha": 1.0}):
        with pytest.raises(ValueError):
            JetConfig(**bad)
    with pytest.raises(ValueError):
        JetConfig.from_dict({"bogus": 1})
    cfg = JetConfig(rounds=3, seed=9, refiner="lp")
    cfg.save(tmp_path / "cfg.json")
    assert JetConfig.load(tmp_path / "cfg.json") == cfg


def test_small_graph_is_not_coarsened():
    h = coarsen(gen_grid(10, 10), 2)
    assert len(h.graphs) == 1 and h.maps == []
    with pytest.raises(ValueError):
        coarsen(gen_grid(3, 3), 1)


def test_coarsening_keeps_components_apart():
    g = two_cliques(120)
    h = coarsen(g, 2, seed=1, limit=4)
    assert len(h.graphs) > 1
    fine_to_coarsest = np.arange(g.n)
    for m in h.maps:
        fine_to_coarsest = m[fine_to_coarsest]
    assert not set(fine_to_coarsest[:120]) & set(fine_to_coarsest[120:])
    ip = initial_partition(h.coarsest, 2, 0.03, seed=1)
    assert ip.cut() == 0


def test_hierarchy_invariants():
    g = gen_rgg2d(3000, 0.035, 4)
    h = coarsen(g, 2, seed=3)
    assert len(h.graphs) > 1
    rng = np.random.default_rng(0)
    for level, (fine, coarse, m) in enumerate(zip(h.graphs, h.graphs[1:], h.maps)):
        assert coarse.total_vertex_weight == g.total_vertex_weight
        assert np.array_equal(coarse.vwgt, np.bincount(m, weights=fine.vwgt).astype(np.int64))
        assert coarse.is_symmetric()
        # crossing fine edge weight between two coarse vertices equals the coarse edge weight
        u, v, w = fine.edges()
        cu, cv = m[u], m[v]
        cross = cu != cv
        assert int(w[cross].sum()) == int(coarse.edges()[2].sum())
        a = rng.integers(0, 4, coarse.n)
        assert edge_cut(coarse, a) == edge_cut(fine, h.project(a, level))


def test_contract_merges_parallel_edges():
    g = gen_grid(2, 2)
    coarse, m = contract(g, np.array([0, 0, 1, 1]))
    assert coarse.n == 2 and coarse.vwgt.tolist() == [2, 2]
    assert coarse.adjwgt.tolist() == [2, 2]


def test_initial_partition():
    g = two_cliques(10)
    p = initial_partition(g, 2, 0.03, seed=4)
    assert p.cut() == 0 and p.is_balanced()
    assert np.array_equal(p.assignment, initial_partition(g, 2, 0.03, seed=4).assignment)
    one = initial_partition(g, 1)
    assert one.cut() == 0 and set(one.assignment.tolist()) == {0}
    grid = gen_grid(12, 12)
    for k in (3, 5, 8):
        assert initial_partition(grid, k, 0.03, seed=2).is_balanced()


def test_lp_refine_moves_misplaced_vertex():
    g = gen_grid(6, 1)
    dg = distribute(g, 2)
    dp = DistPartition.from_assignment(dg, [0, 0, 1, 0, 1, 1], 2, 0.5)
    assert dp.cut == 3
    moves = lp_refine(dg, dp)
    assert moves >= 1 and dp.cut == 1
    assert lp_refine(dg, dp) == 0


def test_lp_refine_never_unbalances_or_worsens(rng):
    for _ in range(20):
        g = random_graph(rng, n=60, density=0.08)
        k = int(rng.integers(2, 5))
        dg = distribute(g, int(rng.integers(1, 5)))
        dp = DistPartition.from_assignment(dg, np.arange(g.n) % k, k, 0.03)
        before = dp.cut
        lp_refine(dg, dp, seed=int(rng.integers(100)))
        assert dp.is_balanced() and dp.cut <= before
        assert dp.cut == brute_cut(g, dp.gather())


def test_barbell_jet_escapes_lp_fixed_point():
    g = barbell()
    start = np.array([0] * 6 + [0, 1, 0, 1] + [1] * 6)
    optimum = best_bisection(g, 0.03)
    assert optimum == 1

    dg = distribute(g, 2)
    lp = DistPartition.from_assignment(dg, start, 2, 0.03)
    lp_refine(dg, lp)
    assert lp.cut == 3

    dg = distribute(g, 2)
    dp = DistPartition.from_assignment(dg, start, 2, 0.03)
    stats = jet_round(dg, dp, 0.75, JetConfig(), Rebalancer(0))
    assert dp.cut == optimum < lp.cut
    assert dp.is_balanced() and stats.output_cut == dp.cut and stats.input_cut == 3


def test_jet_round_returns_input_at_local_optimum():
    g = two_cliques(8)
    dg = distribute(g, 2)
    start = np.repeat([0, 1], 8)
    dp = DistPartition.from_assignment(dg, start, 2, 0.0)
    stats = jet_round(dg, dp, 0.0, JetConfig(), Rebalancer(0))
    assert np.array_equal(dp.gather(), start) and dp.cut == 0
    assert stats.moves == 0
    assert not any(st.locked.any() for st in dp.states)


def test_jet_round_never_worsens(rng):
    for _ in range(10):
        g = gen_rgg2d(300, 0.1, int(rng.integers(1000)))
        k = int(rng.integers(2, 6))
        dg = distribute(g, int(rng.integers(1, 5)))
        dp = DistPartition.from_assignment(dg, initial_partition(g, k, 0.03, seed=1).assignment, k, 0.03)
        before = dp.cut
        jet_round(dg, dp, float(rng.choice([0.75, 0.5, 0.25])), JetConfig(patience=4), Rebalancer(1))
        assert dp.is_balanced() and dp.cut <= before
        assert dp.cut == brute_cut(g, dp.gather())


def test_partition_k1_and_determinism():
    g = gen_rgg2d(2000, 0.04, 1)
    one = partition(g, 1)
    assert one.cut == 0 and one.balanced
    a = partition(g, 4, 0.03, JetConfig(seed=3, pe_count=2))
    b = partition(g, 4, 0.03, JetConfig(seed=3, pe_count=2))
    assert np.array_equal(a.assignment, b.assignment) and a.cut == b.cut
    assert a.balanced and a.cut == edge_cut(g, a.assignment)
    assert a.temperatures == [0.75, 0.625, 0.5, 0.375]
    assert [r.tau for r in a.rounds[:4]] == a.temperatures
    lp = partition(g, 4, 0.03, JetConfig(seed=3, pe_count=2, refiner="lp"))
    assert lp.temperatures == [] and lp.rounds == []


def test_infeasible_instance_is_flagged():
    g = Graph.from_edges(4, [0, 1, 2], [1, 2, 3], vwgt=[20, 1, 1, 1])
    res = partition(g, 2, 0.0)
    assert not res.balanced and res.residual_overload > 0


def test_metrics_keys():
    res = partition(gen_grid(20, 20), 2)
    m = res.metrics()
    for key in ("cut", "imbalance", "balanced", "time_coarsening", "time_initial", "time_refinement", "time_total"):
        assert key in m
