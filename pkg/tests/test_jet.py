import math

import numpy as np
import pytest

from conftest import brute_cut, random_graph
from jetpart.dist import DistPartition, distribute, exchange_interface_gains
from jetpart.graph import Graph, gen_grid
from jetpart.jet import Candidates, apply_and_lock, build_candidates, filter_candidates, jet_iteration


def setup(g, assignment, k, P=1):
    dg = distribute(g, P)
    return dg, DistPartition.from_assignment(dg, assignment, k)


def as_sets(dg, cands):
    """{global id: (target, gain)} over all PEs."""
    out = {}
    for lg, c in zip(dg.locals, cands):
        for v, t, g in zip(lg.global_ids[c.vertices], c.targets, c.gains):
            out[int(v)] = (int(t), int(g))
    return out


def oracle_candidates(g, blocks, k, tau, locked=()):
    """Direct evaluation of the admission rule, vertex by vertex."""
    out = {}
    for v in range(g.n):
        if v in locked:
            continue
        conn = [0] * k
        for u, w in zip(*g.neighbors(v)):
            conn[blocks[u]] += int(w)
        own = conn[blocks[v]]
        others = [(conn[b], -b) for b in range(k) if b != blocks[v]]
        best, neg_b = max(others)
        gain = best - own
        if gain >= -math.floor(tau * own):
            out[v] = (-neg_b, gain)
    return out


def star_example():
    # vertex 0: five edges into block 0, three into block 1
    u = [0] * 8
    v = list(range(1, 9))
    g = Graph.from_edges(9, u, v)
    return g, np.array([0] + [0] * 5 + [1] * 3)


@pytest.mark.parametrize("tau, included", [(0.5, True), (0.4, True), (0.3, False), (0.0, False), (1.0, True)])
def test_threshold_example(tau, included):
    g, blocks = star_example()
    dg, dp = setup(g, blocks, 2)
    found = as_sets(dg, build_candidates(dg, dp, tau))
    assert (0 in found) == included
    if included:
        assert found[0] == (1, -2)


def test_tau_zero_only_nonnegative_gains(rng):
    for _ in range(20):
        g = random_graph(rng)
        blocks = rng.integers(0, 3, g.n)
        dg, dp = setup(g, blocks, 3)
        found = as_sets(dg, build_candidates(dg, dp, 0.0))
        assert all(gain >= 0 for _, gain in found.values())


def test_tau_one_admits_every_vertex(rng):
    g = random_graph(rng, n=40)
    dg, dp = setup(g, rng.integers(0, 4, g.n), 4)
    assert set(as_sets(dg, build_candidates(dg, dp, 1.0))) == set(range(g.n))


def test_candidates_match_oracle_and_are_pe_invariant(rng):
    for _ in range(30):
        g = random_graph(rng, n=int(rng.integers(8, 65)), max_w=4)
        k = int(rng.integers(2, 5))
        blocks = rng.integers(0, k, g.n)
        tau = float(rng.choice([0.0, 0.25, 0.375, 0.5, 0.75, 1.0]))
        expected = oracle_candidates(g, blocks, k, tau)
        for P in (1, 2, 4, 8):
            dg, dp = setup(g, blocks, k, P)
            assert as_sets(dg, build_candidates(dg, dp, tau)) == expected


def test_monotone_in_tau(rng):
    for _ in range(20):
        g = random_graph(rng, max_w=3)
        dg, dp = setup(g, rng.integers(0, 3, g.n), 3)
        sets = [set(as_sets(dg, build_candidates(dg, dp, t))) for t in (0.0, 0.25, 0.5, 0.75, 1.0)]
        assert all(a <= b for a, b in zip(sets, sets[1:]))


def test_tau_out_of_range():
    g, blocks = star_example()
    dg, dp = setup(g, blocks, 2)
    with pytest.raises(ValueError):
        build_candidates(dg, dp, 1.5)


def gadget():
    # u=0 (block 0), v=1 (block 1), a=2 (block 0), b=3 (block 1)
    g = Graph.from_edges(4, [0, 0, 0, 1, 1], [1, 3, 2, 2, 3], [1, 2, 1, 1, 1])
    return g, np.array([0, 1, 0, 1])


def test_afterburner_gadget():
    g, blocks = gadget()
    dg, dp = setup(g, blocks, 2)
    # g(u) = 3 - 1 = 2, g(v) = 2 - 1 = 1; both aim at the other's block
    cands = [Candidates(np.array([0, 1]), np.array([1, 0]), np.array([2, 1]))]
    kept = filter_candidates(dg, dp, cands, exchange_interface_gains(dg, cands))
    # with u already in block 1, v would lose 2 and gain 1
    assert kept[0].vertices.tolist() == [0]


def test_afterburner_gadget_across_pes():
    g, blocks = gadget()
    for P in (2, 4):
        dg, dp = setup(g, blocks, 2, P)
        cands = []
        for lg in dg.locals:
            sel = [i for i, gid in enumerate(lg.global_ids[: lg.n_owned]) if gid in (0, 1)]
            gid = lg.global_ids[sel]
            cands.append(Candidates(np.array(sel, dtype=np.int64), np.where(gid == 0, 1, 0), np.where(gid == 0, 2, 1)))
        kept = filter_candidates(dg, dp, cands, exchange_interface_gains(dg, cands))
        assert set(as_sets(dg, kept)) == {0}


def test_non_adjacent_candidates_kept_iff_nonnegative():
    g = Graph.from_edges(6, [0, 2, 4], [1, 3, 5])
    blocks = np.array([0, 1, 0, 1, 0, 0])
    dg, dp = setup(g, blocks, 2)
    cands = [Candidates(np.array([0, 2, 4]), np.array([1, 1, 1]), np.array([1, 1, -1]))]
    kept = filter_candidates(dg, dp, cands, exchange_interface_gains(dg, cands))
    assert kept[0].vertices.tolist() == [0, 2]


def conditional_gain(g, blocks, cands, v):
    """Gain of v with every higher-priority neighboring candidate already moved."""
    t = cands[v][0]
    virtual = {}
    for u, w in zip(*g.neighbors(v)):
        u = int(u)
        b = blocks[u]
        if u in cands and (cands[u][1], u) > (cands[v][1], v):
            b = cands[u][0]
        virtual[u] = (b, int(w))
    return sum(w for b, w in virtual.values() if b == t) - sum(w for b, w in virtual.values() if b == blocks[v])


def test_filter_matches_oracle(rng):
    for _ in range(30):
        g = random_graph(rng, n=int(rng.integers(8, 65)), max_w=4)
        k = int(rng.integers(2, 5))
        blocks = rng.integers(0, k, g.n)
        tau = float(rng.choice([0.25, 0.5, 0.75]))
        cands = oracle_candidates(g, blocks, k, tau)
        expected = {v for v in cands if conditional_gain(g, blocks, cands, v) >= 0}
        for P in (1, 3, 8):
            dg, dp = setup(g, blocks, k, P)
            c = build_candidates(dg, dp, tau)
            kept = as_sets(dg, filter_candidates(dg, dp, c, exchange_interface_gains(dg, c)))
            assert set(kept) == expected
            assert set(kept) <= set(cands)


def test_apply_and_lock(rng):
    g = gen_grid(8, 8)
    blocks = rng.integers(0, 2, g.n)
    dg, dp = setup(g, blocks, 2, P=3)
    empty = [Candidates.empty() for _ in range(3)]
    assert apply_and_lock(dg, dp, empty) == 0
    assert np.array_equal(dp.gather(), blocks)
    assert not any(st.locked.any() for st in dp.states)

    moved = jet_iteration(dg, dp, 0.75)
    assert moved > 0
    after = dp.gather()
    changed = set(np.flatnonzero(after != blocks).tolist())
    locked = {int(lg.global_ids[i]) for lg, st in zip(dg.locals, dp.states) for i in np.flatnonzero(st.locked)}
    assert locked == changed and len(changed) == moved
    assert dp.cut == brute_cut(g, after)
    nxt = as_sets(dg, build_candidates(dg, dp, 1.0))
    assert not (set(nxt) & locked)


def test_single_move_equals_apply_move():
    g, blocks = gadget()
    dg, dp = setup(g, blocks, 2, P=2)
    moves = [Candidates.empty(), Candidates.empty()]
    owner = int(dg.owner([0])[0])
    moves[owner] = Candidates(dg.locals[owner].to_local([0]), np.array([1]), np.array([2]))
    apply_and_lock(dg, dp, moves)
    assert dp.gather().tolist() == [1, 1, 0, 1]
    assert dp.cut == brute_cut(g, dp.gather())


def test_iteration_invariant_to_pe_count_on_disconnected_instance(rng):
    # four separate 5x5 grids; every split point falls between components
    grid = gen_grid(5, 5)
    u, v, w = grid.edges()
    g = Graph.from_edges(100, np.concatenate([u + 25 * i for i in range(4)]), np.concatenate([v + 25 * i for i in range(4)]))
    blocks = rng.integers(0, 3, g.n)
    results = []
    for P in (1, 2, 4):
        dg, dp = setup(g, blocks, 3, P)
        if P > 1:
            assert all(len(lg.ghost_ids) == 0 for lg in dg.locals)
        for tau in (0.75, 0.5, 0.25):
            jet_iteration(dg, dp, tau)
        results.append((dp.gather(), dp.cut))
    for a, c in results[1:]:
        assert np.array_equal(a, results[0][0]) and c == results[0][1]


def test_iteration_invariant_to_pe_count_with_interfaces(rng):
    for _ in range(10):
        g = random_graph(rng, n=64, density=0.1)
        blocks = rng.integers(0, 4, g.n)
        ref = None
        for P in (1, 2, 4, 8):
            dg, dp = setup(g, blocks, 4, P)
            for _ in range(4):
                jet_iteration(dg, dp, 0.5)
            out = dp.gather()
            assert dp.cut == brute_cut(g, out)
            ref = out if ref is None else ref
            assert np.array_equal(out, ref)
