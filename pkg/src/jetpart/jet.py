"""One distributed Jet iteration: candidate generation, afterburner, move + lock."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import DistGraph, DistPartition, GhostGains, exchange_interface_gains
from .graph import arc_ranges
from .partition import as_fraction


@dataclass
class Candidates:
    """Move candidates of one PE, as parallel arrays over owned local ids."""

    vertices: np.ndarray
    targets: np.ndarray
    gains: np.ndarray

    def __len__(self):
        return len(self.vertices)

    @classmethod
    def empty(cls) -> "Candidates":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy())

    def subset(self, keep) -> "Candidates":
        return Candidates(self.vertices[keep], self.targets[keep], self.gains[keep])


def connection_matrix(lg, blocks: np.ndarray, vertices: np.ndarray, k: int) -> np.ndarray:
    """``conn[i, b]``: edge weight between owned vertex ``vertices[i]`` and block ``b``."""
    arcs, pos = arc_ranges(lg.xadj, vertices)
    key = pos * k + blocks[lg.adjncy[arcs]]
    flat = np.bincount(key, weights=lg.adjwgt[arcs], minlength=len(vertices) * k)
    return flat.astype(np.int64).reshape(len(vertices), k)


def boundary_vertices(lg, blocks: np.ndarray) -> np.ndarray:
    """Owned vertices with a neighbor in another block, plus isolated ones."""
    crossing = blocks[lg.src] != blocks[lg.adjncy]
    mask = np.zeros(lg.n_owned, dtype=bool)
    mask[lg.src[crossing]] = True
    mask |= lg.degree == 0
    return np.flatnonzero(mask)


def best_other_block(conn: np.ndarray, own_blocks: np.ndarray):
    """Strongest-connected block other than the own one (lowest id on ties)."""
    rows = np.arange(len(own_blocks))
    own = conn[rows, own_blocks]
    masked = conn.copy()
    masked[rows, own_blocks] = -1
    target = np.argmax(masked, axis=1)
    return target, masked[rows, target] - own, own


def build_candidates(dg: DistGraph, dp: DistPartition, tau, locked=None) -> list[Candidates]:
    """Owned, unlocked vertices with ``g(v) >= -floor(tau * conn(v, own))``.

    Uses only local and ghost data. For ``tau < 1`` a vertex without an
    external neighbor can only qualify if it has no internal edge either, so
    only boundary and isolated vertices are scanned.
    """
    tau = as_fraction(tau)
    if not 0 <= tau <= 1:
        raise ValueError("temperature must lie in [0, 1]")
    k = dp.k

    def local(p):
        lg, st = dg.locals[p], dp.states[p]
        if k < 2 or lg.n_owned == 0:
            return Candidates.empty()
        blocks = st.blocks
        if tau >= 1:
            vs = np.arange(lg.n_owned, dtype=np.int64)
        else:
            vs = boundary_vertices(lg, blocks)
        lock = st.locked if locked is None else locked[p]
        vs = vs[~lock[vs]]
        if len(vs) == 0:
            return Candidates.empty()
        conn = connection_matrix(lg, blocks, vs, k)
        target, gain, own = best_other_block(conn, blocks[vs])
        threshold = -((own * tau.numerator) // tau.denominator)
        keep = gain >= threshold
        return Candidates(vs[keep], target[keep], gain[keep])

    return dg.engine.run(local)


def filter_candidates(dg: DistGraph, dp: DistPartition, candidates, ghost_gains: list[GhostGains]) -> list[Candidates]:
    """Afterburner: drop candidates whose move increases the cut if all
    higher-priority neighboring candidates move first.

    Priority is ``(gain, global id)`` in lexicographic order.
    """

    def local(p):
        lg, st, cand, gg = dg.locals[p], dp.states[p], candidates[p], ghost_gains[p]
        if len(cand) == 0:
            return cand
        n_own = lg.n_owned
        in_m = np.concatenate([np.zeros(n_own, dtype=bool), gg.present])
        gain = np.concatenate([np.zeros(n_own, dtype=np.int64), gg.gain])
        target = np.concatenate([np.full(n_own, -1, dtype=np.int64), gg.target])
        in_m[cand.vertices] = True
        gain[cand.vertices] = cand.gains
        target[cand.vertices] = cand.targets

        arcs, pos = arc_ranges(lg.xadj, cand.vertices)
        v = cand.vertices[pos]
        u = lg.adjncy[arcs]
        gid = lg.global_ids
        higher = in_m[u] & ((gain[u] > gain[v]) | ((gain[u] == gain[v]) & (gid[u] > gid[v])))
        virtual = np.where(higher, target[u], st.blocks[u])
        w = lg.adjwgt[arcs]
        contrib = w * (virtual == target[v]) - w * (virtual == st.blocks[v])
        recomputed = np.bincount(pos, weights=contrib, minlength=len(cand)).astype(np.int64)
        return cand.subset(recomputed >= 0)

    return dg.engine.run(local)


def apply_and_lock(dg: DistGraph, dp: DistPartition, kept) -> int:
    """Move all kept candidates at once; they become the new lock set."""
    for lg, st, cand in zip(dg.locals, dp.states, kept):
        st.locked = np.zeros(lg.n_owned, dtype=bool)
        st.locked[cand.vertices] = True
    dp.apply_moves([(c.vertices, c.targets) for c in kept])
    return int(dg.engine.allreduce_sum([np.array([len(c)]) for c in kept])[0][0])


def jet_iteration(dg: DistGraph, dp: DistPartition, tau) -> int:
    """Build, exchange, filter and apply. Returns the global number of moves."""
    candidates = build_candidates(dg, dp, tau)
    ghost_gains = exchange_interface_gains(dg, candidates)
    kept = filter_candidates(dg, dp, candidates, ghost_gains)
    return apply_and_lock(dg, dp, kept)
