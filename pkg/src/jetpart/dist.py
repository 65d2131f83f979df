"""Deterministic simulation of the distributed-memory model.

A graph is split into ``P`` consecutive vertex ranges of roughly equal arc
count. Each logical PE stores the arcs of its owned vertices plus replicas of
remote neighbors (ghosts, which carry a weight and a block id but no arcs).
PEs only interact through :class:`Engine`: messages are buffered and delivered
at the next barrier, sorted by ``(source PE, global vertex id)``, so results do
not depend on the order in which PEs are executed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .graph import Graph
from .partition import OverloadReport, as_fraction, l_max, max_block_weight, overloads


class Engine:
    """Superstep executor for ``pe_count`` logical PEs.

    ``order`` fixes the order PEs run inside a superstep (default: rank
    order); ``workers > 1`` runs them on a thread pool instead.
    """

    def __init__(self, pe_count: int, order=None, workers: int = 1):
        self.pe_count = pe_count
        self.order = list(range(pe_count)) if order is None else list(order)
        if sorted(self.order) != list(range(pe_count)):
            raise ValueError("order must be a permutation of the PE ranks")
        self.workers = workers
        self.supersteps = 0
        self.messages = 0
        self.volume = 0

    def run(self, fn) -> list:
        """Run ``fn(pe)`` on every PE; results are indexed by rank."""
        out = [None] * self.pe_count
        if self.workers > 1 and self.pe_count > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                for pe, res in zip(self.order, pool.map(fn, self.order)):
                    out[pe] = res
        else:
            for pe in self.order:
                out[pe] = fn(pe)
        self.supersteps += 1
        return out

    def exchange(self, outboxes: list[dict]) -> list[tuple]:
        """Deliver ``outboxes[src][dst] = (gids, *values)`` at a barrier.

        Returns per destination ``(sources, gids, *values)`` sorted by
        ``(source, gid)``. Every message from one superstep must carry the same
        number of value arrays.
        """
        buckets: list[list] = [[] for _ in range(self.pe_count)]
        width = None
        for src in range(self.pe_count):
            for dst, payload in sorted(outboxes[src].items()):
                gids = np.asarray(payload[0], dtype=np.int64)
                if width is None:
                    width = len(payload)
                elif len(payload) != width:
                    raise ValueError("inconsistent message layout")
                if len(gids) == 0:
                    continue
                buckets[dst].append((np.full(len(gids), src, dtype=np.int64), gids, *payload[1:]))
                self.messages += 1
                self.volume += len(gids)
        width = width or 1
        inboxes = []
        for dst in range(self.pe_count):
            parts = buckets[dst]
            if not parts:
                inboxes.append(tuple(np.zeros(0, dtype=np.int64) for _ in range(width + 1)))
                continue
            cols = [np.concatenate([p[i] for p in parts]) for i in range(width + 1)]
            order = np.lexsort((cols[1], cols[0]))
            inboxes.append(tuple(c[order] for c in cols))
        self.supersteps += 1
        return inboxes

    def allreduce_sum(self, vectors) -> list[np.ndarray]:
        if len(vectors) != self.pe_count:
            raise ValueError("one contribution per PE required")
        arrays = [np.asarray(v) for v in vectors]
        shape = arrays[0].shape
        if any(a.shape != shape for a in arrays):
            raise ValueError("allreduce contributions differ in length")
        total = arrays[0].copy()
        for a in arrays[1:]:
            total = total + a
        self.supersteps += 1
        return [total.copy() for _ in range(self.pe_count)]

    def allreduce_max(self, values):
        if len(values) != self.pe_count:
            raise ValueError("one contribution per PE required")
        self.supersteps += 1
        return max(values)

    def gather(self, items: list, root: int = 0) -> list:
        """Collect one item per PE on ``root`` (rank order)."""
        self.supersteps += 1
        return list(items)


def allreduce_sum(vectors, engine: Engine | None = None) -> list[np.ndarray]:
    return (engine or Engine(len(vectors))).allreduce_sum(vectors)


@dataclass(eq=False)
class LocalGraph:
    """The subgraph stored on one PE. Local ids: owned ``0..n_owned-1``, then ghosts."""

    pe: int
    first: int
    last: int
    xadj: np.ndarray
    adjncy: np.ndarray
    adjwgt: np.ndarray
    vwgt: np.ndarray
    global_ids: np.ndarray
    ghost_owner: np.ndarray
    # send_plan[q]: local ids of owned vertices replicated as ghosts on PE q
    send_plan: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def n_owned(self) -> int:
        return self.last - self.first

    @property
    def n_local(self) -> int:
        return len(self.global_ids)

    @property
    def n_ghost(self) -> int:
        return self.n_local - self.n_owned

    @property
    def ghost_ids(self) -> np.ndarray:
        return self.global_ids[self.n_owned :]

    def __post_init__(self):
        self.src = np.repeat(np.arange(self.n_owned, dtype=np.int64), np.diff(self.xadj))
        self.degree = np.diff(self.xadj)
        interface = np.zeros(self.n_owned, dtype=bool)
        for ids in self.send_plan.values():
            interface[ids] = True
        self.interface = interface

    def to_local(self, gids) -> np.ndarray:
        gids = np.asarray(gids, dtype=np.int64)
        out = gids - self.first
        remote = (gids < self.first) | (gids >= self.last)
        if np.any(remote):
            pos = np.searchsorted(self.ghost_ids, gids[remote])
            if np.any(pos >= self.n_ghost) or np.any(self.ghost_ids[np.minimum(pos, self.n_ghost - 1)] != gids[remote]):
                raise KeyError("vertex is neither owned nor a ghost on this PE")
            out[remote] = self.n_owned + pos
        return out


@dataclass(eq=False)
class DistGraph:
    graph: Graph
    vtxdist: np.ndarray
    locals: list[LocalGraph]
    engine: Engine

    @property
    def pe_count(self) -> int:
        return len(self.locals)

    def owner(self, gids) -> np.ndarray:
        return np.searchsorted(self.vtxdist, gids, side="right") - 1

    def assemble(self) -> Graph:
        """Rebuild the global graph from the owned arcs of every PE."""
        src, dst, w = [], [], []
        for lg in self.locals:
            src.append(lg.global_ids[lg.src])
            dst.append(lg.global_ids[lg.adjncy])
            w.append(lg.adjwgt)
        vwgt = np.concatenate([lg.vwgt[: lg.n_owned] for lg in self.locals])
        return Graph.from_arcs(len(vwgt), np.concatenate(src), np.concatenate(dst), np.concatenate(w), vwgt)


def split_points(xadj: np.ndarray, pe_count: int) -> np.ndarray:
    """Vertex boundaries closest to equal arc prefixes; ties go to the earlier vertex."""
    n = len(xadj) - 1
    if not 1 <= pe_count <= n:
        raise ValueError(f"pe_count must lie in 1..{n}")
    arcs = int(xadj[-1])
    vtxdist = np.zeros(pe_count + 1, dtype=np.int64)
    vtxdist[-1] = n
    for p in range(1, pe_count):
        if arcs == 0:
            cut = (p * n) // pe_count
        else:
            ideal = Fraction(p * arcs, pe_count)
            i = int(np.searchsorted(xadj, ideal.numerator // ideal.denominator, side="left"))
            best = None
            for cand in (i - 1, i, i + 1):
                if 0 <= cand <= n:
                    dev = abs(Fraction(int(xadj[cand])) - ideal)
                    if best is None or dev < best[0]:
                        best = (dev, cand)
            cut = best[1]
        # every PE owns at least one vertex
        cut = min(max(cut, vtxdist[p - 1] + 1), n - (pe_count - p))
        vtxdist[p] = cut
    return vtxdist


def distribute(g: Graph, pe_count: int, engine: Engine | None = None) -> DistGraph:
    vtxdist = split_points(g.xadj, pe_count)
    locals_ = []
    ghost_lists = []
    for p in range(pe_count):
        first, last = int(vtxdist[p]), int(vtxdist[p + 1])
        lo, hi = g.xadj[first], g.xadj[last]
        dst = g.adjncy[lo:hi]
        remote = (dst < first) | (dst >= last)
        ghosts = np.unique(dst[remote])
        local_dst = dst - first
        local_dst[remote] = (last - first) + np.searchsorted(ghosts, dst[remote])
        gids = np.concatenate([np.arange(first, last, dtype=np.int64), ghosts])
        ghost_owner = np.searchsorted(vtxdist, ghosts, side="right") - 1
        locals_.append(
            dict(
                pe=p,
                first=first,
                last=last,
                xadj=g.xadj[first : last + 1] - lo,
                adjncy=local_dst,
                adjwgt=g.adjwgt[lo:hi],
                vwgt=g.vwgt[gids],
                global_ids=gids,
                ghost_owner=ghost_owner,
            )
        )
        ghost_lists.append((ghosts, ghost_owner))

    plans: list[dict[int, np.ndarray]] = [{} for _ in range(pe_count)]
    for q, (ghosts, owners) in enumerate(ghost_lists):
        for p in np.unique(owners).tolist():
            plans[p][q] = ghosts[owners == p] - vtxdist[p]
    lgs = [LocalGraph(**kw, send_plan=plans[kw["pe"]]) for kw in locals_]
    return DistGraph(g, vtxdist, lgs, engine or Engine(pe_count))


@dataclass(eq=False)
class PEState:
    blocks: np.ndarray  # owned + ghosts
    block_weights: np.ndarray  # replicated
    locked: np.ndarray  # owned only


@dataclass
class GhostGains:
    present: np.ndarray
    gain: np.ndarray
    target: np.ndarray


class DistPartition:
    """Per-PE block ids and replicated block weights of one distributed partition."""

    def __init__(self, dg: DistGraph, k: int, epsilon, states: list[PEState]):
        self.dg = dg
        self.k = k
        self.epsilon = as_fraction(epsilon)
        self.states = states
        self.total_weight = dg.graph.total_vertex_weight
        self.l_max: Fraction = l_max(self.total_weight, k, self.epsilon)
        self.max_block_weight = max_block_weight(self.total_weight, k, self.epsilon)
        self.recompute_block_weights()
        self.cut = self.compute_cut()

    @classmethod
    def from_assignment(cls, dg: DistGraph, assignment, k: int, epsilon=0.03) -> "DistPartition":
        assignment = np.asarray(assignment, dtype=np.int64)
        if assignment.shape != (dg.graph.n,):
            raise ValueError("assignment must cover every vertex")
        states = []
        for lg in dg.locals:
            blocks = assignment[lg.global_ids].copy()
            states.append(PEState(blocks, np.zeros(k, dtype=np.int64), np.zeros(lg.n_owned, dtype=bool)))
        return cls(dg, k, epsilon, states)

    # -- replicated state ------------------------------------------------------

    @property
    def block_weights(self) -> np.ndarray:
        return self.states[0].block_weights

    def is_balanced(self) -> bool:
        return bool(np.all(self.block_weights <= self.max_block_weight))

    def overloaded_mask(self) -> np.ndarray:
        return self.block_weights > self.max_block_weight

    def overload_report(self) -> OverloadReport:
        return overloads(self.block_weights, self.l_max)

    def total_overload(self) -> Fraction:
        excess = self.block_weights[self.overloaded_mask()]
        return Fraction(int(excess.sum())) - len(excess) * self.l_max

    def imbalance(self) -> float:
        return float(self.block_weights.max()) * self.k / self.total_weight - 1.0

    # -- distributed computations ------------------------------------------------

    def recompute_block_weights(self) -> None:
        local = self.dg.engine.run(
            lambda p: np.bincount(
                self.states[p].blocks[: self.dg.locals[p].n_owned],
                weights=self.dg.locals[p].vwgt[: self.dg.locals[p].n_owned],
                minlength=self.k,
            ).astype(np.int64)
        )
        for st, w in zip(self.states, self.dg.engine.allreduce_sum(local)):
            st.block_weights = w

    def compute_cut(self) -> int:
        def local_cut(p):
            lg, b = self.dg.locals[p], self.states[p].blocks
            return np.array([lg.adjwgt[b[lg.src] != b[lg.adjncy]].sum()], dtype=np.int64)

        total = self.dg.engine.allreduce_sum(self.dg.engine.run(local_cut))[0]
        return int(total[0]) // 2

    def gather(self) -> np.ndarray:
        return np.concatenate([st.blocks[: lg.n_owned] for st, lg in zip(self.states, self.dg.locals)])

    def snapshot(self):
        return [st.blocks[: lg.n_owned].copy() for st, lg in zip(self.states, self.dg.locals)], self.cut

    def restore(self, snap) -> None:
        owned, cut = snap
        for st, blocks in zip(self.states, owned):
            st.blocks[: len(blocks)] = blocks
        sync_ghost_blocks(self.dg, self)
        self.recompute_block_weights()
        self.cut = cut

    def apply_moves(self, moves: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        """Apply ``moves[p] = (owned local ids, target blocks)`` simultaneously.

        Synchronizes ghosts, re-aggregates block weights and updates the cut
        incrementally. Returns the per-block weight change.
        """
        dg = self.dg
        old_blocks = [st.blocks.copy() for st in self.states]

        def local_apply(p):
            vs, targets = moves[p]
            st, lg = self.states[p], dg.locals[p]
            vs = np.asarray(vs, dtype=np.int64)
            targets = np.asarray(targets, dtype=np.int64)
            c = lg.vwgt[vs]
            delta = np.bincount(targets, weights=c, minlength=self.k) - np.bincount(st.blocks[vs], weights=c, minlength=self.k)
            st.blocks[vs] = targets
            changed = np.zeros(lg.n_owned, dtype=bool)
            changed[vs] = True
            return delta.astype(np.int64), changed

        results = dg.engine.run(local_apply)
        sync_ghost_blocks(dg, self, changed=[r[1] for r in results])
        deltas = dg.engine.allreduce_sum([r[0] for r in results])
        for st, d in zip(self.states, deltas):
            st.block_weights = st.block_weights + d

        def local_cut_delta(p):
            lg, new, old = dg.locals[p], self.states[p].blocks, old_blocks[p]
            changed = new != old
            arcs = changed[lg.src] | changed[lg.adjncy]
            s, t, w = lg.src[arcs], lg.adjncy[arcs], lg.adjwgt[arcs]
            diff = (new[s] != new[t]).astype(np.int64) - (old[s] != old[t]).astype(np.int64)
            return np.array([int((w * diff).sum())], dtype=np.int64)

        total = dg.engine.allreduce_sum(dg.engine.run(local_cut_delta))[0]
        self.cut += int(total[0]) // 2
        return deltas[0]


def sync_ghost_blocks(dg: DistGraph, dp: DistPartition, changed=None) -> None:
    """Overwrite every ghost's block id with its owner's current assignment.

    ``changed[p]`` (owned mask) restricts the messages to vertices that moved.
    """
    if dg.pe_count == 1:
        dg.engine.supersteps += 1
        return

    def outbox(p):
        lg, blocks = dg.locals[p], dp.states[p].blocks
        box = {}
        for q, ids in lg.send_plan.items():
            if changed is not None:
                ids = ids[changed[p][ids]]
            box[q] = (lg.global_ids[ids], blocks[ids])
        return box

    inboxes = dg.engine.exchange(dg.engine.run(outbox))

    def deliver(q):
        if len(inboxes[q][1]):
            _, gids, blocks = inboxes[q]
            dp.states[q].blocks[dg.locals[q].to_local(gids)] = blocks

    dg.engine.run(deliver)


def exchange_interface_gains(dg: DistGraph, candidates) -> list[GhostGains]:
    """Send ``(gain, target)`` of interface candidates to their replicas.

    ``candidates[p]`` needs ``vertices`` (owned local ids), ``gains`` and
    ``targets``. Returns, per PE, ghost-indexed arrays; ghosts that are not
    candidates have ``present == False``.
    """

    def outbox(p):
        lg, cand = dg.locals[p], candidates[p]
        if not lg.send_plan:
            return {}
        gain = np.zeros(lg.n_owned, dtype=np.int64)
        target = np.full(lg.n_owned, -1, dtype=np.int64)
        gain[cand.vertices] = cand.gains
        target[cand.vertices] = cand.targets
        box = {}
        for q, ids in lg.send_plan.items():
            ids = ids[target[ids] >= 0]
            box[q] = (lg.global_ids[ids], gain[ids], target[ids])
        return box

    inboxes = dg.engine.exchange(dg.engine.run(outbox)) if dg.pe_count > 1 else [None]

    def deliver(q):
        lg = dg.locals[q]
        out = GhostGains(
            np.zeros(lg.n_ghost, dtype=bool),
            np.zeros(lg.n_ghost, dtype=np.int64),
            np.full(lg.n_ghost, -1, dtype=np.int64),
        )
        if inboxes[q] is not None and len(inboxes[q][1]):
            _, gids, gains, targets = inboxes[q]
            idx = lg.to_local(gids) - lg.n_owned
            out.present[idx] = True
            out.gain[idx] = gains
            out.target[idx] = targets
        return out

    return dg.engine.run(deliver)
