"""Multilevel driver: coarsening, initial partitioning and per-level refinement."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .dist import DistGraph, DistPartition, Engine, distribute, exchange_interface_gains
from .graph import Graph, arc_ranges, edge_cut
from .jet import Candidates, connection_matrix, jet_iteration
from .partition import Partition, as_fraction
from .rebalance import Rebalancer
from .rng import uniform

log = logging.getLogger(__name__)

_LP_STREAM_SALT = 0x4C50  # keeps label-propagation batches independent of rebalancing coins


@dataclass
class JetConfig:
    rounds: int = 4  # t
    tau_start: float = 0.75  # tau_0
    tau_end: float = 0.25  # tau_1
    patience: int = 12
    refiner: str = "jet"
    seed: int = 0
    alpha: float = 1.1
    pe_count: int = 1
    lp_rounds: int = 5
    ip_repetitions: int = 8
    trigger: float = 0.1
    max_rebalance_iterations: int = 64
    max_admissions: int = 8
    coarsening_limit: int = 160  # stop coarsening at limit * k vertices
    min_shrink: float = 0.95

    def __post_init__(self):
        if self.refiner not in ("lp", "jet"):
            raise ValueError("refiner must be 'lp' or 'jet'")
        if not 0 <= self.tau_end <= self.tau_start <= 1:
            raise ValueError("temperatures must satisfy 0 <= tau_end <= tau_start <= 1")
        if self.rounds < 1 or self.patience < 1 or self.pe_count < 1:
            raise ValueError("rounds, patience and pe_count must be positive")
        if not self.alpha > 1:
            raise ValueError("alpha must exceed 1")

    def temperatures(self) -> list[float]:
        """``tau_i = tau_0 + (i / t) (tau_1 - tau_0)`` for ``i = 0..t-1``."""
        t0, t1 = as_fraction(self.tau_start), as_fraction(self.tau_end)
        return [float(t0 + Fraction(i, self.rounds) * (t1 - t0)) for i in range(self.rounds)]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "JetConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "JetConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


# -- coarsening ----------------------------------------------------------------


@dataclass
class Hierarchy:
    """``graphs[0]`` is the input; ``maps[i]`` sends vertices of ``graphs[i]`` to ``graphs[i + 1]``."""

    graphs: list[Graph]
    maps: list[np.ndarray]

    @property
    def coarsest(self) -> Graph:
        return self.graphs[-1]

    def project(self, assignment: np.ndarray, level: int) -> np.ndarray:
        """Lift a partition of ``graphs[level + 1]`` to ``graphs[level]``."""
        return np.asarray(assignment)[self.maps[level]]


def lp_clustering(g: Graph, max_cluster_weight: int, rng: np.random.Generator, rounds: int = 3, batches: int = 8) -> np.ndarray:
    """Size-constrained label propagation clustering.

    Vertices are visited in random order, in batches; inside a batch moves are
    decided against the batch-start labels and admitted per target cluster
    while the cap holds.
    """
    n = g.n
    labels = np.arange(n, dtype=np.int64)
    weight = g.vwgt.copy()
    for _ in range(rounds):
        moved = 0
        for batch in np.array_split(rng.permutation(n), batches):
            arcs, pos = arc_ranges(g.xadj, batch)
            if len(arcs) == 0:
                continue
            key = pos * n + labels[g.adjncy[arcs]]
            uniq, inverse = np.unique(key, return_inverse=True)
            w = np.bincount(inverse, weights=g.adjwgt[arcs])
            upos, ulab = np.divmod(uniq, n)
            v = batch[upos]
            c = g.vwgt[v]
            own = ulab == labels[v]
            own_w = np.zeros(len(batch))
            own_w[upos[own]] = w[own]
            cand = np.flatnonzero(~own & (weight[ulab] + c <= max_cluster_weight))
            if len(cand) == 0:
                continue
            order = cand[np.lexsort((rng.random(len(cand)), -w[cand], upos[cand]))]
            _, first = np.unique(upos[order], return_index=True)
            best = order[first]
            best = best[w[best] > own_w[upos[best]]]
            if len(best) == 0:
                continue
            targets, movers = ulab[best], v[best]
            by_target = np.argsort(targets, kind="stable")
            targets, movers = targets[by_target], movers[by_target]
            cw = g.vwgt[movers]
            csum = np.cumsum(cw)
            group_start = np.searchsorted(targets, targets, side="left")
            inflow = csum - np.concatenate([[0], csum])[group_start]
            ok = weight[targets] + inflow <= max_cluster_weight
            targets, movers, cw = targets[ok], movers[ok], cw[ok]
            np.subtract.at(weight, labels[movers], cw)
            np.add.at(weight, targets, cw)
            labels[movers] = targets
            moved += len(movers)
        if moved == 0:
            break
    return labels


def contract(g: Graph, labels: np.ndarray) -> tuple[Graph, np.ndarray]:
    uniq, mapping = np.unique(labels, return_inverse=True)
    nc = len(uniq)
    vwgt = np.bincount(mapping, weights=g.vwgt, minlength=nc).astype(np.int64)
    coarse = Graph.from_arcs(nc, mapping[g.arc_sources], mapping[g.adjncy], g.adjwgt, vwgt)
    return coarse, mapping.astype(np.int64)


def coarsen(g: Graph, k: int, seed: int = 0, limit: int = 160, min_shrink: float = 0.95) -> Hierarchy:
    if k < 2:
        raise ValueError("coarsening needs k >= 2")
    rng = np.random.default_rng([seed, 0xC0A])
    cap = max(1, g.total_vertex_weight // (4 * k))
    graphs, maps = [g], []
    cur = g
    while cur.n > limit * k:
        coarse, mapping = contract(cur, lp_clustering(cur, cap, rng))
        if coarse.n > min_shrink * cur.n:
            break
        graphs.append(coarse)
        maps.append(mapping)
        cur = coarse
    return Hierarchy(graphs, maps)


# -- initial partitioning -----------------------------------------------------


def _bfs_order(adj: csr_matrix, rng: np.random.Generator) -> np.ndarray:
    """BFS order from a pseudo-peripheral vertex, component after component."""
    n = adj.shape[0]
    _, comp = connected_components(adj, directed=False)
    start = int(rng.integers(n))
    far = breadth_first_order(adj, start, directed=False, return_predecessors=False)[-1]
    seen = np.zeros(n, dtype=bool)
    parts = []
    for root in [far, *np.argsort(comp, kind="stable").tolist()]:
        if seen[root]:
            continue
        o = breadth_first_order(adj, root, directed=False, return_predecessors=False)
        seen[o] = True
        parts.append(o)
    return np.concatenate(parts)


def _recursive_bisection(adj: csr_matrix, vwgt: np.ndarray, vertices: np.ndarray, k: int, offset: int, out: np.ndarray, rng):
    if k == 1 or len(vertices) <= 1:
        out[vertices] = offset
        return
    k0 = k // 2
    order = vertices[_bfs_order(adj[vertices][:, vertices], rng)]
    cum = np.cumsum(vwgt[order])
    target = cum[-1] * k0 / k
    split = int(np.argmin(np.abs(cum - target))) + 1
    split = min(max(split, 1), len(order) - 1)
    _recursive_bisection(adj, vwgt, order[:split], k0, offset, out, rng)
    _recursive_bisection(adj, vwgt, order[split:], k - k0, offset + k0, out, rng)


def initial_partition(g: Graph, k: int, epsilon=0.03, seed: int = 0, repetitions: int = 8, rebalancer: Rebalancer | None = None) -> Partition:
    """Best of ``repetitions`` BFS-grown recursive bisections, each rebalanced.

    Ranked by residual overload first, then cut.
    """
    if k == 1:
        return Partition.from_assignment(g, np.zeros(g.n, dtype=np.int64), 1, epsilon)
    rng = np.random.default_rng([seed, 0x1B])
    adj = csr_matrix((g.adjwgt, g.adjncy, g.xadj), shape=(g.n, g.n))
    dg = distribute(g, 1)
    rebalancer = rebalancer or Rebalancer(seed)
    best, best_key = None, None
    for _ in range(repetitions):
        out = np.zeros(g.n, dtype=np.int64)
        _recursive_bisection(adj, g.vwgt, np.arange(g.n), k, 0, out, rng)
        dp = DistPartition.from_assignment(dg, out, k, epsilon)
        rebalancer(dg, dp)
        key = (dp.total_overload(), dp.cut)
        if best_key is None or key < best_key:
            best, best_key = dp.gather(), key
    return Partition.from_assignment(g, best, k, epsilon)


# -- refinement ---------------------------------------------------------------


def _lp_candidates(lg, st, vs, k, max_weight):
    """Positive-gain moves to blocks that can take the vertex."""
    if len(vs) == 0:
        return Candidates.empty()
    conn = connection_matrix(lg, st.blocks, vs, k)
    rows = np.arange(len(vs))
    src = st.blocks[vs]
    own = conn[rows, src]
    feasible = st.block_weights[None, :] + lg.vwgt[vs][:, None] <= max_weight
    feasible[rows, src] = False
    masked = np.where(feasible, conn, -1)
    target = np.argmax(masked, axis=1)
    gain = masked[rows, target] - own
    keep = feasible[rows, target] & (gain > 0)
    return Candidates(vs[keep], target[keep], gain[keep])


def _local_maxima(dg, dp, candidates):
    """Keep candidates whose priority beats every neighboring candidate."""
    ghost = exchange_interface_gains(dg, candidates)

    def local(p):
        lg, cand, gg = dg.locals[p], candidates[p], ghost[p]
        if len(cand) == 0:
            return cand
        in_m = np.concatenate([np.zeros(lg.n_owned, dtype=bool), gg.present])
        gain = np.concatenate([np.zeros(lg.n_owned, dtype=np.int64), gg.gain])
        in_m[cand.vertices] = True
        gain[cand.vertices] = cand.gains
        arcs, pos = arc_ranges(lg.xadj, cand.vertices)
        v, u = cand.vertices[pos], lg.adjncy[arcs]
        gid = lg.global_ids
        beaten = in_m[u] & ((gain[u] > gain[v]) | ((gain[u] == gain[v]) & (gid[u] > gid[v])))
        lost = np.zeros(len(cand), dtype=bool)
        lost[pos[beaten]] = True
        return cand.subset(~lost)

    return dg.engine.run(local)


def _enforce_capacity(dg, dp, moves):
    """Drop moves so that no target block exceeds ``L_max``.

    Targets whose total demand fits are untouched; for the others the root
    admits moves by priority.
    """
    k = dp.k
    demand = dg.engine.allreduce_sum(
        dg.engine.run(lambda p: np.bincount(moves[p].targets, weights=dg.locals[p].vwgt[moves[p].vertices], minlength=k).astype(np.int64))
    )[0]
    capacity = dp.max_block_weight - dp.block_weights
    tight = demand > capacity
    if not tight.any():
        return moves

    def report(p):
        cand, lg = moves[p], dg.locals[p]
        sel = tight[cand.targets]
        return lg.global_ids[cand.vertices[sel]], cand.gains[sel], cand.targets[sel], lg.vwgt[cand.vertices[sel]]

    reports = dg.engine.gather(dg.engine.run(report))
    gids, gains, targets, weights = (np.concatenate([r[i] for r in reports]) for i in range(4))
    live = capacity.copy()
    accepted = []
    for i in np.lexsort((-gids, -gains)).tolist():
        u, c = int(targets[i]), int(weights[i])
        if c <= live[u]:
            live[u] -= c
            accepted.append(gids[i])
    accepted = np.asarray(accepted, dtype=np.int64)

    def keep(p):
        cand, lg = moves[p], dg.locals[p]
        ok = ~tight[cand.targets] | np.isin(lg.global_ids[cand.vertices], accepted)
        return cand.subset(ok)

    return dg.engine.run(keep)


def lp_refine(dg: DistGraph, dp: DistPartition, max_rounds: int = 5, seed: int = 0, batches: int = 8) -> int:
    """Balance-preserving label propagation; returns the number of moves.

    Each round visits every owned vertex once, in ``batches`` supersteps keyed
    by a hash of the global id. Within a superstep only positive-gain moves
    that beat all neighboring candidates are applied, so the moves are
    independent and the cut drops by exactly their summed gain.
    """
    total = 0
    if dp.k < 2:
        return 0
    for r in range(max_rounds):
        moved = 0
        batch_of = [
            np.floor(uniform(seed ^ _LP_STREAM_SALT, r, lg.global_ids[: lg.n_owned]) * batches).astype(np.int64)
            for lg in dg.locals
        ]
        for b in range(batches):
            cands = dg.engine.run(
                lambda p: _lp_candidates(dg.locals[p], dp.states[p], np.flatnonzero(batch_of[p] == b), dp.k, dp.max_block_weight)
            )
            kept = _enforce_capacity(dg, dp, _local_maxima(dg, dp, cands))
            count = int(dg.engine.allreduce_sum([np.array([len(c)]) for c in kept])[0][0])
            if count:
                dp.apply_moves([(c.vertices, c.targets) for c in kept])
                moved += count
        total += moved
        if moved == 0:
            break
    return total


@dataclass
class RoundStats:
    tau: float
    repetitions: int = 0
    moves: int = 0
    input_cut: int = 0
    output_cut: int = 0
    input_balanced: bool = True
    output_balanced: bool = True


def _clear_locks(dp: DistPartition) -> None:
    for st in dp.states:
        st.locked[:] = False


def jet_round(dg: DistGraph, dp: DistPartition, tau: float, cfg: JetConfig, rebalancer: Rebalancer) -> RoundStats:
    """Repeat Jet iteration + rebalancing until ``patience`` repetitions in a
    row fail to improve; leave ``dp`` at the best partition seen.

    Candidates are ranked by (residual overload, cut), so for balanced input
    this is the lowest-cut balanced partition, the input included.
    """
    stats = RoundStats(tau, input_cut=dp.cut, input_balanced=dp.is_balanced())
    _clear_locks(dp)
    best = dp.snapshot()
    best_key = (dp.total_overload(), dp.cut)
    fails = 0
    prev_moved = 0
    while fails < cfg.patience:
        moved = jet_iteration(dg, dp, tau)
        rb = rebalancer(dg, dp)
        stats.repetitions += 1
        stats.moves += moved
        key = (dp.total_overload(), dp.cut)
        if key < best_key:
            best, best_key, fails = dp.snapshot(), key, 0
        else:
            fails += 1
        if moved == 0 and prev_moved == 0 and rb.coordinated_epochs == 0:
            # same state, no locks before and after: the remaining repetitions are identical
            break
        prev_moved = moved
    dp.restore(best)
    _clear_locks(dp)
    stats.output_cut = dp.cut
    stats.output_balanced = dp.is_balanced()
    return stats


# -- driver -----------------------------------------------------------------


@dataclass
class PartitionResult:
    partition: Partition
    cut: int
    imbalance: float
    balanced: bool
    residual_overload: Fraction
    temperatures: list[float]
    timings: dict[str, float]
    level_sizes: list[int]
    rounds: list[RoundStats] = field(default_factory=list)
    rebalance: dict = field(default_factory=dict)

    @property
    def assignment(self) -> np.ndarray:
        return self.partition.assignment

    def metrics(self) -> dict:
        return {
            "cut": self.cut,
            "imbalance": round(self.imbalance, 6),
            "balanced": self.balanced,
            "residual_overload": float(self.residual_overload),
            "k": self.partition.k,
            "epsilon": float(self.partition.epsilon),
            "levels": len(self.level_sizes),
            "coarsest_n": self.level_sizes[-1],
            "temperatures": self.temperatures,
            "coordinated_epochs": self.rebalance.get("coordinated_epochs", 0),
            "probabilistic_rounds": self.rebalance.get("probabilistic_rounds", 0),
            **{f"time_{name}": round(t, 6) for name, t in self.timings.items()},
        }


def partition(g: Graph, k: int, epsilon=0.03, cfg: JetConfig | None = None) -> PartitionResult:
    cfg = cfg or JetConfig()
    if k < 1:
        raise ValueError("k must be positive")
    if as_fraction(epsilon) < 0:
        raise ValueError("epsilon must be non-negative")
    timings = {}
    start = time.perf_counter()
    taus = cfg.temperatures() if cfg.refiner == "jet" else []
    if k == 1:
        p = Partition.from_assignment(g, np.zeros(g.n, dtype=np.int64), 1, epsilon)
        timings.update(coarsening=0.0, initial=0.0, refinement=0.0, total=time.perf_counter() - start)
        return PartitionResult(p, 0, p.imbalance(), True, Fraction(0), taus, timings, [g.n])

    hier = coarsen(g, k, cfg.seed, cfg.coarsening_limit, cfg.min_shrink)
    timings["coarsening"] = time.perf_counter() - start

    t = time.perf_counter()
    rebalancer = Rebalancer(cfg.seed, cfg.alpha, cfg.trigger, cfg.max_rebalance_iterations, cfg.max_admissions)
    assignment = initial_partition(hier.coarsest, k, epsilon, cfg.seed, cfg.ip_repetitions, rebalancer).assignment
    timings["initial"] = time.perf_counter() - t

    t = time.perf_counter()
    rounds = []
    for level in range(len(hier.graphs) - 1, -1, -1):
        lg = hier.graphs[level]
        if level < len(hier.graphs) - 1:
            assignment = hier.project(assignment, level)
        pes = min(cfg.pe_count, lg.n)
        dg = distribute(lg, pes, Engine(pes))
        dp = DistPartition.from_assignment(dg, assignment, k, epsilon)
        if not dp.is_balanced():
            rebalancer(dg, dp)
        lp_refine(dg, dp, cfg.lp_rounds, cfg.seed + level)
        if cfg.refiner == "jet":
            for tau in taus:
                rounds.append(jet_round(dg, dp, tau, cfg, rebalancer))
        assignment = dp.gather()
        log.debug("level %d: n=%d cut=%d", level, lg.n, dp.cut)
    timings["refinement"] = time.perf_counter() - t
    timings["total"] = time.perf_counter() - start

    p = Partition.from_assignment(g, assignment, k, epsilon)
    report = p.overload_report()
    tot = rebalancer.totals
    return PartitionResult(
        p,
        edge_cut(g, assignment),
        p.imbalance(),
        p.is_balanced(),
        report.total_overload,
        taus,
        timings,
        [h.n for h in hier.graphs],
        rounds,
        {"coordinated_epochs": tot.coordinated_epochs, "probabilistic_rounds": tot.probabilistic_rounds, "unmovable": tot.unmovable},
    )
