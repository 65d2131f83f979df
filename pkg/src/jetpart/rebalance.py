"""Restoring the balance constraint after unconstrained moves.

Two move procedures are combined:

* a coordinated epoch, where the root PE admits a few of the globally best
  relocations per overloaded block against live target capacities; it never
  overloads a target, but moves at most ``max_admissions`` vertices per block;
* a probabilistic round, where every PE sorts the vertices of overloaded
  blocks into exponentially spaced relative-gain buckets, the bucket weights
  are all-reduced to find per-block cut-off buckets, and every vertex below its
  cut-off moves to its target ``u`` with probability
  ``p_u = (L_max - c(V_u)) / W_u``.

:class:`Rebalancer` runs coordinated epochs and adds a probabilistic round
whenever an epoch removes less than ``trigger`` (10%) of the total overload.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dist import DistGraph, DistPartition
from .jet import connection_matrix
from .partition import as_fraction
from .rng import uniform

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 1.1


def bucket_indices(r, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Vectorized :func:`bucket_index`."""
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros(r.shape, dtype=np.int64)
    neg = r < 0
    if not np.any(neg):
        return out
    x = np.log1p(-r[neg]) / np.log(alpha)
    m = np.ceil(x)
    # float logs can land on the wrong side of an exact power of alpha
    near = np.abs(x - np.rint(x)) <= 1e-9 * np.maximum(1.0, np.abs(x))
    if np.any(near):
        rn = r[neg]
        for i in np.flatnonzero(near):
            m[i] = _exact_ceil_log(float(rn[i]), alpha, int(np.rint(x[i])))
    out[neg] = 1 + m.astype(np.int64)
    return out


def _exact_ceil_log(r: float, alpha: float, guess: int) -> int:
    """Smallest integer m with alpha**m >= 1 - r, in exact rational arithmetic.

    Both reals are read as their shortest decimal form, like epsilon.
    """
    a = as_fraction(alpha)
    y = 1 - as_fraction(r)
    m = max(guess, 0)
    while m > 0 and a ** (m - 1) >= y:
        m -= 1
    while a**m < y:
        m += 1
    return m


def bucket_index(r: float, alpha: float = DEFAULT_ALPHA) -> int:
    """0 for ``r >= 0``, else ``1 + ceil(log_alpha(1 - r))``."""
    return int(bucket_indices(np.array([r]), alpha)[0])


def relative_gain(gain, weight):
    gain = np.asarray(gain, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    return np.where(gain > 0, gain * weight, gain / weight)


@dataclass
class Relocations:
    """Vertices of overloaded blocks with their best feasible target (one PE)."""

    vertices: np.ndarray
    sources: np.ndarray
    targets: np.ndarray
    gains: np.ndarray
    rel: np.ndarray
    weights: np.ndarray
    unmovable: int = 0
    buckets: np.ndarray | None = None

    def __len__(self):
        return len(self.vertices)

    def subset(self, keep) -> "Relocations":
        return Relocations(
            self.vertices[keep],
            self.sources[keep],
            self.targets[keep],
            self.gains[keep],
            self.rel[keep],
            self.weights[keep],
            0,
            None if self.buckets is None else self.buckets[keep],
        )


def relocation_candidates(lg, blocks, block_weights, max_weight: int, k: int) -> Relocations:
    """Best relocation of every owned vertex in an overloaded block.

    Feasible targets are blocks ``u`` with ``c(V_u) + c(v) <= L_max`` under
    ``block_weights``; the best one maximizes relative gain, ties to the lowest
    block id. Vertices without a feasible target are only counted.
    """
    overloaded = block_weights > max_weight
    owned = blocks[: lg.n_owned]
    vs = np.flatnonzero(overloaded[owned])
    if len(vs) == 0:
        z = np.zeros(0, dtype=np.int64)
        return Relocations(z, z, z, z, np.zeros(0), z)
    conn = connection_matrix(lg, blocks, vs, k)
    src = owned[vs]
    c = lg.vwgt[vs]
    rows = np.arange(len(vs))
    own = conn[rows, src]
    feasible = (block_weights[None, :] + c[:, None]) <= max_weight
    feasible[rows, src] = False
    gain = conn - own[:, None]
    rel = relative_gain(gain, c[:, None])
    rel = np.where(feasible, rel, -np.inf)
    target = np.argmax(rel, axis=1)
    ok = feasible[rows, target]
    return Relocations(
        vs[ok],
        src[ok],
        target[ok],
        gain[rows, target][ok],
        rel[rows, target][ok],
        c[ok],
        int((~ok).sum()),
    )


@dataclass
class BucketTable:
    overloaded: np.ndarray
    local: list[Relocations]
    local_weights: list[np.ndarray]
    global_weights: np.ndarray | None = None
    cutoff: np.ndarray | None = None
    uncovered: np.ndarray | None = None
    candidate_weight: np.ndarray | None = None  # W_u
    probability: np.ndarray | None = None  # p_u, nan where W_u == 0

    @property
    def unmovable(self) -> int:
        return sum(r.unmovable for r in self.local)


def build_buckets(dg: DistGraph, dp: DistPartition, alpha: float = DEFAULT_ALPHA) -> BucketTable:
    """PE-local buckets of the round-start state."""
    bw = dp.block_weights.copy()
    overloaded = bw > dp.max_block_weight

    def local(p):
        rel = relocation_candidates(dg.locals[p], dp.states[p].blocks, bw, dp.max_block_weight, dp.k)
        rel.buckets = bucket_indices(rel.rel, alpha)
        return rel

    relocs = dg.engine.run(local)
    n_buckets = 1 + dg.engine.allreduce_max([int(r.buckets.max()) if len(r) else 0 for r in relocs])

    def weights(p):
        r = relocs[p]
        flat = np.bincount(r.sources * n_buckets + r.buckets, weights=r.weights, minlength=dp.k * n_buckets)
        return flat.astype(np.int64).reshape(dp.k, n_buckets)

    return BucketTable(overloaded, relocs, dg.engine.run(weights))


def cutoff_bucket(bucket_weights, excess) -> int | None:
    """Smallest ``j`` whose prefix ``sum(bucket_weights[:j])`` covers ``excess``; None if none does."""
    excess = as_fraction(excess)
    prefix = 0
    for j, w in enumerate(np.asarray(bucket_weights).tolist()):
        if prefix >= excess:
            return j
        prefix += int(w)
    return len(bucket_weights) if prefix >= excess else None


def move_probability(lmax, block_weight: int, candidate_weight: int) -> float:
    """``p_u = (L_max - c(V_u)) / W_u``, clamped to 1."""
    if candidate_weight <= 0:
        raise ValueError("no candidate weight targets this block")
    return min(1.0, float((as_fraction(lmax) - block_weight) / candidate_weight))


def compute_cutoffs_and_probs(dg: DistGraph, dp: DistPartition, table: BucketTable) -> BucketTable:
    """All-reduce bucket weights, then derive cut-off buckets and move probabilities."""
    k = dp.k
    bw = dp.block_weights
    table.global_weights = dg.engine.allreduce_sum(table.local_weights)[0]
    n_buckets = table.global_weights.shape[1]
    cutoff = np.zeros(k, dtype=np.int64)
    uncovered = np.zeros(k, dtype=bool)
    for o in np.flatnonzero(table.overloaded):
        j = cutoff_bucket(table.global_weights[o], int(bw[o]) - dp.l_max)
        if j is None:
            cutoff[o], uncovered[o] = n_buckets, True
        else:
            cutoff[o] = j
    table.cutoff, table.uncovered = cutoff, uncovered

    def local_w(p):
        r = table.local[p]
        below = r.buckets < cutoff[r.sources]
        return np.bincount(r.targets[below], weights=r.weights[below], minlength=k).astype(np.int64)

    w = dg.engine.allreduce_sum(dg.engine.run(local_w))[0]
    prob = np.full(k, np.nan)
    for u in np.flatnonzero(w > 0):
        prob[u] = move_probability(dp.l_max, int(bw[u]), int(w[u]))
    table.candidate_weight, table.probability = w, prob
    if uncovered.any():
        log.debug("bucketed weight cannot cover the excess of blocks %s", np.flatnonzero(uncovered).tolist())
    return table


def probabilistic_round(dg: DistGraph, dp: DistPartition, table: BucketTable, seed: int, round_id: int) -> np.ndarray:
    """Move every below-cut-off vertex to its target with probability ``p_target``.

    Coins are keyed by ``(seed, round_id, global vertex id)``.
    """

    def local(p):
        r = table.local[p]
        if len(r) == 0:
            return r.vertices, r.targets
        below = r.buckets < table.cutoff[r.sources]
        coin = uniform(seed, round_id, dg.locals[p].global_ids[r.vertices])
        move = below & (coin < np.nan_to_num(table.probability[r.targets], nan=0.0))
        return r.vertices[move], r.targets[move]

    return dp.apply_moves(dg.engine.run(local))


def coordinated_round(dg: DistGraph, dp: DistPartition, max_admissions: int = 8) -> np.ndarray:
    """One centrally coordinated epoch.

    Each PE reports its best ``max_admissions`` relocations per overloaded
    block; the root walks the union in order of decreasing relative gain (ties
    by vertex id) and admits a move while its source is still overloaded, has
    admissions left, and the target stays within ``L_max``.
    """
    k, maxw = dp.k, dp.max_block_weight
    bw = dp.block_weights.copy()
    if not np.any(bw > maxw):
        return np.zeros(k, dtype=np.int64)

    def local(p):
        lg = dg.locals[p]
        r = relocation_candidates(lg, dp.states[p].blocks, bw, maxw, k)
        order = np.lexsort((lg.global_ids[r.vertices], -r.rel, r.sources))
        r = r.subset(order)
        # rank within source block
        starts = np.searchsorted(r.sources, r.sources, side="left")
        rank = np.arange(len(r)) - starts
        r = r.subset(rank < max_admissions)
        return lg.global_ids[r.vertices], r.sources, r.targets, r.rel, r.weights

    reports = dg.engine.gather(dg.engine.run(local))
    gids, sources, targets, rel, weights = (np.concatenate([rep[i] for rep in reports]) for i in range(5))
    order = np.lexsort((gids, -rel))
    live = bw.copy()
    admitted = np.zeros(k, dtype=np.int64)
    chosen = []
    for i in order.tolist():
        o, u, c = int(sources[i]), int(targets[i]), int(weights[i])
        if admitted[o] >= max_admissions or live[o] <= maxw or live[u] + c > maxw:
            continue
        live[o] -= c
        live[u] += c
        admitted[o] += 1
        chosen.append(i)
    chosen = np.array(chosen, dtype=np.int64)
    moved_gids, moved_targets = gids[chosen], targets[chosen]

    owners = dg.owner(moved_gids)

    def outbox(p):
        if p != 0:
            return {}
        return {q: (moved_gids[owners == q], moved_targets[owners == q]) for q in range(dg.pe_count)}

    inboxes = dg.engine.exchange(dg.engine.run(outbox))

    def local_moves(p):
        _, g, t = inboxes[p]
        return dg.locals[p].to_local(g), t

    return dp.apply_moves(dg.engine.run(local_moves))


def needs_probabilistic_round(before, after, trigger=0.1) -> bool:
    """True if overload remains and fell by less than ``trigger`` (relative)."""
    before, after = as_fraction(before), as_fraction(after)
    return after > 0 and (before - after) < as_fraction(trigger) * before


@dataclass
class RebalanceStats:
    coordinated_epochs: int = 0
    probabilistic_rounds: int = 0
    iterations: int = 0
    unmovable: int = 0
    uncovered_blocks: int = 0
    residual_overload: Fraction = Fraction(0)
    history: list = field(default_factory=list)

    @property
    def balanced(self) -> bool:
        return self.residual_overload == 0


class Rebalancer:
    """Coordinated epochs plus probabilistic rounds when progress stalls.

    Keeps a running probabilistic-round counter so that successive rounds of
    one run draw independent coins.
    """

    def __init__(
        self,
        seed: int = 0,
        alpha: float = DEFAULT_ALPHA,
        trigger: float = 0.1,
        max_iterations: int = 64,
        max_admissions: int = 8,
    ):
        self.seed = seed
        self.alpha = alpha
        self.trigger = trigger
        self.max_iterations = max_iterations
        self.max_admissions = max_admissions
        self.round = 0
        self.totals = RebalanceStats()

    def total_overload(self, dp: DistPartition) -> Fraction:
        return dp.total_overload()

    def coordinated_round(self, dg, dp) -> np.ndarray:
        return coordinated_round(dg, dp, self.max_admissions)

    def probabilistic_round(self, dg, dp, stats: RebalanceStats | None = None) -> np.ndarray:
        table = compute_cutoffs_and_probs(dg, dp, build_buckets(dg, dp, self.alpha))
        if stats is not None:
            stats.unmovable += table.unmovable
            stats.uncovered_blocks += int(table.uncovered.sum())
        self.round += 1
        return probabilistic_round(dg, dp, table, self.seed, self.round)

    def rebalance(self, dg: DistGraph, dp: DistPartition) -> RebalanceStats:
        stats = RebalanceStats()
        overload = self.total_overload(dp)
        stats.history.append(overload)
        for _ in range(self.max_iterations):
            if overload == 0:
                break
            stats.iterations += 1
            before = overload
            self.coordinated_round(dg, dp)
            stats.coordinated_epochs += 1
            overload = self.total_overload(dp)
            stats.history.append(overload)
            if needs_probabilistic_round(before, overload, self.trigger):
                self.probabilistic_round(dg, dp, stats)
                stats.probabilistic_rounds += 1
                overload = self.total_overload(dp)
                stats.history.append(overload)
        # finisher: coordinated epochs never create new overload
        while overload > 0:
            before = overload
            self.coordinated_round(dg, dp)
            stats.coordinated_epochs += 1
            overload = self.total_overload(dp)
            stats.history.append(overload)
            if overload >= before:
                break
        stats.residual_overload = overload
        if overload > 0:
            log.info("rebalancing left residual overload %s", float(overload))
        self._accumulate(stats)
        return stats

    __call__ = rebalance

    def _accumulate(self, stats: RebalanceStats) -> None:
        t = self.totals
        t.coordinated_epochs += stats.coordinated_epochs
        t.probabilistic_rounds += stats.probabilistic_rounds
        t.iterations += stats.iterations
        t.unmovable += stats.unmovable
        t.uncovered_blocks += stats.uncovered_blocks


def rebalance(dg: DistGraph, dp: DistPartition, seed: int = 0, **kwargs) -> RebalanceStats:
    return Rebalancer(seed, **kwargs).rebalance(dg, dp)
