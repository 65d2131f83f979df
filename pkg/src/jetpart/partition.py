"""Block assignment, block weights and balance queries."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .graph import Graph, edge_cut


def as_fraction(x) -> Fraction:
    """Exact rational for a user-facing real such as ``0.03`` (decimal, not binary)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


def l_max(total_weight: int, k: int, epsilon) -> Fraction:
    return (1 + as_fraction(epsilon)) * total_weight / k


def max_block_weight(total_weight: int, k: int, epsilon) -> int:
    """Largest integral block weight satisfying ``w <= L_max``."""
    lm = l_max(total_weight, k, epsilon)
    return lm.numerator // lm.denominator


@dataclass(frozen=True)
class OverloadReport:
    per_block: tuple[Fraction, ...]
    total_overload: Fraction

    @property
    def balanced(self) -> bool:
        return self.total_overload == 0


def overloads(block_weights, lmax: Fraction) -> OverloadReport:
    per = tuple(max(Fraction(0), int(w) - lmax) for w in block_weights)
    return OverloadReport(per, sum(per, Fraction(0)))


@dataclass
class Partition:
    """A k-way partition of ``g``. Blocks are numbered ``0..k-1``."""

    graph: Graph
    k: int
    epsilon: Fraction
    assignment: np.ndarray
    block_weights: np.ndarray

    @classmethod
    def from_assignment(cls, g: Graph, assignment, k: int, epsilon=0.03) -> "Partition":
        assignment = np.array(assignment, dtype=np.int64)
        if assignment.shape != (g.n,):
            raise ValueError("assignment must cover every vertex")
        if k < 1:
            raise ValueError("k must be positive")
        if g.n and (assignment.min() < 0 or assignment.max() >= k):
            raise ValueError("block id out of range")
        epsilon = as_fraction(epsilon)
        if epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        weights = np.bincount(assignment, weights=g.vwgt, minlength=k).astype(np.int64)
        return cls(g, k, epsilon, assignment, weights)

    @property
    def total_weight(self) -> int:
        return self.graph.total_vertex_weight

    @property
    def l_max(self) -> Fraction:
        return l_max(self.total_weight, self.k, self.epsilon)

    @property
    def max_block_weight(self) -> int:
        return max_block_weight(self.total_weight, self.k, self.epsilon)

    def is_balanced(self) -> bool:
        return bool(np.all(self.block_weights <= self.max_block_weight))

    def overload_report(self) -> OverloadReport:
        return overloads(self.block_weights, self.l_max)

    def imbalance(self) -> float:
        return float(self.block_weights.max()) * self.k / self.total_weight - 1.0

    def cut(self) -> int:
        return edge_cut(self.graph, self.assignment)

    def apply_move(self, v: int, target: int) -> None:
        """Move ``v`` to ``target`` without any balance check."""
        if not 0 <= target < self.k:
            raise ValueError(f"target block {target} out of range 0..{self.k - 1}")
        source = int(self.assignment[v])
        if source == target:
            raise ValueError(f"vertex {v} already in block {target}")
        c = int(self.graph.vwgt[v])
        self.assignment[v] = target
        self.block_weights[source] -= c
        self.block_weights[target] += c

    def recomputed_block_weights(self) -> np.ndarray:
        return np.bincount(self.assignment, weights=self.graph.vwgt, minlength=self.k).astype(np.int64)

    def copy(self) -> "Partition":
        return Partition(self.graph, self.k, self.epsilon, self.assignment.copy(), self.block_weights.copy())


def conn(g: Graph, p: Partition, v: int, block: int) -> int:
    """Summed edge weight between ``v`` and the vertices of ``block``."""
    nbrs, wts = g.neighbors(v)
    return int(wts[p.assignment[nbrs] == block].sum())


def write_partition(path, assignment) -> None:
    Path(path).write_text("".join(f"{b}\n" for b in np.asarray(assignment).tolist()))


def read_partition(path) -> np.ndarray:
    return np.array([int(line) for line in Path(path).read_text().split()], dtype=np.int64)
