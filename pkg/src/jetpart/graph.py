"""Weighted undirected graphs in compressed adjacency (CSR) form.

Vertices are 0-based internally. The METIS/chaco text format is 1-based on
disk; :func:`parse_metis` and :func:`write_metis` translate.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class GraphFormatError(ValueError):
    """Malformed METIS input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def arc_ranges(xadj: np.ndarray, vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Arc indices of ``vertices`` and, per arc, the position of its tail in ``vertices``."""
    vertices = np.asarray(vertices, dtype=np.int64)
    starts = xadj[vertices]
    lens = xadj[vertices + 1] - starts
    total = int(lens.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    pos = np.repeat(np.arange(len(vertices), dtype=np.int64), lens)
    offsets = np.cumsum(lens) - lens
    arcs = np.arange(total, dtype=np.int64) - offsets[pos] + starts[pos]
    return arcs, pos


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable graph; every undirected edge is stored as two arcs."""

    xadj: np.ndarray
    adjncy: np.ndarray
    adjwgt: np.ndarray
    vwgt: np.ndarray

    @property
    def n(self) -> int:
        return len(self.vwgt)

    @property
    def m(self) -> int:
        """Number of undirected edges."""
        return len(self.adjncy) // 2

    @cached_property
    def total_vertex_weight(self) -> int:
        return int(self.vwgt.sum())

    @cached_property
    def arc_sources(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.xadj))

    def degree(self, v: int) -> int:
        return int(self.xadj[v + 1] - self.xadj[v])

    def neighbors(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.xadj[v], self.xadj[v + 1]
        return self.adjncy[lo:hi], self.adjwgt[lo:hi]

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Undirected edges as ``(u, v, w)`` arrays with ``u < v``."""
        src = self.arc_sources
        keep = src < self.adjncy
        return src[keep], self.adjncy[keep], self.adjwgt[keep]

    @classmethod
    def from_arcs(cls, n, src, dst, weights=None, vwgt=None) -> "Graph":
        """Build from directed arcs. Self-loops are dropped and parallel arcs summed.

        Symmetry is not enforced here; see :meth:`from_edges`.
        """
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        weights = np.ones(len(src), dtype=np.int64) if weights is None else np.asarray(weights, dtype=np.int64)
        if vwgt is None:
            vwgt = np.ones(n, dtype=np.int64)
        vwgt = np.asarray(vwgt, dtype=np.int64)
        if n <= 0:
            raise ValueError("graph needs at least one vertex")
        if len(vwgt) != n:
            raise ValueError("vertex weight count does not match n")
        if np.any(vwgt <= 0) or np.any(weights <= 0):
            raise ValueError("weights must be positive integers")
        if len(src) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
            raise ValueError("arc endpoint out of range")
        keep = src != dst
        src, dst, weights = src[keep], dst[keep], weights[keep]
        key = src * n + dst
        uniq, inverse = np.unique(key, return_inverse=True)
        merged = np.bincount(inverse, weights=weights, minlength=len(uniq)).astype(np.int64)
        usrc, udst = np.divmod(uniq, n)
        xadj = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(usrc, minlength=n), out=xadj[1:])
        return cls(xadj, udst.astype(np.int64), merged, vwgt)

    @classmethod
    def from_edges(cls, n, u, v, weights=None, vwgt=None) -> "Graph":
        """Build from undirected edges, each listed once; duplicates are summed."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        w = np.ones(len(u), dtype=np.int64) if weights is None else np.asarray(weights, dtype=np.int64)
        return cls.from_arcs(n, np.concatenate([u, v]), np.concatenate([v, u]), np.concatenate([w, w]), vwgt)

    def is_symmetric(self) -> bool:
        n = self.n
        fwd = self.arc_sources * n + self.adjncy
        bwd = self.adjncy * n + self.arc_sources
        order_f, order_b = np.argsort(fwd, kind="stable"), np.argsort(bwd, kind="stable")
        return bool(
            np.array_equal(fwd[order_f], bwd[order_b])
            and np.array_equal(self.adjwgt[order_f], self.adjwgt[order_b])
        )

    def equivalent(self, other: "Graph") -> bool:
        """Same vertices, weights and arcs, up to adjacency order."""
        if self.n != other.n or not np.array_equal(self.vwgt, other.vwgt):
            return False
        if len(self.adjncy) != len(other.adjncy):
            return False

        def canon(g):
            key = g.arc_sources * g.n + g.adjncy
            order = np.argsort(key, kind="stable")
            return key[order], g.adjwgt[order]

        a, b = canon(self), canon(other)
        return np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def edge_cut(g: Graph, assignment) -> int:
    """Total weight of edges whose endpoints lie in different blocks."""
    blocks = np.asarray(assignment)
    if blocks.shape != (g.n,):
        raise ValueError(f"assignment covers {blocks.size} vertices, graph has {g.n}")
    if g.n and blocks.min() < 0:
        raise ValueError("assignment leaves vertices unassigned")
    crossing = blocks[g.arc_sources] != blocks[g.adjncy]
    return int(g.adjwgt[crossing].sum()) // 2


# -- METIS / chaco text format ----------------------------------------------


def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.lstrip().startswith("%"):
            continue
        yield lineno, raw


def parse_metis(text: str) -> Graph:
    lines = _data_lines(text)
    try:
        header_no, header = next(lines)
        while not header.strip():
            header_no, header = next(lines)
    except StopIteration:
        raise GraphFormatError("missing header") from None

    fields = header.split()
    if len(fields) < 2 or len(fields) > 4:
        raise GraphFormatError("header must be 'n m [fmt [ncon]]'", header_no)
    try:
        n, m = int(fields[0]), int(fields[1])
    except ValueError:
        raise GraphFormatError("non-integer n or m in header", header_no) from None
    fmt = fields[2] if len(fields) > 2 else "0"
    if not fmt.isdigit() or len(fmt) > 3 or set(fmt) - {"0", "1"} or fmt.zfill(3)[0] == "1":
        raise GraphFormatError(f"unsupported fmt {fmt!r}", header_no)
    if len(fields) == 4 and fields[3] != "1":
        raise GraphFormatError("multi-constraint vertex weights are not supported", header_no)
    if n <= 0 or m < 0:
        raise GraphFormatError("n must be positive and m non-negative", header_no)
    fmt = fmt.zfill(3)
    has_vwgt, has_ewgt = fmt[1] == "1", fmt[2] == "1"

    vwgt = np.ones(n, dtype=np.int64)
    src, dst, wgt, arc_line = [], [], [], []
    v = 0
    for lineno, raw in lines:
        if v == n:
            if raw.strip():
                raise GraphFormatError(f"more than {n} vertex lines", lineno)
            continue
        try:
            tokens = [int(t) for t in raw.split()]
        except ValueError:
            raise GraphFormatError("non-integer token", lineno) from None
        if has_vwgt:
            if not tokens:
                raise GraphFormatError("missing vertex weight", lineno)
            vwgt[v] = tokens[0]
            if tokens[0] <= 0:
                raise GraphFormatError("vertex weight must be positive", lineno)
            tokens = tokens[1:]
        step = 2 if has_ewgt else 1
        if len(tokens) % step:
            raise GraphFormatError("neighbor without edge weight", lineno)
        for i in range(0, len(tokens), step):
            u = tokens[i]
            if u < 1 or u > n:
                raise GraphFormatError(f"vertex id {u} out of range 1..{n}", lineno)
            w = tokens[i + 1] if has_ewgt else 1
            if w <= 0:
                raise GraphFormatError("edge weight must be positive", lineno)
            src.append(v)
            dst.append(u - 1)
            wgt.append(w)
            arc_line.append(lineno)
        v += 1
    # v < n: trailing empty adjacency lines were stripped; those vertices are isolated

    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    wgt = np.asarray(wgt, dtype=np.int64)
    arc_line = np.asarray(arc_line, dtype=np.int64)
    loops = src == dst
    if int((~loops).sum()) != 2 * m:
        raise GraphFormatError(f"header declares {m} edges but adjacency lists hold {int((~loops).sum())} arcs", header_no)

    g = Graph.from_arcs(n, src, dst, wgt, vwgt)
    if not g.is_symmetric():
        raise GraphFormatError("asymmetric adjacency", _first_asymmetric_line(g, src[~loops], dst[~loops], arc_line[~loops]))
    return g


def _first_asymmetric_line(g: Graph, src, dst, arc_line) -> int | None:
    n = g.n
    fwd = g.arc_sources * n + g.adjncy
    order = np.argsort(fwd)
    fwd_sorted = fwd[order]
    for s, d, line in zip(src, dst, arc_line):
        rev = d * n + s
        here = s * n + d
        i = np.searchsorted(fwd_sorted, rev)
        j = np.searchsorted(fwd_sorted, here)
        if i >= len(fwd_sorted) or fwd_sorted[i] != rev or g.adjwgt[order[i]] != g.adjwgt[order[j]]:
            return int(line)
    return None


def read_metis(path) -> Graph:
    return parse_metis(Path(path).read_text())


def write_metis(g: Graph) -> str:
    has_vwgt = bool(np.any(g.vwgt != 1))
    has_ewgt = bool(np.any(g.adjwgt != 1))
    fmt = f"{int(has_vwgt)}{int(has_ewgt)}"
    out = [f"{g.n} {g.m}" + (f" {fmt}" if fmt != "00" else "")]
    for v in range(g.n):
        nbrs, wts = g.neighbors(v)
        parts = [str(g.vwgt[v])] if has_vwgt else []
        if has_ewgt:
            for u, w in zip(nbrs.tolist(), wts.tolist()):
                parts.append(f"{u + 1} {w}")
        else:
            parts.extend(str(u + 1) for u in nbrs.tolist())
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


def save_metis(g: Graph, path) -> None:
    Path(path).write_text(write_metis(g))


# -- generators ----------------------------------------------------------------


def gen_grid(width: int, height: int) -> Graph:
    """Unit-weight 4-neighbor grid; vertex ``y * width + x``."""
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be positive")
    ids = np.arange(width * height, dtype=np.int64).reshape(height, width)
    u = np.concatenate([ids[:, :-1].ravel(), ids[:-1, :].ravel()])
    v = np.concatenate([ids[:, 1:].ravel(), ids[1:, :].ravel()])
    return Graph.from_edges(width * height, u, v)


def gen_rgg2d(n: int, radius: float, seed: int) -> Graph:
    """Random geometric graph on the unit square.

    Vertices are numbered in row-major order of ``radius``-sized cells so that
    consecutive ids are spatially close.
    """
    from scipy.spatial import cKDTree

    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 < radius < 1:
        raise ValueError("radius must lie in (0, 1)")
    pts = np.random.default_rng(seed).random((n, 2))
    cells = np.floor(pts / radius).astype(np.int64)
    order = np.lexsort((pts[:, 0], cells[:, 0], cells[:, 1]))
    pts = pts[order]
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    return Graph.from_edges(n, pairs[:, 0], pairs[:, 1])
