"""Performance profiles over per-instance edge cuts.

For algorithm ``A`` and factor ``delta``, the profile value is the fraction of
instances on which ``cut_A <= delta * best cut``.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

from .partition import as_fraction

RECORD_FIELDS = ["algorithm", "graph", "k", "seed", "cut", "time_s"]
PROFILE_FIELDS = ["algorithm", "delta", "fraction"]


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class RunRecord:
    algorithm: str
    graph: str
    k: int
    seed: int
    cut: int
    time_s: float = 0.0

    @property
    def instance(self) -> tuple[str, int, int]:
        return (self.graph, self.k, self.seed)


def read_records(text: str) -> list[RunRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ProfileError("empty CSV") from None
    if [h.strip() for h in header] != RECORD_FIELDS:
        raise ProfileError(f"line 1: expected header {','.join(RECORD_FIELDS)}")
    records = []
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(RECORD_FIELDS):
            raise ProfileError(f"line {lineno}: expected {len(RECORD_FIELDS)} fields, got {len(row)}")
        try:
            rec = RunRecord(row[0].strip(), row[1].strip(), int(row[2]), int(row[3]), int(row[4]), float(row[5]))
        except ValueError as exc:
            raise ProfileError(f"line {lineno}: {exc}") from None
        if rec.cut < 0:
            raise ProfileError(f"line {lineno}: negative cut")
        records.append(rec)
    return records


def write_records(records) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in records:
        w.writerow([r.algorithm, r.graph, r.k, r.seed, r.cut, f"{r.time_s:.6f}"])
    return out.getvalue()


def performance_profile(records, deltas) -> dict[str, list[float]]:
    """Fraction of instances within ``delta`` of the per-instance best, per algorithm."""
    cuts: dict[tuple, dict[str, int]] = defaultdict(dict)
    algorithms = sorted({r.algorithm for r in records})
    for r in records:
        if r.algorithm in cuts[r.instance]:
            raise ProfileError(f"duplicate record for {r.algorithm} on {r.instance}")
        cuts[r.instance][r.algorithm] = r.cut
    gaps = [(a, inst) for inst, per in sorted(cuts.items()) for a in algorithms if a not in per]
    if gaps:
        listing = "; ".join(f"{a} on {g}/k={k}/seed={s}" for a, (g, k, s) in gaps)
        raise ProfileError(f"missing records: {listing}")
    deltas = [as_fraction(d) for d in deltas]
    if any(d < 1 for d in deltas):
        raise ProfileError("delta must be >= 1")
    n_inst = len(cuts)
    best = {inst: min(per.values()) for inst, per in cuts.items()}
    profile = {}
    for a in algorithms:
        curve = []
        for d in deltas:
            hits = sum(1 for inst, per in cuts.items() if per[a] <= d * best[inst])
            curve.append(hits / n_inst if n_inst else 0.0)
        profile[a] = curve
    return profile


def default_deltas(records, points: int = 50) -> list[Fraction]:
    """``1`` up to the largest cut ratio, evenly spaced."""
    by_inst = defaultdict(list)
    for r in records:
        by_inst[r.instance].append(r.cut)
    worst = Fraction(1)
    for cuts in by_inst.values():
        lo = min(cuts)
        if lo > 0:
            worst = max(worst, Fraction(max(cuts), lo))
    if worst == 1:
        return [Fraction(1)]
    return [1 + (worst - 1) * Fraction(i, points - 1) for i in range(points)]


def write_profile(profile: dict[str, list[float]], deltas) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(PROFILE_FIELDS)
    for a, curve in profile.items():
        for d, f in zip(deltas, curve):
            w.writerow([a, repr(float(d)), repr(f)])
    return out.getvalue()


def read_profile(text: str) -> tuple[dict[str, list[float]], list[float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != PROFILE_FIELDS:
        raise ProfileError(f"line 1: expected header {','.join(PROFILE_FIELDS)}")
    profile: dict[str, list[float]] = {}
    deltas: dict[str, list[float]] = {}
    for row in reader:
        if not row:
            continue
        if len(row) != 3:
            raise ProfileError(f"line {reader.line_num}: expected 3 fields")
        try:
            d, f = float(row[1]), float(row[2])
        except ValueError as exc:
            raise ProfileError(f"line {reader.line_num}: {exc}") from None
        profile.setdefault(row[0], []).append(f)
        deltas.setdefault(row[0], []).append(d)
    grids = {tuple(v) for v in deltas.values()}
    if len(grids) > 1:
        raise ProfileError("algorithms use different delta grids")
    return profile, list(grids.pop()) if grids else []
