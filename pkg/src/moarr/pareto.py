"""Dominance relation, Pareto boundary, target-region sampling, hypervolume.

The two objectives are accuracy (maximize, in the open unit interval) and
parameter count (minimize, positive).  A point dominates another only when it
is strictly better on both, so performance ties always survive boundary
filtering.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .space import ArchitectureCode, code_to_string

__all__ = [
    "PerformancePair",
    "EvaluatedRecord",
    "Archive",
    "dominates",
    "weakly_dominates",
    "pareto_boundary",
    "in_ideal_region",
    "sample_ideal_region",
    "hypervolume",
    "write_front_csv",
    "read_front_csv",
]

# Displacement below the staircase used by the fallback sampler, in
# normalized parameter units.
_FALLBACK_EPS = 1e-3
_MAX_REJECTIONS = 1000


@dataclass(frozen=True)
class PerformancePair:
    """(accuracy score, parameter count) of one evaluated architecture."""

    acc: float
    par: float

    def __post_init__(self) -> None:
        if not 0.0 < self.acc < 1.0:
            raise ValueError(f"accuracy must lie in (0, 1), got {self.acc}")
        if not self.par > 0.0:
            raise ValueError(f"parameter count must be positive, got {self.par}")


@dataclass(frozen=True)
class EvaluatedRecord:
    """Full record of one evaluation as kept in the archive."""

    code: ArchitectureCode
    perf: PerformancePair
    quick: tuple[float, float, float] | None
    iteration: int
    oracle_acc: float | None = None


def dominates(x: PerformancePair, y: PerformancePair) -> bool:
    """True when ``y`` strictly beats ``x``: higher accuracy and fewer parameters."""
    return y.acc > x.acc and y.par < x.par


def weakly_dominates(x: PerformancePair, y: PerformancePair) -> bool:
    """True when ``y`` is at least as good as ``x`` and better somewhere."""
    return y.acc >= x.acc and y.par <= x.par and (y.acc > x.acc or y.par < x.par)


def pareto_boundary(pairs: Sequence[PerformancePair]) -> list[int]:
    """Indices of the non-dominated pairs, ascending.

    Sweep over parameter count: a point is dominated exactly when some point
    with strictly fewer parameters has strictly higher accuracy, so one pass
    over the par-sorted list with a running accuracy maximum suffices
    (O(n log n)).  Equal-par groups are compared only against strictly
    cheaper points, which preserves ties.
    """
    n = len(pairs)
    if n == 0:
        return []
    order = sorted(range(n), key=lambda i: pairs[i].par)
    survivors: list[int] = []
    best_acc = -np.inf
    i = 0
    while i < n:
        j = i
        group_par = pairs[order[i]].par
        group_best = -np.inf
        while j < n and pairs[order[j]].par == group_par:
            idx = order[j]
            if pairs[idx].acc > best_acc:
                survivors.append(idx)
            group_best = max(group_best, pairs[idx].acc)
            j += 1
        best_acc = max(best_acc, group_best)
        i = j
    return sorted(survivors)


class Archive:
    """Append-only store of evaluated architectures with a cached boundary.

    One writer at a time; readers always observe a matching snapshot of the
    record list and its boundary.  Canonical codes are unique across the
    archive.
    """

    def __init__(self) -> None:
        self._records: list[EvaluatedRecord] = []
        self._keys: set[str] = set()
        self._boundary: tuple[int, ...] = ()
        self._lock = threading.RLock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def has_code(self, code: ArchitectureCode) -> bool:
        with self._lock:
            return code_to_string(code) in self._keys

    def append(self, record: EvaluatedRecord) -> None:
        self.extend([record])

    def extend(self, records: Iterable[EvaluatedRecord]) -> None:
        """Atomically append a batch; rejects duplicates before any change."""
        batch = list(records)
        with self._lock:
            seen = set(self._keys)
            for record in batch:
                key = code_to_string(record.code)
                if key in seen:
                    raise ValueError(f"duplicate code in archive: {key}")
                seen.add(key)
            self._records.extend(batch)
            self._keys = seen
            self._boundary = tuple(pareto_boundary([r.perf for r in self._records]))

    @property
    def records(self) -> tuple[EvaluatedRecord, ...]:
        with self._lock:
            return tuple(self._records)

    @property
    def boundary_indices(self) -> tuple[int, ...]:
        with self._lock:
            return self._boundary

    def boundary_records(self) -> list[EvaluatedRecord]:
        records, boundary = self.snapshot()
        return [records[i] for i in boundary]

    def boundary_pairs(self) -> list[PerformancePair]:
        return [r.perf for r in self.boundary_records()]

    def snapshot(self) -> tuple[tuple[EvaluatedRecord, ...], tuple[int, ...]]:
        with self._lock:
            return tuple(self._records), self._boundary


def in_ideal_region(
    pair: PerformancePair,
    boundary: Sequence[PerformancePair],
    p_max: float,
) -> bool:
    """Membership in the target region of superior performance scores.

    A target qualifies when it sits inside the open accuracy/parameter box
    and no boundary point strictly beats it on both objectives; comparisons
    against the boundary are non-strict, so boundary scores themselves
    qualify.
    """
    if not (0.0 < pair.acc < 1.0 and 0.0 < pair.par < p_max):
        return False
    for b in boundary:
        if not (b.acc <= pair.acc or b.par >= pair.par):
            return False
    return True


def _staircase_segments(
    boundary: Sequence[PerformancePair], p_max: float
) -> list[tuple[float, float, float]]:
    """(acc_lo, acc_hi, par_ceiling) strips of the feasible region."""
    if not boundary:
        return [(0.0, 1.0, p_max)]
    pts = sorted(boundary, key=lambda b: b.acc)
    accs = [p.acc for p in pts]
    # Ceiling of a strip is the cheapest boundary point strictly to its right.
    suffix_min = [0.0] * len(pts)
    running = np.inf
    for i in range(len(pts) - 1, -1, -1):
        running = min(running, pts[i].par)
        suffix_min[i] = running
    edges = [0.0] + accs + [1.0]
    segments = []
    for j in range(len(edges) - 1):
        lo, hi = edges[j], edges[j + 1]
        if hi <= lo:
            continue
        ceiling = suffix_min[j] if j < len(pts) else np.inf
        segments.append((lo, hi, float(min(ceiling, p_max))))
    return segments


def _fallback_sample(
    segments: list[tuple[float, float, float]],
    p_max: float,
    rng: np.random.Generator,
) -> PerformancePair:
    lo, hi, ceiling = segments[int(rng.integers(len(segments)))]
    acc = lo + (hi - lo) * float(rng.random())
    while acc <= 0.0:
        acc = lo + (hi - lo) * float(rng.random())
    par = ceiling - _FALLBACK_EPS * p_max
    if par <= 0.0:
        par = ceiling / 2.0
    return PerformancePair(acc=acc, par=par)


def sample_ideal_region(
    boundary: Sequence[PerformancePair],
    p_max: float,
    n: int,
    rng: np.random.Generator,
) -> list[PerformancePair]:
    """Draw ``n`` performance targets from the superior region.

    Rejection-samples the uniform box first; if a draw fails 1000 times in a
    row (the region thins as the front advances) it falls back to picking a
    staircase strip uniformly and placing the target slightly below that
    strip's parameter ceiling.  Every returned target is re-checked for
    membership.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    segments = None
    samples: list[PerformancePair] = []
    for _ in range(n):
        accepted = None
        for _ in range(_MAX_REJECTIONS):
            acc = float(rng.random())
            par = float(rng.random()) * p_max
            if acc <= 0.0 or par <= 0.0:
                continue
            candidate = PerformancePair(acc=acc, par=par)
            if in_ideal_region(candidate, boundary, p_max):
                accepted = candidate
                break
        if accepted is None:
            if segments is None:
                segments = _staircase_segments(boundary, p_max)
            accepted = _fallback_sample(segments, p_max, rng)
        if not in_ideal_region(accepted, boundary, p_max):
            raise AssertionError(f"sampler produced non-member target {accepted}")
        samples.append(accepted)
    return samples


def hypervolume(
    pairs: Sequence[PerformancePair],
    ref_par: float,
    ref_acc: float = 0.0,
) -> float:
    """Normalized area dominated by a front, relative to (ref_acc, ref_par).

    Accuracy enters raw, parameters are normalized by ``ref_par``; points
    outside the reference box contribute nothing, so dominated or infeasible
    points never change the result.  Sorted sweep, O(n log n).
    """
    if ref_par <= 0:
        raise ValueError("ref_par must be positive")
    viable = [p for p in pairs if p.acc > ref_acc and p.par < ref_par]
    if not viable:
        return 0.0
    viable.sort(key=lambda p: (-p.acc, p.par))
    area = 0.0
    prev_par = ref_par
    for p in viable:
        if p.par < prev_par:
            area += (p.acc - ref_acc) * (prev_par - p.par) / ref_par
            prev_par = p.par
    return area


def write_front_csv(path, records: Sequence[EvaluatedRecord]) -> None:
    """Export a front as ``acc,par,code`` rows, codes in compact string form."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["acc", "par", "code"])
        for record in records:
            writer.writerow(
                [repr(record.perf.acc), repr(record.perf.par), code_to_string(record.code)]
            )


def read_front_csv(path) -> list[tuple[float, float, str]]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != ["acc", "par", "code"]:
            raise ValueError(f"{path}: unexpected front header {header}")
        return [(float(acc), float(par), code) for acc, par, code in reader]
