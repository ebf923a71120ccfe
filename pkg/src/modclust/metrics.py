"""Merge-log analytics and file formats for run artifacts.

Everything here is a pure function of a persisted log, dendrogram or
partition, so re-running an analysis on the same file reproduces
byte-identical output.  Ratios are stored as exact ``num/den`` strings
in the merge-log CSV and only rendered as decimals in the report
tables.
"""

from __future__ import annotations

import csv
import io
import os
from collections import Counter
from typing import Iterable, Mapping, Sequence

import numpy as np

from .engine import Dendrogram, MergeLog, MergeRecord

MERGE_LOG_COLUMNS = (
    "step", "lo", "hi", "size_lo", "size_hi", "members_lo", "members_hi",
    "ratio", "dq_scaled", "q_scaled_after", "elapsed_ns",
)

DENDROGRAM_COLUMNS = ("step", "left", "right", "new", "dq_scaled", "q_scaled", "elapsed_ns")

PARTITION_COLUMNS = ("node_id", "community_id")


# ---------------------------------------------------------------------------
# analytics

def ratio_series(log: MergeLog) -> list[tuple[int, float]]:
    """(step, consolidation ratio) per merge, ratio rendered as decimal."""
    if not log.records:
        raise ValueError("empty merge log")
    return [(r.step, r.ratio_num / r.ratio_den) for r in log.records]


def time_buckets(log: MergeLog, bucket: int = 10000) -> list[tuple[int, int, float]]:
    """Total merge time per bucket of ``bucket`` consecutive merges.

    Rows are (bucket_index, elapsed_ns, seconds); the trailing partial
    bucket is included.  The ns column sums exactly to the log's total.
    """
    if not log.records:
        raise ValueError("empty merge log")
    if bucket < 1:
        raise ValueError("bucket must be >= 1")
    rows = []
    acc = 0
    for idx, rec in enumerate(log.records):
        acc += rec.elapsed_ns
        if (idx + 1) % bucket == 0:
            rows.append(((idx + 1) // bucket - 1, acc, acc / 1e9))
            acc = 0
    if len(log.records) % bucket:
        rows.append((len(log.records) // bucket, acc, acc / 1e9))
    return rows


def q_progress(log: MergeLog, normalize: bool = False) -> list[tuple[float, float]]:
    """Modularity growth over the run.

    Rows are (x, Q) with Q = q_scaled / 4*m*m; x is the step number, or
    the cumulative elapsed-time fraction in [0, 1] when ``normalize``
    is set (equal shares if the log carries no timings).
    """
    if not log.records:
        raise ValueError("empty merge log")
    denom = 4 * log.m * log.m
    if not normalize:
        return [(float(r.step), r.q_scaled_after / denom) for r in log.records]
    total = sum(r.elapsed_ns for r in log.records)
    rows = []
    acc = 0
    for idx, r in enumerate(log.records):
        acc += r.elapsed_ns
        x = acc / total if total else (idx + 1) / len(log.records)
        rows.append((x, r.q_scaled_after / denom))
    return rows


def size_histogram(partition, log_base: int = 10) -> list[tuple[int, int, int]]:
    """Community counts per logarithmic size bin.

    ``partition`` maps nodes to community labels (mapping or sequence).
    Bin b covers sizes [base**b, base**(b+1)); rows are
    (size_bin_low, size_bin_high, count) and counts sum to the number
    of communities.
    """
    if isinstance(partition, Mapping):
        labels = partition.values()
    else:
        labels = partition
    sizes = Counter(labels)
    if not sizes:
        raise ValueError("empty partition")
    if log_base < 2:
        raise ValueError("log_base must be >= 2")
    bins: Counter = Counter()
    for size in sizes.values():
        b = 0
        edge = log_base
        while size >= edge:
            edge *= log_base
            b += 1
        bins[b] += 1
    return [(log_base ** b, log_base ** (b + 1), bins[b]) for b in sorted(bins)]


def dendrogram_height(d: Dendrogram) -> int:
    """Max root-to-leaf depth of the merge forest (singletons are 0)."""
    return d.height()


def scaling_fit(points: Sequence[tuple[float, float]]) -> dict:
    """Least-squares power-law fit T(n) = coefficient * n**exponent.

    Fits log T = exponent * log n + log coefficient over (n, seconds)
    pairs.  Needs at least three points with positive coordinates and
    at least two distinct n values.
    """
    if len(points) < 3:
        raise ValueError(f"need at least 3 points, got {len(points)}")
    ns = np.array([p[0] for p in points], dtype=float)
    ts = np.array([p[1] for p in points], dtype=float)
    if (ns <= 0).any() or (ts <= 0).any():
        raise ValueError("points must have positive n and seconds")
    ln = np.log(ns)
    if np.ptp(ln) == 0:
        raise ValueError("degenerate fit: all n values identical")
    slope, intercept = np.polyfit(ln, np.log(ts), 1)
    return {"exponent": float(slope), "coefficient": float(np.exp(intercept))}


# ---------------------------------------------------------------------------
# file formats

def _open_text(target, mode):
    if hasattr(target, "write") or hasattr(target, "read"):
        return target, False
    return open(os.fspath(target), mode, newline=""), True


def write_merge_log(log: MergeLog, target) -> None:
    """CSV with one row per merge and a metadata preamble comment.

    Round-trips bit-exactly through read_merge_log.
    """
    f, own = _open_text(target, "w")
    try:
        f.write(f"# modclust merge-log v1 n={log.n} m={log.m} "
                f"heuristic={log.heuristic} size_measure={log.size_measure}\n")
        f.write(",".join(MERGE_LOG_COLUMNS) + "\n")
        for r in log.records:
            f.write(f"{r.step},{r.lo},{r.hi},{r.size_lo},{r.size_hi},"
                    f"{r.members_lo},{r.members_hi},{r.ratio_num}/{r.ratio_den},"
                    f"{r.dq_scaled},{r.q_scaled_after},{r.elapsed_ns}\n")
    finally:
        if own:
            f.close()


def read_merge_log(source) -> MergeLog:
    f, own = _open_text(source, "r")
    try:
        header = f.readline().strip()
        if not header.startswith("# modclust merge-log v1 "):
            raise ValueError("not a modclust merge-log file")
        meta = dict(kv.split("=", 1) for kv in header.split()[4:])
        n = int(meta["n"])
        m = int(meta["m"])
        columns = f.readline().strip()
        if columns != ",".join(MERGE_LOG_COLUMNS):
            raise ValueError(f"unexpected merge-log columns: {columns}")
        records = []
        for row in csv.reader(f):
            if not row:
                continue
            step = int(row[0])
            num, den = row[7].split("/")
            records.append(MergeRecord(
                step, int(row[1]), int(row[2]), n + step - 1,
                int(row[3]), int(row[4]), int(row[5]), int(row[6]),
                int(num), int(den), int(row[8]), int(row[9]), int(row[10]),
            ))
        return MergeLog(n, m, meta["heuristic"], meta["size_measure"], records)
    finally:
        if own:
            f.close()


def write_dendrogram(d: Dendrogram, target) -> None:
    f, own = _open_text(target, "w")
    try:
        f.write(f"# modclust dendrogram v1 n={d.n_leaves}\n")
        f.write(",".join(DENDROGRAM_COLUMNS) + "\n")
        for step, left, right, new, dq, q, el in d.merges():
            f.write(f"{step},{left},{right},{new},{dq},{q},{el}\n")
    finally:
        if own:
            f.close()


def read_dendrogram(source) -> Dendrogram:
    f, own = _open_text(source, "r")
    try:
        header = f.readline().strip()
        if not header.startswith("# modclust dendrogram v1 "):
            raise ValueError("not a modclust dendrogram file")
        n = int(header.split()[-1].split("=", 1)[1])
        columns = f.readline().strip()
        if columns != ",".join(DENDROGRAM_COLUMNS):
            raise ValueError(f"unexpected dendrogram columns: {columns}")
        lefts, rights, dqs, qs, elapsed = [], [], [], [], []
        for row in csv.reader(f):
            if not row:
                continue
            lefts.append(int(row[1]))
            rights.append(int(row[2]))
            dqs.append(int(row[4]))
            qs.append(int(row[5]))
            elapsed.append(int(row[6]))
        return Dendrogram(n, lefts, rights, dqs, qs, elapsed)
    finally:
        if own:
            f.close()


def write_partition(labels: Sequence[int], target, id_map: Sequence[int] | None = None) -> None:
    """CSV node_id,community_id; node ids go through id_map if given."""
    f, own = _open_text(target, "w")
    try:
        f.write(",".join(PARTITION_COLUMNS) + "\n")
        for v, lab in enumerate(labels):
            node = id_map[v] if id_map is not None else v
            f.write(f"{node},{lab}\n")
    finally:
        if own:
            f.close()


def read_partition(source) -> dict[int, int]:
    f, own = _open_text(source, "r")
    try:
        header = f.readline().strip()
        if header != ",".join(PARTITION_COLUMNS):
            raise ValueError("not a modclust partition file")
        out: dict[int, int] = {}
        for row in csv.reader(f):
            if row:
                out[int(row[0])] = int(row[1])
        return out
    finally:
        if own:
            f.close()
