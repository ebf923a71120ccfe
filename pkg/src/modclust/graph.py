"""Simple undirected graphs loaded from whitespace edge-list text."""

from __future__ import annotations

import gzip
import io
import os
from typing import IO, Iterable, Iterator

_GZIP_MAGIC = b"\x1f\x8b"


class ParseError(ValueError):
    """Malformed edge-list input. Carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class Graph:
    """Immutable simple undirected graph over dense node ids 0..n-1.

    Invariants held by construction: adjacency lists are strictly sorted
    and symmetric, there are no self-loops or parallel edges, and
    sum(degree) == 2*m.  ``id_map[v]`` gives the original external id of
    internal node ``v`` (identity unless the source was renumbered).

    Instances never mutate after ``__init__`` and are safe to share
    across threads.
    """

    __slots__ = ("n", "m", "adj", "degree", "id_map")

    def __init__(self, n: int, edges: Iterable[tuple[int, int]], id_map=None):
        # Caller guarantees a clean edge set (deduplicated, no self-loops,
        # endpoints in range); use from_edges() for raw input.
        adj: list[list[int]] = [[] for _ in range(n)]
        m = 0
        for u, v in edges:
            adj[u].append(v)
            adj[v].append(u)
            m += 1
        self.n = n
        self.m = m
        self.adj = tuple(tuple(sorted(a)) for a in adj)
        self.degree = tuple(len(a) for a in self.adj)
        self.id_map = tuple(id_map) if id_map is not None else tuple(range(n))

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int]], renumber: bool = False) -> "Graph":
        """Build a Graph from raw (u, v) pairs.

        Self-loops are dropped and duplicate edges collapse to one.  With
        ``renumber`` the ids are compacted to 0..n-1 in first-appearance
        order; otherwise ids are used as-is and n = max id + 1 (gaps become
        isolated nodes).  Raises ValueError if no edges survive cleanup.
        """
        remap: dict[int, int] = {}
        clean: set[tuple[int, int]] = set()
        max_id = -1
        for u, v in edges:
            if u < 0 or v < 0:
                raise ValueError(f"negative node id in edge ({u}, {v})")
            if renumber:
                u = remap.setdefault(u, len(remap))
                v = remap.setdefault(v, len(remap))
            if u == v:
                continue
            if u > max_id:
                max_id = u
            if v > max_id:
                max_id = v
            clean.add((u, v) if u < v else (v, u))
        if not clean:
            raise ValueError("empty graph: no edges after dropping self-loops (modularity is undefined)")
        n = len(remap) if renumber else max_id + 1
        id_map = None
        if renumber:
            id_map = [0] * n
            for orig, internal in remap.items():
                id_map[internal] = orig
        return cls(n, sorted(clean), id_map)

    def edges(self) -> Iterator[tuple[int, int]]:
        """Yield each edge once as (u, v) with u < v, in sorted order."""
        for u, nbrs in enumerate(self.adj):
            for w in nbrs:
                if w > u:
                    yield (u, w)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and self.m == other.m and self.adj == other.adj

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def _open_binary(source) -> tuple[IO[bytes], bool]:
    """Return (binary stream, needs_close), transparently ungzipping."""
    if hasattr(source, "read"):
        raw = source
        needs_close = False
    else:
        raw = open(os.fspath(source), "rb")
        needs_close = True
    buffered = raw if isinstance(raw, io.BufferedReader) else io.BufferedReader(raw)
    if buffered.peek(2)[:2] == _GZIP_MAGIC:
        return gzip.open(buffered, "rb"), needs_close
    return buffered, needs_close


def load_edge_list(source, renumber: bool = False) -> Graph:
    """Load a Graph from an edge-list file or binary stream.

    Each non-comment line holds two whitespace-separated non-negative
    integer node ids.  Lines starting with '#' and blank lines are
    skipped.  Gzip input is detected by magic bytes.  Self-loops are
    dropped and duplicate edges collapsed; an edge-free result is
    rejected because modularity divides by m.

    Raises ParseError (with line number) on malformed lines and
    ValueError on an empty graph.
    """
    stream, needs_close = _open_binary(source)
    edges: list[tuple[int, int]] = []
    try:
        for lineno, line in enumerate(stream, start=1):
            text = line.decode("utf-8", errors="replace").strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ParseError(lineno, f"expected two node ids, got {len(parts)} tokens")
            try:
                u = int(parts[0])
                v = int(parts[1])
            except ValueError:
                raise ParseError(lineno, f"non-integer node id in {text!r}") from None
            if u < 0 or v < 0:
                raise ParseError(lineno, f"negative node id in {text!r}")
            edges.append((u, v))
    finally:
        if needs_close:
            stream.close()
    return Graph.from_edges(edges, renumber=renumber)


def dump_edge_list(g: Graph, sink) -> None:
    """Write the canonical edge-list form: one 'u v' line per edge, sorted.

    Internal (dense) ids are emitted.  Reloading the output with
    renumber=False reproduces an equal Graph, except that trailing
    isolated nodes cannot be expressed in edge-list form.
    """
    own = False
    if not hasattr(sink, "write"):
        sink = open(os.fspath(sink), "w")
        own = True
    try:
        for u, v in g.edges():
            sink.write(f"{u} {v}\n")
    finally:
        if own:
            sink.close()


def graph_stats(g: Graph) -> dict:
    """Exact node/edge counts and degree extremes of a Graph."""
    return {
        "n": g.n,
        "m": g.m,
        "degree_min": min(g.degree),
        "degree_max": max(g.degree),
        "degree_mean": 2 * g.m / g.n,
    }
