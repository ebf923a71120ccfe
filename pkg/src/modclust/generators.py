"""Synthetic benchmark graphs: preferential-attachment and uniform random.

The scale-free generator stands in for real social-network snapshots,
which show the hub-dominated growth that makes unbalanced merging
expensive; the uniform generator is the control case without that
regime.  All randomness comes from one 64-bit seed through Python's
Mersenne Twister, and the generator identity is recorded in the
metadata sidecar so runs are reproducible across builds.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .graph import Graph

PRNG_NAME = "python-random-mt19937"

MODELS = ("ba", "er")


@dataclass(frozen=True)
class GenSpec:
    """A generator request: model, size, density knob, seed."""

    model: str
    n: int
    m_attach: int | None = None
    edges: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.model == "ba":
            if self.m_attach is None:
                raise ValueError("ba model requires m_attach")
            if not 1 <= self.m_attach < self.n:
                raise ValueError(f"ba requires 1 <= m_attach < n, got m_attach={self.m_attach}, n={self.n}")
        else:
            if self.edges is None:
                raise ValueError("er model requires an edge count")
            cap = self.n * (self.n - 1) // 2
            if not 1 <= self.edges <= cap:
                raise ValueError(f"er requires 1 <= edges <= n(n-1)/2 = {cap}, got {self.edges}")

    def metadata(self) -> dict:
        meta = {"model": self.model, "n": self.n, "seed": self.seed, "prng": PRNG_NAME}
        if self.model == "ba":
            meta["m_attach"] = self.m_attach
        else:
            meta["edges"] = self.edges
        return meta


def generate(spec: GenSpec) -> Graph:
    if spec.model == "ba":
        return generate_ba(spec.n, spec.m_attach, spec.seed)
    return generate_er(spec.n, spec.edges, spec.seed)


def generate_ba(n: int, m_attach: int, seed: int = 0) -> Graph:
    """Preferential-attachment graph: a clique of m_attach+1 seed nodes,
    then each new node attaches to m_attach distinct existing nodes with
    probability proportional to degree.

    Sampling draws uniformly from a list holding each node once per
    incident edge end, rejecting duplicate targets.  Connected, simple,
    with exactly C(m_attach+1, 2) + (n - m_attach - 1) * m_attach edges.
    """
    GenSpec("ba", n, m_attach=m_attach, seed=seed)
    rng = random.Random(seed)
    m0 = m_attach + 1
    edges = []
    endpoints = []
    for u in range(m0):
        for v in range(u + 1, m0):
            edges.append((u, v))
            endpoints.append(u)
            endpoints.append(v)
    randrange = rng.randrange
    for source in range(m0, n):
        targets = set()
        count = len(endpoints)
        while len(targets) < m_attach:
            targets.add(endpoints[randrange(count)])
        for t in sorted(targets):
            edges.append((t, source))
            endpoints.append(t)
        endpoints.extend([source] * m_attach)
    return Graph(n, edges)


def generate_er(n: int, m: int, seed: int = 0) -> Graph:
    """Uniform random simple graph with exactly m distinct edges."""
    GenSpec("er", n, edges=m, seed=seed)
    rng = random.Random(seed)
    randrange = rng.randrange
    chosen = set()
    while len(chosen) < m:
        u = randrange(n)
        v = randrange(n)
        if u == v:
            continue
        chosen.add((u, v) if u < v else (v, u))
    return Graph(n, sorted(chosen))
