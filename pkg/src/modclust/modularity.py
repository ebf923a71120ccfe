"""Exact integer-scaled modularity arithmetic.

Every quantity here is the modularity Q (or a delta of it) multiplied by
4*m**2, which makes all values integers for every simple graph: the
intra-community edge term contributes 4*m*L and the degree-sum term D**2,
both integral.  Python integers are arbitrary precision, so no graph size
can overflow and exactness is unconditional.  Floating point appears only
in :func:`q_value`, the human-readable rendering.
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .graph import Graph

COMMON = "common"
ONLY_I = "only_i"
ONLY_J = "only_j"


def _labels_list(g: Graph, partition) -> Sequence[int]:
    if isinstance(partition, Mapping):
        try:
            return [partition[v] for v in range(g.n)]
        except KeyError as exc:
            raise ValueError(f"partition is missing node {exc.args[0]}") from None
    labels = list(partition)
    if len(labels) != g.n:
        raise ValueError(f"partition covers {len(labels)} nodes, graph has {g.n}")
    return labels


def q_scaled_scratch(g: Graph, partition) -> int:
    """Modularity of a partition, scaled by 4*m**2, computed from scratch.

    ``partition`` maps every node to a community label (any hashable
    labels; a sequence indexed by node also works).  The result is
    sum over communities of 4*m*L_c - D_c**2, where L_c counts edges
    with both endpoints inside community c and D_c sums its degrees.
    """
    labels = _labels_list(g, partition)
    intra: dict = {}
    dsum: dict = {}
    degree = g.degree
    for u, nbrs in enumerate(g.adj):
        lab = labels[u]
        dsum[lab] = dsum.get(lab, 0) + degree[u]
        for w in nbrs:
            if w > u and labels[w] == lab:
                intra[lab] = intra.get(lab, 0) + 1
    m4 = 4 * g.m
    total = 0
    for lab, d in dsum.items():
        total += m4 * intra.get(lab, 0) - d * d
    return total


def dq_scaled_init(k_u: int, k_v: int, m: int) -> int:
    """Scaled modularity gain for merging two adjacent singleton nodes."""
    return 4 * m - 2 * k_u * k_v


def dq_scaled_pair(l_ij: int, d_i: int, d_j: int, m: int) -> int:
    """Scaled modularity gain for merging two connected communities.

    ``l_ij`` is the number of edges between them, ``d_i``/``d_j`` their
    degree sums.  Symmetric in i and j.
    """
    return 2 * (2 * m * l_ij - d_i * d_j)


def dq_update_after_merge(case: str, dq_ik: int, dq_jk: int, d_i: int, d_j: int, d_k: int) -> int:
    """Gain of pair (i+j, k) after i and j merge, from pre-merge values.

    ``case`` states how k related to the merging pair: ``common`` (k was
    adjacent to both), ``only_i`` or ``only_j``.  All degree sums are the
    values *before* the merge.  Algebraically identical to recomputing
    dq_scaled_pair(L_ik + L_jk, D_i + D_j, D_k, m):

    - common:  dq_ik + dq_jk
    - only_i:  dq_ik - 2*D_j*D_k
    - only_j:  dq_jk - 2*D_i*D_k
    """
    if case == COMMON:
        return dq_ik + dq_jk
    if case == ONLY_I:
        return dq_ik - 2 * d_j * d_k
    if case == ONLY_J:
        return dq_jk - 2 * d_i * d_k
    raise ValueError(f"unknown update case {case!r}")


def q_value(q_scaled: int, m: int) -> float:
    """Render a scaled modularity as a float Q = q_scaled / (4*m**2).

    For reporting only; never feed the result back into comparisons.
    """
    return q_scaled / (4 * m * m)
