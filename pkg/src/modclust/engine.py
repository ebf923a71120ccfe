"""Agglomerative merge engine over sorted community-pair lists.

Communities keep their candidate pairs in lists sorted by neighbor
community id, so merging two communities is a single linear pass over
both lists.  Each community holds a link to its best pair (stage-1
nomination) and a system-wide max-heap holds one entry per community
keyed by the stage-2 score, so the globally best candidate is found in
two stages.  All scores are exact integers/rationals; floats never
enter selection.

Merge products get fresh ids (n, n+1, ...), which are larger than every
live id, so a replaced entry in a neighbor's sorted list always moves to
the end.  Dead communities are tombstoned, and the dendrogram can
rebuild the partition after any prefix of merges.
"""

from __future__ import annotations

import gc
import math
import time
from bisect import bisect_left
from dataclasses import dataclass, field

from .graph import Graph
from .heuristics import HE, HE_PRIME, HN, PLAIN, Heuristic, Score, compare
from .modularity import q_scaled_scratch, q_value

STOP_NEGATIVE_DQ = "negative-dq"
STOP_COMPLETE = "complete"
STOP_POLICIES = (STOP_NEGATIVE_DQ, STOP_COMPLETE)


class InternalError(RuntimeError):
    """An engine invariant was violated; indicates a bug, not bad input."""


class CommunityPair:
    """A candidate merge between two connected communities.

    ``a`` and ``b`` are the community objects with a.id < b.id, ``l`` the
    number of graph edges between them, and ``dq`` the exact scaled
    modularity gain of merging them (invariant:
    dq == dq_scaled_pair(l, a.degree_sum, b.degree_sum, m)).
    """

    __slots__ = ("a", "b", "l", "dq")

    def __init__(self, a, b, l, dq):
        self.a = a
        self.b = b
        self.l = l
        self.dq = dq

    @property
    def lo(self) -> int:
        return self.a.id

    @property
    def hi(self) -> int:
        return self.b.id

    def other(self, c):
        return self.b if self.a is c else self.a

    def __repr__(self):
        return f"CommunityPair({self.a.id}, {self.b.id}, l={self.l}, dq={self.dq})"


class Community:
    """A live cluster: member count, degree sum, and its sorted pair list.

    ``nbr_ids`` mirrors ``pairs`` (same order) holding the neighbor ids,
    so membership tests are a C-level bisect instead of attribute chases.
    """

    __slots__ = ("id", "members", "degree_sum", "nbr_ids", "pairs", "max_pair", "alive")

    def __init__(self, cid: int, members: int, degree_sum: int):
        self.id = cid
        self.members = members
        self.degree_sum = degree_sum
        self.nbr_ids: list[int] = []
        self.pairs: list[CommunityPair] = []
        self.max_pair: CommunityPair | None = None
        self.alive = True

    def __repr__(self):
        return f"Community(id={self.id}, members={self.members}, pairs={len(self.pairs)})"


class MergeRecord:
    """One merge step; sizes are pre-merge under the run's size measure."""

    __slots__ = (
        "step", "lo", "hi", "new_id", "size_lo", "size_hi",
        "members_lo", "members_hi", "ratio_num", "ratio_den",
        "dq_scaled", "q_scaled_after", "elapsed_ns",
    )

    def __init__(self, step, lo, hi, new_id, size_lo, size_hi, members_lo,
                 members_hi, ratio_num, ratio_den, dq_scaled, q_scaled_after,
                 elapsed_ns=0):
        self.step = step
        self.lo = lo
        self.hi = hi
        self.new_id = new_id
        self.size_lo = size_lo
        self.size_hi = size_hi
        self.members_lo = members_lo
        self.members_hi = members_hi
        self.ratio_num = ratio_num
        self.ratio_den = ratio_den
        self.dq_scaled = dq_scaled
        self.q_scaled_after = q_scaled_after
        self.elapsed_ns = elapsed_ns

    def astuple(self):
        return (self.step, self.lo, self.hi, self.new_id, self.size_lo,
                self.size_hi, self.members_lo, self.members_hi,
                self.ratio_num, self.ratio_den, self.dq_scaled,
                self.q_scaled_after, self.elapsed_ns)

    def __eq__(self, other):
        return isinstance(other, MergeRecord) and self.astuple() == other.astuple()

    def __repr__(self):
        return f"MergeRecord(step={self.step}, {self.lo}+{self.hi}->{self.new_id}, dq={self.dq_scaled})"


@dataclass
class MergeLog:
    """Ordered merge records plus the run context needed to read them."""

    n: int
    m: int
    heuristic: str
    size_measure: str
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


class Dendrogram:
    """Binary merge forest: merge idx joins lefts[idx], rights[idx] into
    node n_leaves + idx.  Supports cutting at any step prefix."""

    __slots__ = ("n_leaves", "lefts", "rights", "dqs", "qs", "elapsed", "parent")

    def __init__(self, n_leaves, lefts, rights, dqs, qs, elapsed):
        self.n_leaves = n_leaves
        self.lefts = list(lefts)
        self.rights = list(rights)
        self.dqs = list(dqs)
        self.qs = list(qs)
        self.elapsed = list(elapsed)
        parent = [-1] * (n_leaves + len(self.lefts))
        for idx, (l, r) in enumerate(zip(self.lefts, self.rights)):
            parent[l] = parent[r] = n_leaves + idx
        self.parent = parent

    @classmethod
    def from_records(cls, n_leaves: int, records) -> "Dendrogram":
        return cls(
            n_leaves,
            [r.lo for r in records],
            [r.hi for r in records],
            [r.dq_scaled for r in records],
            [r.q_scaled_after for r in records],
            [r.elapsed_ns for r in records],
        )

    @property
    def n_merges(self) -> int:
        return len(self.lefts)

    def merges(self):
        """Yield (step, left, right, new, dq_scaled, q_scaled, elapsed_ns)."""
        n = self.n_leaves
        for idx in range(len(self.lefts)):
            yield (idx + 1, self.lefts[idx], self.rights[idx], n + idx,
                   self.dqs[idx], self.qs[idx], self.elapsed[idx])

    def partition_at(self, step: int) -> list[int]:
        """Labels (root community ids) after the first ``step`` merges.

        Parents always have larger ids than children, so one descending
        pass resolves every root.
        """
        if not 0 <= step <= self.n_merges:
            raise ValueError(f"step {step} outside 0..{self.n_merges}")
        cut = self.n_leaves + step
        parent = self.parent
        root = list(range(cut))
        for x in range(cut - 1, -1, -1):
            p = parent[x]
            if p != -1 and p < cut:
                root[x] = root[p]
        return root[: self.n_leaves]

    def height(self) -> int:
        """Max root-to-leaf depth of the merge forest; singletons are 0."""
        n = self.n_leaves
        h = [0] * (n + len(self.lefts))
        top = 0
        for idx, (l, r) in enumerate(zip(self.lefts, self.rights)):
            hl = h[l]
            hr = h[r]
            v = (hl if hl >= hr else hr) + 1
            h[n + idx] = v
            if v > top:
                top = v
        return top


class _MaxHeap:
    """Indexed binary max-heap of (dq, num, den, lo, hi, cid) entries.

    Order: exact score dq*num/den descending, ties broken by smaller
    (lo, hi).  ``pos[cid]`` locates a community's entry for re-keying.
    """

    __slots__ = ("heap", "pos")

    def __init__(self):
        self.heap: list[tuple] = []
        self.pos: list[int] = []

    def _grow(self, cid):
        pos = self.pos
        if cid >= len(pos):
            pos.extend([-1] * (cid + 1 - len(pos)))

    def build(self, entries, capacity):
        self.heap = list(entries)
        self.pos = [-1] * capacity
        pos = self.pos
        for idx, e in enumerate(self.heap):
            pos[e[5]] = idx
        for idx in range(len(self.heap) // 2 - 1, -1, -1):
            self._sift_down(idx)

    def _sift_up(self, idx):
        heap = self.heap
        pos = self.pos
        e = heap[idx]
        while idx > 0:
            par = (idx - 1) >> 1
            p = heap[par]
            x = e[0] * e[1] * p[2]
            y = p[0] * p[1] * e[2]
            if x > y or (x == y and (e[3] < p[3] or (e[3] == p[3] and e[4] < p[4]))):
                heap[idx] = p
                pos[p[5]] = idx
                idx = par
            else:
                break
        heap[idx] = e
        pos[e[5]] = idx

    def _sift_down(self, idx):
        heap = self.heap
        pos = self.pos
        n = len(heap)
        e = heap[idx]
        while True:
            child = 2 * idx + 1
            if child >= n:
                break
            c = heap[child]
            right = child + 1
            if right < n:
                r = heap[right]
                x = r[0] * r[1] * c[2]
                y = c[0] * c[1] * r[2]
                if x > y or (x == y and (r[3] < c[3] or (r[3] == c[3] and r[4] < c[4]))):
                    child = right
                    c = r
            x = c[0] * c[1] * e[2]
            y = e[0] * e[1] * c[2]
            if x > y or (x == y and (c[3] < e[3] or (c[3] == e[3] and c[4] < e[4]))):
                heap[idx] = c
                pos[c[5]] = idx
                idx = child
            else:
                break
        heap[idx] = e
        pos[e[5]] = idx

    def push(self, entry):
        self._grow(entry[5])
        self.heap.append(entry)
        self._sift_up(len(self.heap) - 1)

    def discard(self, cid):
        pos = self.pos
        if cid >= len(pos):
            return
        idx = pos[cid]
        if idx < 0:
            return
        heap = self.heap
        last = heap.pop()
        pos[cid] = -1
        if idx < len(heap):
            heap[idx] = last
            pos[last[5]] = idx
            self._sift_up(idx)
            self._sift_down(pos[last[5]])

    def replace(self, cid, entry):
        idx = self.pos[cid]
        if idx < 0:
            self.push(entry)
            return
        self.heap[idx] = entry
        self._sift_up(idx)
        self._sift_down(self.pos[cid])

    def swap_key(self, old_cid, entry):
        """Hand old_cid's slot to a different community in one re-key."""
        idx = self.pos[old_cid]
        self.pos[old_cid] = -1
        self._grow(entry[5])
        self.heap[idx] = entry
        self.pos[entry[5]] = idx
        self._sift_up(idx)
        self._sift_down(self.pos[entry[5]])

    def top(self):
        return self.heap[0] if self.heap else None

    def entry_of(self, cid):
        idx = self.pos[cid] if cid < len(self.pos) else -1
        return self.heap[idx] if idx >= 0 else None

    def __len__(self):
        return len(self.heap)


class EngineState:
    """Full clustering state: live communities, candidate heap, exact Q."""

    __slots__ = ("graph", "m", "heuristic", "by_id", "n_live", "heap",
                 "q_scaled", "step", "records")

    def __init__(self, graph, heuristic):
        self.graph = graph
        self.m = graph.m
        self.heuristic = heuristic
        self.by_id: list[Community] = []
        self.n_live = 0
        self.heap = _MaxHeap()
        self.q_scaled = 0
        self.step = 0
        self.records: list[MergeRecord] = []

    def live_communities(self):
        return (c for c in self.by_id if c.alive)

    def community(self, cid: int) -> Community:
        return self.by_id[cid]

    def partition_labels(self) -> list[int]:
        """Current node labels (root community ids)."""
        return Dendrogram.from_records(self.graph.n, self.records).partition_at(self.step)

    @property
    def q(self) -> float:
        return q_value(self.q_scaled, self.m)


def _stage1_argmax(code: int, c: Community):
    """Full scan for the best pair of ``c`` under the stage-1 score.

    A community's pair list, sorted by neighbor id, is also sorted by
    (lo, hi): entries with neighbor below c.id lead with that neighbor,
    entries above lead with c.id, and the two runs are each ascending
    and ordered against each other.  Keeping the first strict maximum
    therefore realizes the smaller-(lo, hi) tie-break for free.
    """
    pairs = c.pairs
    if not pairs:
        return None
    if code == PLAIN or code == HE_PRIME:
        best = pairs[0]
        bd = best.dq
        for p in pairs:
            d = p.dq
            if d > bd:
                best = p
                bd = d
        return best
    if code == HN:
        sc = c.members
        best = pairs[0]
        so = (best.b if best.a is c else best.a).members
        if sc <= so:
            bnum, bden = sc, so
        else:
            bnum, bden = so, sc
        bd = best.dq
        for p in pairs:
            d = p.dq
            if d <= 0 and bd > 0:
                continue
            so = (p.b if p.a is c else p.a).members
            if sc <= so:
                num, den = sc, so
            else:
                num, den = so, sc
            if d > 0 and bd <= 0:
                best = p
                bd = d
                bnum = num
                bden = den
            elif d * num * bden > bd * bnum * den:
                best = p
                bd = d
                bnum = num
                bden = den
        return best
    # HE: degree-sized ratio
    sc = len(pairs)
    best = pairs[0]
    so = len((best.b if best.a is c else best.a).pairs)
    if sc <= so:
        bnum, bden = sc, so
    else:
        bnum, bden = so, sc
    bd = best.dq
    for p in pairs:
        d = p.dq
        if d <= 0 and bd > 0:
            continue
        so = len((p.b if p.a is c else p.a).pairs)
        if sc <= so:
            num, den = sc, so
        else:
            num, den = so, sc
        if d > 0 and bd <= 0:
            best = p
            bd = d
            bnum = num
            bden = den
        elif d * num * bden > bd * bnum * den:
            best = p
            bd = d
            bnum = num
            bden = den
    return best


def _stage2_entry(code: int, c: Community):
    """Heap entry for ``c``: stage-2 score of its nominated pair."""
    p = c.max_pair
    if code == PLAIN:
        return (p.dq, 1, 1, p.a.id, p.b.id, c.id)
    if code == HN:
        sa = p.a.members
        sb = p.b.members
    else:
        sa = len(p.a.pairs)
        sb = len(p.b.pairs)
    if sa > sb:
        sa, sb = sb, sa
    return (p.dq, sa, sb, p.a.id, p.b.id, c.id)


def init_state(g: Graph, heuristic="plain") -> EngineState:
    """Singleton communities, one pair per edge, heap and max links set."""
    h = Heuristic.from_name(heuristic)
    if g.m < 1:
        raise ValueError("engine requires at least one edge")
    state = EngineState(g, h)
    n = g.n
    degree = g.degree
    by_id = [Community(v, 1, degree[v]) for v in range(n)]
    state.by_id = by_id
    state.n_live = n
    m4 = 4 * g.m
    for u in range(n):
        cu = by_id[u]
        ku = degree[u]
        u_ids = cu.nbr_ids
        u_pairs = cu.pairs
        for w in g.adj[u]:
            if w > u:
                cw = by_id[w]
                p = CommunityPair(cu, cw, 1, m4 - 2 * ku * degree[w])
                u_ids.append(w)
                u_pairs.append(p)
                cw.nbr_ids.append(u)
                cw.pairs.append(p)
    q = 0
    for d in degree:
        q -= d * d
    state.q_scaled = q
    code = h.code
    entries = []
    for c in by_id:
        if c.pairs:
            c.max_pair = _stage1_argmax(code, c)
            entries.append(_stage2_entry(code, c))
    state.heap.build(entries, 2 * n)
    return state


def select_global_pair(state: EngineState):
    """The pair with the best stage-2 score among all nominations, or None."""
    heap = state.heap.heap
    if not heap:
        return None
    return state.by_id[heap[0][5]].max_pair


def update_max_link(state: EngineState, c_k: Community, p: CommunityPair,
                    old_score: Score, new_score: Score) -> None:
    """Restore c_k's max-pair link after p's stage-1 score changed.

    Four cases: a non-max pair that decreased needs nothing; a non-max
    pair that increased is compared against the current max; the max
    increasing stays the max; the max decreasing forces a full scan.
    The community's heap entry is re-keyed whenever its nomination (or
    the nomination's score) changed.
    """
    code = state.heuristic.code
    cmp = compare(new_score, old_score)
    if c_k.max_pair is p:
        if cmp < 0:
            c_k.max_pair = _stage1_argmax(code, c_k)
    elif cmp > 0:
        mp = c_k.max_pair
        mscore = state.heuristic.stage1_score(mp)
        c = compare(new_score, mscore)
        if c > 0 or (c == 0 and (p.a.id, p.b.id) < (mp.a.id, mp.b.id)):
            c_k.max_pair = p
    ent = _stage2_entry(code, c_k)
    if ent != state.heap.entry_of(c_k.id):
        state.heap.replace(c_k.id, ent)


def merge_pair(state: EngineState, pair: CommunityPair) -> int:
    """Merge the two communities of ``pair``; returns the new community id.

    All neighboring pair lists, max links, heap keys, the exact Q, and
    the merge record are updated.  Raises InternalError on a stale pair.
    """
    if state.heuristic.code == HE:
        return _merge_he(state, pair)
    return _merge_fast(state, pair, state.heuristic.code)


def _finish_merge(state, ca, cb, new_id, size_lo, size_hi, mi, mj, dq_sel):
    state.q_scaled += dq_sel
    state.step += 1
    lo_s, hi_s = (size_lo, size_hi) if size_lo <= size_hi else (size_hi, size_lo)
    g = math.gcd(lo_s, hi_s)
    rec = MergeRecord(state.step, ca.id, cb.id, new_id, size_lo, size_hi,
                      mi, mj, lo_s // g, hi_s // g, dq_sel, state.q_scaled)
    state.records.append(rec)
    ca.alive = False
    cb.alive = False
    ca.pairs = []
    ca.nbr_ids = []
    ca.max_pair = None
    cb.pairs = []
    cb.nbr_ids = []
    cb.max_pair = None
    state.n_live -= 1
    return rec


def _merge_fast(state: EngineState, pair: CommunityPair, code: int) -> int:
    """Merge for plain, he-prime and hn, where stage-1 scores of pairs not
    touching the merged communities never change.

    Per neighbor this is one four-case link update (the single-change
    protocol is sound because exactly one of the neighbor's pairs is
    affected).  A replaced pair lands at the end of its owner's list, so
    on equal score it loses the smaller-(lo, hi) tie-break to any
    incumbent: only strictly better scores displace a max link.  Heap
    entries are re-keyed only for communities whose nomination (or its
    score) actually changed.
    """
    ca = pair.a
    cb = pair.b
    if not (ca.alive and cb.alive):
        raise InternalError(f"merge of stale pair ({ca.id}, {cb.id})")
    i = ca.id
    j = cb.id
    by_id = state.by_id
    new_id = len(by_id)
    di = ca.degree_sum
    dj = cb.degree_sum
    mi = ca.members
    mj = cb.members
    dq_sel = pair.dq
    if code == HN:
        size_lo = mi
        size_hi = mj
    else:
        size_lo = len(ca.pairs)
        size_hi = len(cb.pairs)

    cn = Community(new_id, mi + mj, di + dj)
    by_id.append(cn)
    mn = cn.members

    A_ids = ca.nbr_ids
    A_pairs = ca.pairs
    B_ids = cb.nbr_ids
    B_pairs = cb.pairs
    merged_ids = []
    merged_pairs = []
    mi_append = merged_ids.append
    mp_append = merged_pairs.append
    bl = bisect_left

    dj2 = dj + dj
    di2 = di + di
    hn = code == HN
    touched = []
    t_append = touched.append
    commons = [] if code == HE_PRIME else None

    best = None
    b_dq = 0
    b_num = 1
    b_den = 1

    # sentinel: new_id is larger than every live id
    A_ids.append(new_id)
    B_ids.append(new_id)
    ai = 0
    bi = 0
    ka = A_ids[0]
    kb = B_ids[0]
    while ka != new_id or kb != new_id:
        if ka < kb:
            if ka != j:
                p = A_pairs[ai]
                kc = p.a if p.b is ca else p.b
                old_dq = p.dq
                ndq = old_dq - dj2 * kc.degree_sum
                p.dq = ndq
                p.a = kc
                p.b = cn
                ids = kc.nbr_ids
                x = bl(ids, i)
                del ids[x]
                prs = kc.pairs
                del prs[x]
                ids.append(new_id)
                prs.append(p)
                mp = kc.max_pair
                if hn:
                    so = kc.members
                    if mn <= so:
                        num, den = mn, so
                    else:
                        num, den = so, mn
                    if mp is not p:
                        msa = mp.a.members
                        msb = mp.b.members
                        if msa > msb:
                            msa, msb = msb, msa
                        if ndq * num * msb > mp.dq * msa * den:
                            kc.max_pair = p
                            t_append(kc)
                    else:
                        if mi <= so:
                            onum, oden = mi, so
                        else:
                            onum, oden = so, mi
                        if ndq * num * oden <= old_dq * onum * den:
                            kc.max_pair = _stage1_argmax(code, kc)
                        t_append(kc)
                    if best is None or ndq * num * b_den > b_dq * b_num * den:
                        best = p
                        b_dq = ndq
                        b_num = num
                        b_den = den
                else:
                    if mp is not p:
                        if ndq > mp.dq:
                            kc.max_pair = p
                            t_append(kc)
                    else:
                        # dq strictly decreased: the old max must rescan
                        kc.max_pair = _stage1_argmax(code, kc)
                        t_append(kc)
                    if best is None or ndq > b_dq:
                        best = p
                        b_dq = ndq
                mi_append(ka)
                mp_append(p)
            ai += 1
            ka = A_ids[ai]
        elif kb < ka:
            if kb != i:
                p = B_pairs[bi]
                kc = p.a if p.b is cb else p.b
                old_dq = p.dq
                ndq = old_dq - di2 * kc.degree_sum
                p.dq = ndq
                p.a = kc
                p.b = cn
                ids = kc.nbr_ids
                x = bl(ids, j)
                del ids[x]
                prs = kc.pairs
                del prs[x]
                ids.append(new_id)
                prs.append(p)
                mp = kc.max_pair
                if hn:
                    so = kc.members
                    if mn <= so:
                        num, den = mn, so
                    else:
                        num, den = so, mn
                    if mp is not p:
                        msa = mp.a.members
                        msb = mp.b.members
                        if msa > msb:
                            msa, msb = msb, msa
                        if ndq * num * msb > mp.dq * msa * den:
                            kc.max_pair = p
                            t_append(kc)
                    else:
                        if mj <= so:
                            onum, oden = mj, so
                        else:
                            onum, oden = so, mj
                        if ndq * num * oden <= old_dq * onum * den:
                            kc.max_pair = _stage1_argmax(code, kc)
                        t_append(kc)
                    if best is None or ndq * num * b_den > b_dq * b_num * den:
                        best = p
                        b_dq = ndq
                        b_num = num
                        b_den = den
                else:
                    if mp is not p:
                        if ndq > mp.dq:
                            kc.max_pair = p
                            t_append(kc)
                    else:
                        kc.max_pair = _stage1_argmax(code, kc)
                        t_append(kc)
                    if best is None or ndq > b_dq:
                        best = p
                        b_dq = ndq
                mi_append(kb)
                mp_append(p)
            bi += 1
            kb = B_ids[bi]
        else:
            p = A_pairs[ai]
            q = B_pairs[bi]
            kc = p.a if p.b is ca else p.b
            old_dq = p.dq
            ndq = old_dq + q.dq
            p.dq = ndq
            p.l += q.l
            p.a = kc
            p.b = cn
            ids = kc.nbr_ids
            x = bl(ids, i)
            del ids[x]
            prs = kc.pairs
            del prs[x]
            x = bl(ids, j)
            del ids[x]
            del prs[x]
            ids.append(new_id)
            prs.append(p)
            mp = kc.max_pair
            if hn:
                so = kc.members
                if mn <= so:
                    num, den = mn, so
                else:
                    num, den = so, mn
                if mp is p or mp is q:
                    keep = False
                    if mp is p:
                        if mi <= so:
                            onum, oden = mi, so
                        else:
                            onum, oden = so, mi
                        keep = ndq * num * oden > old_dq * onum * den
                    if not keep:
                        kc.max_pair = _stage1_argmax(code, kc)
                    t_append(kc)
                else:
                    msa = mp.a.members
                    msb = mp.b.members
                    if msa > msb:
                        msa, msb = msb, msa
                    if ndq * num * msb > mp.dq * msa * den:
                        kc.max_pair = p
                        t_append(kc)
                if best is None or ndq * num * b_den > b_dq * b_num * den:
                    best = p
                    b_dq = ndq
                    b_num = num
                    b_den = den
            else:
                if mp is p or mp is q:
                    if not (mp is p and ndq > old_dq):
                        kc.max_pair = _stage1_argmax(code, kc)
                    t_append(kc)
                elif ndq > mp.dq:
                    kc.max_pair = p
                    t_append(kc)
                if best is None or ndq > b_dq:
                    best = p
                    b_dq = ndq
            if commons is not None:
                commons.append(kc)
                t_append(kc)
            mi_append(ka)
            mp_append(p)
            ai += 1
            ka = A_ids[ai]
            bi += 1
            kb = B_ids[bi]

    cn.nbr_ids = merged_ids
    cn.pairs = merged_pairs
    cn.max_pair = best

    heap = state.heap
    if best is not None:
        heap.discard(j)
        heap.swap_key(i, _stage2_entry(code, cn))
    else:
        heap.discard(i)
        heap.discard(j)
    hp = heap.heap
    pos = heap.pos
    for kc in touched:
        ent = _stage2_entry(code, kc)
        if ent != hp[pos[kc.id]]:
            heap.replace(kc.id, ent)
    if commons:
        # he-prime: a common neighbor's degree changed, which silently
        # re-keys every nomination that points at one of its pairs
        for xc in commons:
            for pr in xc.pairs:
                yc = pr.a if pr.b is xc else pr.b
                if yc is cn:
                    continue
                if yc.max_pair is pr:
                    ent = _stage2_entry(code, yc)
                    if ent != hp[pos[yc.id]]:
                        heap.replace(yc.id, ent)

    _finish_merge(state, ca, cb, new_id, size_lo, size_hi, mi, mj, dq_sel)
    return new_id


def _merge_he(state: EngineState, pair: CommunityPair) -> int:
    """Merge under he, where sizes are pair-list lengths.

    A common neighbor loses a list entry, which shifts the scores of
    every pair it participates in; those score changes are replayed as
    events into the owning communities.  The four-case link update is
    only sound when a community saw exactly one of its pairs change, so
    communities with several changed pairs (and every common neighbor,
    whose own size change reshuffles its whole list) do a full rescan.
    """
    ca = pair.a
    cb = pair.b
    if not (ca.alive and cb.alive):
        raise InternalError(f"merge of stale pair ({ca.id}, {cb.id})")
    i = ca.id
    j = cb.id
    by_id = state.by_id
    new_id = len(by_id)
    di = ca.degree_sum
    dj = cb.degree_sum
    mi = ca.members
    mj = cb.members
    dq_sel = pair.dq
    size_lo = len(ca.pairs)
    size_hi = len(cb.pairs)
    an = size_lo
    bn = size_hi

    cn = Community(new_id, mi + mj, di + dj)
    by_id.append(cn)

    A_ids = ca.nbr_ids
    A_pairs = ca.pairs
    B_ids = cb.nbr_ids
    B_pairs = cb.pairs
    merged_ids = []
    merged_pairs = []

    dj2 = dj + dj
    di2 = di + di
    commons = []
    common_ids = set()
    events = []  # (viewer community, pair, old_dq, other side's old size)

    A_ids.append(new_id)
    B_ids.append(new_id)
    ai = 0
    bi = 0
    ka = A_ids[0]
    kb = B_ids[0]
    while ka != new_id or kb != new_id:
        if ka < kb:
            if ka != j:
                p = A_pairs[ai]
                kc = p.a if p.b is ca else p.b
                old_dq = p.dq
                p.dq = old_dq - dj2 * kc.degree_sum
                p.a = kc
                p.b = cn
                ids = kc.nbr_ids
                x = bisect_left(ids, i)
                del ids[x]
                prs = kc.pairs
                del prs[x]
                ids.append(new_id)
                prs.append(p)
                events.append((kc, p, old_dq, an))
                merged_ids.append(ka)
                merged_pairs.append(p)
            ai += 1
            ka = A_ids[ai]
        elif kb < ka:
            if kb != i:
                q = B_pairs[bi]
                kc = q.a if q.b is cb else q.b
                old_dq = q.dq
                q.dq = old_dq - di2 * kc.degree_sum
                q.a = kc
                q.b = cn
                ids = kc.nbr_ids
                x = bisect_left(ids, j)
                del ids[x]
                prs = kc.pairs
                del prs[x]
                ids.append(new_id)
                prs.append(q)
                events.append((kc, q, old_dq, bn))
                merged_ids.append(kb)
                merged_pairs.append(q)
            bi += 1
            kb = B_ids[bi]
        else:
            p = A_pairs[ai]
            q = B_pairs[bi]
            kc = p.a if p.b is ca else p.b
            p.dq = p.dq + q.dq
            p.l += q.l
            p.a = kc
            p.b = cn
            ids = kc.nbr_ids
            x = bisect_left(ids, i)
            del ids[x]
            prs = kc.pairs
            del prs[x]
            x = bisect_left(ids, j)
            del ids[x]
            del prs[x]
            ids.append(new_id)
            prs.append(p)
            commons.append(kc)
            common_ids.add(kc.id)
            merged_ids.append(ka)
            merged_pairs.append(p)
            ai += 1
            ka = A_ids[ai]
            bi += 1
            kb = B_ids[bi]

    cn.nbr_ids = merged_ids
    cn.pairs = merged_pairs
    cn.max_pair = _stage1_argmax(HE, cn)

    # ripple: every pair of a common neighbor changed score because the
    # common neighbor's own size changed
    for xc in commons:
        lx_old = len(xc.nbr_ids) + 1
        for pr in xc.pairs:
            yc = pr.a if pr.b is xc else pr.b
            if yc is cn or yc.id in common_ids:
                continue
            events.append((yc, pr, pr.dq, lx_old))

    touched = []
    seen = set()
    for xc in commons:
        xc.max_pair = _stage1_argmax(HE, xc)
        seen.add(xc.id)
        touched.append(xc)

    by_viewer: dict[int, list] = {}
    for ev in events:
        kid = ev[0].id
        if kid in common_ids:
            continue
        got = by_viewer.get(kid)
        if got is None:
            by_viewer[kid] = [ev]
        else:
            got.append(ev)

    for kid, evs in by_viewer.items():
        kc = evs[0][0]
        if kid not in seen:
            seen.add(kid)
            touched.append(kc)
        if len(evs) > 1:
            # several pairs changed at once: the single-change four-case
            # protocol does not apply
            kc.max_pair = _stage1_argmax(HE, kc)
            continue
        _, p, old_dq, other_old = evs[0]
        lk = len(kc.nbr_ids)
        other = p.a if p.b is kc else p.b
        lo_new = len(other.nbr_ids)
        if lo_new <= lk:
            nnum, nden = lo_new, lk
        else:
            nnum, nden = lk, lo_new
        if other_old <= lk:
            onum, oden = other_old, lk
        else:
            onum, oden = lk, other_old
        ndq = p.dq
        mp = kc.max_pair
        if mp is p:
            if ndq * nnum * oden <= old_dq * onum * nden:
                kc.max_pair = _stage1_argmax(HE, kc)
        elif ndq * nnum * oden >= old_dq * onum * nden:
            # not strictly decreased: compare against the (unchanged) max
            sa = len(mp.a.pairs)
            sb = len(mp.b.pairs)
            if sa > sb:
                sa, sb = sb, sa
            x1 = ndq * nnum * sb
            y1 = mp.dq * sa * nden
            if x1 > y1 or (x1 == y1 and (p.a.id, p.b.id) < (mp.a.id, mp.b.id)):
                kc.max_pair = p

    heap = state.heap
    if cn.max_pair is not None:
        heap.discard(j)
        heap.swap_key(i, _stage2_entry(HE, cn))
    else:
        heap.discard(i)
        heap.discard(j)
    hp = heap.heap
    pos = heap.pos
    for kc in touched:
        ent = _stage2_entry(HE, kc)
        if ent != hp[pos[kc.id]]:
            heap.replace(kc.id, ent)

    _finish_merge(state, ca, cb, new_id, size_lo, size_hi, mi, mj, dq_sel)
    return new_id


@dataclass
class RunResult:
    """Everything a finished run produced."""

    n: int
    m: int
    heuristic: str
    stop: str
    merge_log: MergeLog
    dendrogram: Dendrogram
    final_labels: list
    best_labels: list
    best_step: int
    q_scaled_final: int
    q_scaled_best: int
    elapsed_ns: int

    @property
    def final_q(self) -> float:
        return q_value(self.q_scaled_final, self.m)

    @property
    def best_q(self) -> float:
        return q_value(self.q_scaled_best, self.m)

    @property
    def n_merges(self) -> int:
        return len(self.merge_log)


def run(g: Graph, heuristic="plain", stop: str = STOP_NEGATIVE_DQ,
        audit: bool = False) -> RunResult:
    """Run the greedy loop to the stop condition.

    With ``negative-dq`` the loop stops when the selected pair would
    decrease modularity (the ratio factor never flips the sign, so this
    is exactly when every remaining candidate has negative gain); with
    ``complete`` it merges until no pairs remain.  Returns both the final
    partition and the partition at peak modularity, rebuilt from the
    dendrogram.  ``audit`` runs the full structural self-check after
    every merge (slow; for debugging and tests).
    """
    if stop not in STOP_POLICIES:
        raise ValueError(f"unknown stop policy {stop!r}; expected one of {STOP_POLICIES}")
    h = Heuristic.from_name(heuristic)
    t_start = time.perf_counter_ns()
    # object churn during merging is acyclic, so refcounting reclaims it;
    # keeping the cycle collector out avoids superlinear scan pauses
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        state = init_state(g, h)
        best_q = state.q_scaled
        best_step = 0
        while True:
            t0 = time.perf_counter_ns()
            p = select_global_pair(state)
            if p is None:
                break
            if stop == STOP_NEGATIVE_DQ and p.dq < 0:
                break
            merge_pair(state, p)
            state.records[-1].elapsed_ns = time.perf_counter_ns() - t0
            if state.q_scaled > best_q:
                best_q = state.q_scaled
                best_step = state.step
            if audit:
                audit_state(state)
    finally:
        if gc_was_enabled:
            gc.enable()
    elapsed = time.perf_counter_ns() - t_start
    dend = Dendrogram.from_records(g.n, state.records)
    log = MergeLog(g.n, g.m, h.name, h.size_measure, state.records)
    return RunResult(
        n=g.n,
        m=g.m,
        heuristic=h.name,
        stop=stop,
        merge_log=log,
        dendrogram=dend,
        final_labels=dend.partition_at(state.step),
        best_labels=dend.partition_at(best_step),
        best_step=best_step,
        q_scaled_final=state.q_scaled,
        q_scaled_best=best_q,
        elapsed_ns=elapsed,
    )


def audit_state(state: EngineState, check_q: bool = True) -> None:
    """Full structural self-check; raises InternalError on any violation.

    Verifies sorted duplicate-free pair lists, pair symmetry, exact dq
    values, max-link and heap integrity, and (optionally) that the
    incrementally maintained Q matches the from-scratch oracle.
    """
    from .modularity import dq_scaled_pair

    code = state.heuristic.code
    m = state.m
    live_with_pairs = 0
    for c in state.by_id:
        if not c.alive:
            continue
        ids = c.nbr_ids
        prs = c.pairs
        if len(ids) != len(prs):
            raise InternalError(f"community {c.id}: nbr_ids/pairs length mismatch")
        for idx, (nid, p) in enumerate(zip(ids, prs)):
            if idx and ids[idx - 1] >= nid:
                raise InternalError(f"community {c.id}: pair list not strictly sorted")
            if p.a is not c and p.b is not c:
                raise InternalError(f"community {c.id}: foreign pair {p!r}")
            other = p.other(c)
            if other.id != nid:
                raise InternalError(f"community {c.id}: nbr_ids out of sync at {nid}")
            if other is c or other.id == c.id:
                raise InternalError(f"community {c.id}: self pair")
            if not other.alive:
                raise InternalError(f"community {c.id}: pair to dead community {other.id}")
            if p.a.id >= p.b.id:
                raise InternalError(f"pair {p!r}: endpoints out of order")
            if p.dq != dq_scaled_pair(p.l, p.a.degree_sum, p.b.degree_sum, m):
                raise InternalError(f"pair {p!r}: stored dq is stale")
            # symmetry: the same object must sit in the other list
            oidx = bisect_left(other.nbr_ids, c.id)
            if oidx >= len(other.nbr_ids) or other.nbr_ids[oidx] != c.id or other.pairs[oidx] is not p:
                raise InternalError(f"pair {p!r}: not mirrored in community {other.id}")
        if prs:
            live_with_pairs += 1
            want = _stage1_argmax(code, c)
            if c.max_pair is not want:
                raise InternalError(f"community {c.id}: max link {c.max_pair!r} != scan {want!r}")
            ent = state.heap.entry_of(c.id)
            if ent != _stage2_entry(code, c):
                raise InternalError(f"community {c.id}: heap entry stale")
        else:
            if c.max_pair is not None:
                raise InternalError(f"community {c.id}: max link set without pairs")
            if state.heap.entry_of(c.id) is not None:
                raise InternalError(f"community {c.id}: pairless community in heap")
    if len(state.heap) != live_with_pairs:
        raise InternalError("heap size != live communities with pairs")
    heap = state.heap.heap
    for idx in range(1, len(heap)):
        par = heap[(idx - 1) >> 1]
        e = heap[idx]
        x = e[0] * e[1] * par[2]
        y = par[0] * par[1] * e[2]
        if x > y or (x == y and (e[3], e[4]) < (par[3], par[4])):
            raise InternalError("heap property violated")
    if check_q:
        labels = state.partition_labels()
        want = q_scaled_scratch(state.graph, labels)
        if state.q_scaled != want:
            raise InternalError(f"q_scaled {state.q_scaled} != scratch {want}")
