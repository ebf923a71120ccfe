"""Pair-scoring strategies for the merge engine.

Four strategies are supported.  ``plain`` scores a candidate merge by its
modularity gain alone.  The other three damp the gain by the consolidation
ratio min(size_i/size_j, size_j/size_i), which penalizes merging
communities of very different sizes:

- ``he``: size is the community's degree (its pair-list length), in both
  selection stages.
- ``he-prime``: each community nominates its best pair by gain alone
  (stage 1), but the global winner among nominations is picked by
  gain*ratio with degree sizes (stage 2).
- ``hn`` (alias ``ne``): size is the member count, in both stages.

Scores are exact rationals compared by integer cross-multiplication;
no floating point is involved anywhere in selection.
"""

from __future__ import annotations

from fractions import Fraction
from typing import NamedTuple

PLAIN = 0
HE = 1
HE_PRIME = 2
HN = 3

_KIND_BY_NAME = {
    "plain": PLAIN,
    "he": HE,
    "he-prime": HE_PRIME,
    "he_prime": HE_PRIME,
    "hn": HN,
    "ne": HN,
}

_CANONICAL = {PLAIN: "plain", HE: "he", HE_PRIME: "he-prime", HN: "hn"}

HEURISTIC_NAMES = ("plain", "he", "he-prime", "hn", "ne")


class Score(NamedTuple):
    """Exact selection score dq * num / den with 1 <= num <= den."""

    dq: int
    num: int
    den: int


def ratio(size_i: int, size_j: int) -> Fraction:
    """Consolidation ratio min(size_i/size_j, size_j/size_i) in (0, 1]."""
    if size_i <= 0 or size_j <= 0:
        raise ValueError(f"community sizes must be positive, got ({size_i}, {size_j})")
    if size_i <= size_j:
        return Fraction(size_i, size_j)
    return Fraction(size_j, size_i)


def compare(a: Score, b: Score) -> int:
    """Exact three-way comparison of two scores (-1, 0, or 1).

    Denominators are positive, so cross-multiplication preserves order
    for negative gains too.  Equal values compare equal; the engine
    breaks such ties by pair ids.
    """
    x = a.dq * a.num * b.den
    y = b.dq * b.num * a.den
    if x < y:
        return -1
    if x > y:
        return 1
    return 0


class Heuristic:
    """A named scoring strategy; stateless and shareable."""

    __slots__ = ("code",)

    def __init__(self, name: str = "plain"):
        try:
            self.code = _KIND_BY_NAME[name.lower()]
        except KeyError:
            raise ValueError(
                f"unknown heuristic {name!r}; expected one of {', '.join(HEURISTIC_NAMES)}"
            ) from None

    @classmethod
    def from_name(cls, name) -> "Heuristic":
        if isinstance(name, Heuristic):
            return name
        return cls(name)

    @property
    def name(self) -> str:
        return _CANONICAL[self.code]

    @property
    def size_measure(self) -> str:
        """Size measure used for logging ratios: degree unless hn."""
        return "members" if self.code == HN else "degree"

    def size_of(self, community) -> int:
        """Community size under this heuristic's stage-2 measure."""
        if self.code == HN:
            return community.members
        return len(community.pairs)

    def stage1_score(self, pair, owner=None) -> Score:
        """Score used when a community nominates its best pair."""
        if self.code == PLAIN or self.code == HE_PRIME:
            return Score(pair.dq, 1, 1)
        return self.stage2_score(pair)

    def stage2_score(self, pair) -> Score:
        """Score used to pick the global winner among nominations."""
        if self.code == PLAIN:
            return Score(pair.dq, 1, 1)
        sa = self.size_of(pair.a)
        sb = self.size_of(pair.b)
        if sa <= sb:
            return Score(pair.dq, sa, sb)
        return Score(pair.dq, sb, sa)

    def __repr__(self):
        return f"Heuristic({self.name!r})"

    def __eq__(self, other):
        return isinstance(other, Heuristic) and other.code == self.code
