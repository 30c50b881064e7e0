"""Jefferson/D'Hondt apportionment with optional per-party seat bounds.

Multipliers are exact rationals (:class:`fractions.Fraction`), so the
certificate ``seats_i in clamp(round(lam * votes_i), lower_i, upper_i)`` can be
checked without floating point slack.
"""
from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Sequence

from .errors import DegenerateInput, InfeasibleBounds


class RoundingRule(enum.Enum):
    DOWNWARD = "downward"


def round_set(t: Real, rule: RoundingRule = RoundingRule.DOWNWARD) -> frozenset[int]:
    """Set-valued downward rounding: 0 -> {0}, r < t < r+1 -> {r}, t = r > 0 -> {r-1, r}."""
    if rule is not RoundingRule.DOWNWARD:
        raise ValueError(f"unsupported rounding rule {rule}")
    if t < 0:
        raise ValueError("rounding is defined for nonnegative values only")
    if t == 0:
        return frozenset({0})
    r = math.floor(t)
    if r == t:
        return frozenset({r - 1, r})
    return frozenset({r})


def clamped_round_set(t: Real, lower: int, upper: int) -> frozenset[int]:
    """Rounding set of ``t`` clamped into ``[lower, upper]``."""
    return frozenset(min(max(r, lower), upper) for r in round_set(t))


@dataclass(frozen=True)
class DivisorResult:
    seats: tuple[int, ...]
    multiplier: Fraction

    def certifies(self, votes, lower=None, upper=None, multiplier=None) -> bool:
        lam = self.multiplier if multiplier is None else multiplier
        return certify(self.seats, votes, lam, lower, upper)


def certify(seats, votes, multiplier, lower=None, upper=None) -> bool:
    """True iff every ``seats[i]`` lies in the clamped rounding set of ``multiplier*votes[i]``."""
    n = len(votes)
    lower = [0] * n if lower is None else lower
    upper = [sum(seats)] * n if upper is None else upper
    lam = Fraction(multiplier) if not isinstance(multiplier, Fraction) else multiplier
    return all(
        s in clamped_round_set(lam * int(v), lo, hi)
        for s, v, lo, hi in zip(seats, votes, lower, upper)
    )


def dhondt(votes: Sequence[int], house_size: int, labels: Sequence[str] | None = None) -> DivisorResult:
    """Allocate ``house_size`` seats proportionally by the Jefferson/D'Hondt method."""
    n = len(votes)
    return dhondt_bounded(votes, house_size, [0] * n, [house_size] * n, labels)


def dhondt_bounded(
    votes: Sequence[int],
    house_size: int,
    lower: Sequence[int],
    upper: Sequence[int],
    labels: Sequence[str] | None = None,
) -> DivisorResult:
    """D'Hondt apportionment where party ``i`` receives between ``lower[i]`` and ``upper[i]`` seats.

    Finds the smallest breakpoint multiplier at which the clamped floor
    allocation reaches the house size. Seats contested at that breakpoint go
    to parties with more votes, then to the lexicographically smaller label
    (or index when no labels are given).
    """
    votes = [int(v) for v in votes]
    lower = [int(x) for x in lower]
    upper = [min(int(x), house_size) for x in upper]
    n = len(votes)
    if not (len(lower) == len(upper) == n):
        raise ValueError("votes, lower and upper must have equal length")
    if any(v < 0 for v in votes):
        raise ValueError("votes must be nonnegative")
    if any(lo > hi for lo, hi in zip(lower, upper)):
        raise InfeasibleBounds("a lower bound exceeds its upper bound")
    if sum(lower) > house_size:
        raise InfeasibleBounds(f"lower bounds sum to {sum(lower)} > {house_size}")
    if sum(upper) < house_size:
        raise InfeasibleBounds(f"upper bounds sum to {sum(upper)} < {house_size}")
    # parties with no votes are pinned at their lower bound
    reachable = sum(lower) + sum(hi - lo for v, lo, hi in zip(votes, lower, upper) if v > 0)
    if reachable < house_size:
        if not any(votes):
            raise DegenerateInput("all vote counts are zero")
        raise InfeasibleBounds("parties with votes cannot absorb the house size within their bounds")

    def alloc(lam: Fraction) -> list[int]:
        return [
            min(max((lam.numerator * v) // lam.denominator, lo), hi)
            for v, lo, hi in zip(votes, lower, upper)
        ]

    if sum(lower) == house_size:
        firsts = [Fraction(lo + 1, v) for v, lo in zip(votes, lower) if v > 0]
        return DivisorResult(tuple(lower), (min(firsts) if firsts else Fraction(1)) / 2)

    # the allocation sum at lam counts breakpoints t/v <= lam (t in lo+1..hi),
    # so the smallest feasible lam is the R-th smallest breakpoint
    heap = [(Fraction(lo + 1, v), i) for i, (v, lo, hi) in enumerate(zip(votes, lower, upper)) if v > 0 and lo < hi]
    heapq.heapify(heap)
    nxt = list(lower)
    lam = Fraction(0)
    for _ in range(house_size - sum(lower)):
        lam, i = heapq.heappop(heap)
        nxt[i] += 1
        if nxt[i] < upper[i]:
            heapq.heappush(heap, (Fraction(nxt[i] + 1, votes[i]), i))
    seats = alloc(lam)
    # at lam, parties sitting exactly on a breakpoint inside their bounds may drop one seat
    contested = [
        i
        for i, (v, lo, hi) in enumerate(zip(votes, lower, upper))
        if v > 0 and (lam * v).denominator == 1 and lo < lam * v <= hi
    ]
    for i in contested:
        seats[i] -= 1
    excess = house_size - sum(seats)
    key = (lambda i: (-votes[i], labels[i])) if labels is not None else (lambda i: (-votes[i], i))
    for i in sorted(contested, key=key)[:excess]:
        seats[i] += 1
    return DivisorResult(tuple(seats), lam)


def highest_averages(votes: Sequence[int], house_size: int) -> tuple[int, ...]:
    """Sequential D'Hondt: award each seat to the largest ``votes/(seats+1)``.

    Ties go to more raw votes, then the lower index. Kept as a readable
    reference; :func:`dhondt` is the certified implementation.
    """
    seats = [0] * len(votes)
    for _ in range(house_size):
        best = max(
            (i for i, v in enumerate(votes) if v > 0),
            key=lambda i: (Fraction(votes[i], seats[i] + 1), votes[i], -i),
        )
        seats[best] += 1
    return tuple(seats)
