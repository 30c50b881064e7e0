"""Electoral methods over (district, list, gender) elections.

CCM is the local method with per-district gender correction. TPM, TPM3, TPP
and TPP3 are 3-proportional methods (optionally with a 3% national
threshold and/or guaranteed seats for each district's top-voted
candidate). Greedy is the vote-maximising reference under district
magnitudes and national gender parity.
"""
from __future__ import annotations

import enum
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .divisor import dhondt, dhondt_bounded
from .errors import (
    AmbiguousTop,
    Infeasible,
    NotEnoughCandidates,
    ReplacementExhausted,
)
from .model import (
    Apportionment,
    Assignment,
    Candidate,
    ElectionInstance,
    MarginalSpec,
    VoteTensor,
    aggregate,
    candidate_order,
    validate_marginals,
)
from .rounding import DeviationPolicy, approximate_apportionment

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.03


class Method(str, enum.Enum):
    CCM = "ccm"
    TPM = "tpm"
    TPM3 = "tpm3"
    TPP = "tpp"
    TPP3 = "tpp3"
    GREEDY = "greedy"

    @property
    def uses_threshold(self) -> bool:
        return self in (Method.TPM3, Method.TPP3)

    @property
    def uses_plurality(self) -> bool:
        return self in (Method.TPP, Method.TPP3)

    @property
    def is_proportional(self) -> bool:
        return self in (Method.TPM, Method.TPM3, Method.TPP, Method.TPP3)


PROPORTIONAL_METHODS = (Method.TPM, Method.TPM3, Method.TPP, Method.TPP3)
ALL_METHODS = (Method.CCM, *PROPORTIONAL_METHODS, Method.GREEDY)


@dataclass(frozen=True)
class MethodConfig:
    method: Method = Method.TPM
    threshold: float = DEFAULT_THRESHOLD
    policy: DeviationPolicy = field(default_factory=DeviationPolicy.default)
    backend: str = "simplex"
    strict_ties: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0 <= self.threshold < 1:
            raise ValueError("threshold must lie in [0, 1)")


@dataclass
class MethodResult:
    method: Method
    votes: VoteTensor
    seats: np.ndarray
    assignment: Assignment
    apportionment: Apportionment | None = None
    spec: MarginalSpec | None = None
    audit: list[dict] = field(default_factory=list)

    def list_seats(self) -> dict[str, int]:
        s = self.seats.sum(axis=(0, 2))
        return {l: int(s[k]) for k, l in enumerate(self.votes.dims[1])}

    def district_seats(self) -> dict[str, int]:
        s = self.seats.sum(axis=(1, 2))
        return {d: int(s[k]) for k, d in enumerate(self.votes.dims[0])}

    def gender_seats(self) -> dict[str, int]:
        s = self.seats.sum(axis=(0, 1))
        return {g: int(s[k]) for k, g in enumerate(self.votes.dims[2])}

    def total_votes(self, instance: ElectionInstance) -> int:
        return sum(instance.candidate(c).votes for c in self.assignment.elected)


# -- marginals and bounds ---------------------------------------------------


def below_threshold(votes: VoteTensor, threshold: float) -> np.ndarray:
    """Lists with strictly less than ``threshold`` of all votes."""
    lv = votes.projection(1)
    return lv < threshold * votes.total


def list_marginals(
    votes: VoteTensor,
    house_size: int,
    method: Method | str,
    threshold: float = DEFAULT_THRESHOLD,
    top_counts: Iterable[int] | None = None,
) -> np.ndarray:
    """National list seats by (bounded) D'Hondt on list vote totals.

    TPM: plain D'Hondt. TPM3: lists under the threshold are capped at 0.
    TPP: each list is guaranteed its number of district-top candidates.
    TPP3: as TPP, with lists under the threshold pinned to exactly that number.
    """
    method = Method(method)
    lv = votes.projection(1)
    labels = list(votes.dims[1])
    n = len(lv)
    tops = np.zeros(n, dtype=np.int64) if top_counts is None else np.asarray(list(top_counts), dtype=np.int64)
    lower = np.zeros(n, dtype=np.int64)
    upper = np.full(n, house_size, dtype=np.int64)
    small = below_threshold(votes, threshold)
    if method is Method.TPM3:
        upper[small] = 0
    elif method is Method.TPP:
        lower = tops.copy()
    elif method is Method.TPP3:
        lower = tops.copy()
        upper[small] = tops[small]
    elif method is not Method.TPM:
        raise ValueError(f"list marginals are not defined for {method.value}")
    res = dhondt_bounded(lv, house_size, lower, upper, labels)
    return np.array(res.seats, dtype=np.int64)


def gender_marginals(votes: VoteTensor, house_size: int) -> np.ndarray:
    """Half of the house per gender; an odd seat goes to the gender with a vote majority.

    On an exact vote tie with odd ``house_size`` the extra seat goes to the
    lexicographically smaller gender label.
    """
    gv = votes.projection(votes.ndim - 1)
    labels = votes.dims[-1]
    if len(gv) != 2:
        raise ValueError("gender marginals need exactly two genders")
    hi, lo = -(-house_size // 2), house_size // 2
    out = np.array([hi if 2 * v > votes.total else lo for v in gv], dtype=np.int64)
    if out.sum() != house_size:
        first = min(range(2), key=lambda k: labels[k])
        log.warning("exact gender vote tie with odd house size; extra seat to %s", labels[first])
        out[:] = lo
        out[first] = hi
    return out


def district_tops(instance: ElectionInstance, strict: bool = False) -> dict[str, Candidate]:
    """Most-voted candidate per district.

    Ties go to the candidate whose list has more national votes, then to the
    smaller candidate id; with ``strict`` a tie raises AmbiguousTop instead.
    """
    list_totals: dict[str, int] = defaultdict(int)
    for c in instance.candidates:
        list_totals[c.list] += c.votes
    by_district: dict[str, list[Candidate]] = defaultdict(list)
    for c in instance.candidates:
        by_district[c.district].append(c)
    tops = {}
    for d in instance.districts:
        cands = by_district.get(d, [])
        if not cands or max(c.votes for c in cands) <= 0:
            raise Infeasible(f"district {d!r} has no candidate with votes")
        best_votes = max(c.votes for c in cands)
        tied = [c for c in cands if c.votes == best_votes]
        if len(tied) > 1:
            if strict:
                raise AmbiguousTop(f"district {d!r}: {sorted(c.id for c in tied)} tie for the most votes")
            log.info("district %s: top-vote tie among %s", d, sorted(c.id for c in tied))
        tops[d] = min(tied, key=lambda c: (-list_totals[c.list], c.id))
    return tops


def plurality_bounds(
    instance: ElectionInstance, votes: VoteTensor | None = None, strict: bool = False
) -> tuple[np.ndarray, np.ndarray, dict[str, Candidate]]:
    """Lower bound 1 on the tuple of every district's top candidate; upper bound H."""
    votes = aggregate(instance) if votes is None else votes
    tops = district_tops(instance, strict)
    lower = np.zeros(votes.shape, dtype=np.int64)
    for d, c in tops.items():
        lower[votes.index(0, d), votes.index(1, c.list), votes.index(2, c.gender)] = 1
    upper = np.full(votes.shape, instance.house_size, dtype=np.int64)
    return lower, upper, tops


# -- candidate selection ------------------------------------------------------


def _split_over_sublists(cands: list[Candidate], seats: int, protected: set[str], key) -> list[Candidate]:
    groups: dict[str, list[Candidate]] = defaultdict(list)
    for c in cands:
        groups[c.group].append(c)
    names = sorted(groups)
    for g in names:
        groups[g].sort(key=candidate_order)
    totals = [sum(c.votes for c in groups[g]) for g in names]
    lower = [1 if any(c.id in protected for c in groups[g]) else 0 for g in names]
    upper = [len(groups[g]) for g in names]
    if sum(upper) < seats:
        raise NotEnoughCandidates(key, seats, sum(upper))
    if len(names) == 1:
        return groups[names[0]][:seats]
    alloc = dhondt_bounded(totals, seats, lower, upper, names).seats
    chosen = []
    for g, k in zip(names, alloc):
        chosen.extend(groups[g][:k])
    return chosen


def select_candidates(
    seats: np.ndarray | Apportionment,
    instance: ElectionInstance,
    votes: VoteTensor | None = None,
    protected: Iterable[str] = (),
) -> Assignment:
    """Fill each tuple's seats: D'Hondt over sublists, then top-voted within each.

    Candidates in ``protected`` (district tops under plurality) force their
    sublist to receive at least one seat, so they are always elected.
    """
    if isinstance(seats, Apportionment):
        votes = seats.votes if votes is None else votes
        seats = seats.seats
    votes = aggregate(instance) if votes is None else votes
    protected = set(protected)
    by_tuple: dict[tuple, list[Candidate]] = defaultdict(list)
    for c in instance.candidates:
        if c.votes > 0:
            by_tuple[c.key].append(c)
    out: dict[tuple, list[str]] = {}
    elected: list[str] = []
    for ix in zip(*np.nonzero(seats)):
        key = tuple(votes.dims[i][int(k)] for i, k in enumerate(ix))
        s = int(seats[ix])
        chosen = _split_over_sublists(by_tuple.get(key, []), s, protected, key)
        ids = [c.id for c in sorted(chosen, key=candidate_order)]
        out[key] = ids
        elected.extend(ids)
    return Assignment(frozenset(elected), out)


def seats_from_assignment(assignment: Assignment, instance: ElectionInstance, votes: VoteTensor) -> np.ndarray:
    seats = np.zeros(votes.shape, dtype=np.int64)
    for cid in assignment.elected:
        c = instance.candidate(cid)
        seats[votes.index(0, c.district), votes.index(1, c.list), votes.index(2, c.gender)] += 1
    return seats


def _by_tuple(ids: Iterable[str], instance: ElectionInstance) -> dict[tuple, list[str]]:
    out: dict[tuple, list[str]] = defaultdict(list)
    for cid in ids:
        out[instance.candidate(cid).key].append(cid)
    return {k: sorted(v, key=lambda i: candidate_order(instance.candidate(i))) for k, v in out.items()}


# -- 3-proportional family ---------------------------------------------------


def build_spec(instance: ElectionInstance, config: MethodConfig, votes: VoteTensor | None = None, audit=None):
    """Marginals and bounds used by a 3-proportional method."""
    method = config.method
    votes = aggregate(instance) if votes is None else votes
    H = instance.house_size
    instance.require_two_genders()
    tops: dict[str, Candidate] = {}
    if method.uses_plurality:
        lower, upper, tops = plurality_bounds(instance, votes, config.strict_ties)
        top_counts = lower.sum(axis=(0, 2))
    else:
        lower = upper = None
        top_counts = None
    m_d = np.array([instance.district_seats[d] for d in votes.dims[0]], dtype=np.int64)
    m_l = list_marginals(votes, H, method, config.threshold, top_counts)
    m_g = gender_marginals(votes, H)
    spec = MarginalSpec.build(votes, [m_d, m_l, m_g], H, lower, upper)
    validate_marginals(spec, votes)
    if audit is not None:
        audit.append(
            {
                "event": "marginals",
                "district": dict(zip(votes.dims[0], m_d.tolist())),
                "list": dict(zip(votes.dims[1], m_l.tolist())),
                "gender": dict(zip(votes.dims[2], m_g.tolist())),
            }
        )
        if method.uses_threshold:
            small = below_threshold(votes, config.threshold)
            audit.append({"event": "threshold", "below": [l for l, s in zip(votes.dims[1], small) if s]})
        if tops:
            audit.append(
                {"event": "plurality", "tops": {d: {"candidate": c.id, "list": c.list, "gender": c.gender} for d, c in tops.items()}}
            )
    return votes, spec, tops


def run_tpm_family(instance: ElectionInstance, config: MethodConfig | Method | str) -> MethodResult:
    if not isinstance(config, MethodConfig):
        config = MethodConfig(Method(config))
    if not config.method.is_proportional:
        raise ValueError(f"{config.method.value} is not a 3-proportional method")
    audit: list[dict] = []
    votes, spec, tops = build_spec(instance, config, audit=audit)
    app = approximate_apportionment(votes, spec, config.policy, config.backend, config.method.value)
    for a in app.attempts:
        audit.append({"event": "rounding", "alpha": list(a.alpha), "route": a.route, "found": a.found})
    audit.append({"event": "deviation", "achieved": list(app.achieved_deviation)})
    assignment = select_candidates(app.seats, instance, votes, protected=[c.id for c in tops.values()])
    return MethodResult(config.method, votes, app.seats.copy(), assignment, app, spec, audit)


# -- Chilean Constitutional Convention method ----------------------------------


def _balanced(count: int, seats: int) -> bool:
    return count <= -(-seats // 2)


def run_ccm(instance: ElectionInstance) -> MethodResult:
    """Per-district D'Hondt over lists and sublists, then gender replacement."""
    instance.require_two_genders()
    votes = aggregate(instance)
    genders = votes.dims[2]
    audit: list[dict] = []
    by_district: dict[str, list[Candidate]] = defaultdict(list)
    for c in instance.candidates:
        by_district[c.district].append(c)
    elected: set[str] = set()
    for d in instance.districts:
        q = instance.district_seats[d]
        cands = by_district.get(d, [])
        lists = sorted({c.list for c in cands})
        lv = [sum(c.votes for c in cands if c.list == l) for l in lists]
        r = dhondt(lv, q, lists).seats
        audit.append({"event": "district_lists", "district": d, "seats": {l: s for l, s in zip(lists, r) if s}})
        chosen: list[Candidate] = []
        for l, s in zip(lists, r):
            if s:
                pool = [c for c in cands if c.list == l and c.votes > 0]
                chosen.extend(_split_over_sublists(pool, s, set(), (d, l)))
        current = {c.id for c in chosen}
        replacements = 0
        while True:
            counts = {g: sum(1 for cid in current if instance.candidate(cid).gender == g) for g in genders}
            over = [g for g in genders if not _balanced(counts[g], q)]
            if not over:
                break
            g_over = over[0]
            g_under = next(g for g in genders if g != g_over)
            out = min(
                (instance.candidate(cid) for cid in current if instance.candidate(cid).gender == g_over),
                key=lambda c: (c.votes, tuple(-ord(ch) for ch in c.id)),
            )
            pool = [c for c in cands if c.id not in current and c.gender == g_under and c.votes > 0]
            same_sub = [c for c in pool if c.list == out.list and c.group == out.group]
            same_list = [c for c in pool if c.list == out.list]
            repl = same_sub or same_list
            if not repl:
                err = ReplacementExhausted(
                    f"district {d!r}: no {g_under} candidate can replace {out.id}", audit
                )
                raise err
            inc = min(repl, key=candidate_order)
            current.discard(out.id)
            current.add(inc.id)
            replacements += 1
            audit.append(
                {
                    "event": "replacement",
                    "district": d,
                    "out": out.id,
                    "in": inc.id,
                    "scope": "sublist" if same_sub else "list",
                }
            )
        elected |= current
    assignment = Assignment(frozenset(elected), _by_tuple(elected, instance))
    seats = seats_from_assignment(assignment, instance, votes)
    return MethodResult(Method.CCM, votes, seats, assignment, None, None, audit)


# -- Greedy reference ---------------------------------------------------------


def run_greedy(instance: ElectionInstance) -> MethodResult:
    """Most-voted candidates per district subject to national gender marginals.

    Starts from the top ``q_d`` of every district and applies the cheapest
    same-district gender swap until the gender counts hit their marginals.
    The per-district value is concave in its number of seats per gender, so
    cheapest-swap-first is optimal.
    """
    instance.require_two_genders()
    votes = aggregate(instance)
    genders = votes.dims[2]
    targets = dict(zip(genders, gender_marginals(votes, instance.house_size).tolist()))
    pools: dict[str, dict[str, list[Candidate]]] = {}
    chosen: dict[str, dict[str, int]] = {}
    for d in instance.districts:
        cands = sorted((c for c in instance.candidates if c.district == d), key=candidate_order)
        q = instance.district_seats[d]
        if len(cands) < q:
            raise Infeasible(f"district {d!r} has fewer candidates than seats")
        pools[d] = {g: [c for c in cands if c.gender == g] for g in genders}
        top = cands[:q]
        chosen[d] = {g: sum(1 for c in top if c.gender == g) for g in genders}
    audit: list[dict] = []
    while True:
        counts = {g: sum(chosen[d][g] for d in chosen) for g in genders}
        over = [g for g in genders if counts[g] > targets[g]]
        if not over:
            break
        g_over = over[0]
        g_under = next(g for g in genders if g != g_over)
        best = None
        for d in instance.districts:
            k_over, k_under = chosen[d][g_over], chosen[d][g_under]
            if k_over == 0 or k_under >= len(pools[d][g_under]):
                continue
            out = pools[d][g_over][k_over - 1]
            inc = pools[d][g_under][k_under]
            loss = out.votes - inc.votes
            if best is None or loss < best[0]:
                best = (loss, d, out, inc)
        if best is None:
            raise Infeasible("gender marginals cannot be met within district magnitudes")
        _, d, out, inc = best
        chosen[d][g_over] -= 1
        chosen[d][g_under] += 1
        audit.append({"event": "swap", "district": d, "out": out.id, "in": inc.id})
    elected = {c.id for d in chosen for g in genders for c in pools[d][g][: chosen[d][g]]}
    assignment = Assignment(frozenset(elected), _by_tuple(elected, instance))
    seats = seats_from_assignment(assignment, instance, votes)
    return MethodResult(Method.GREEDY, votes, seats, assignment, None, None, audit)


def run_method(instance: ElectionInstance, method: Method | str, config: MethodConfig | None = None) -> MethodResult:
    method = Method(method)
    if method is Method.CCM:
        return run_ccm(instance)
    if method is Method.GREEDY:
        return run_greedy(instance)
    if config is None:
        config = MethodConfig(method)
    elif config.method is not method:
        config = MethodConfig(method, config.threshold, config.policy, config.backend, config.strict_ties)
    return run_tpm_family(instance, config)


def run_all(instance: ElectionInstance, methods: Iterable[Method | str] = ALL_METHODS, **kw) -> dict[Method, MethodResult]:
    return {Method(m): run_method(instance, m, **kw) for m in methods}


def list_totals(instance: ElectionInstance) -> Mapping[str, int]:
    out: dict[str, int] = defaultdict(int)
    for c in instance.candidates:
        out[c.list] += c.votes
    return dict(out)
