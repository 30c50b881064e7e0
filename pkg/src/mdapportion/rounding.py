"""Integral apportionments from an optimal LP solution.

Every floor/ceiling rounding of an optimal relaxation solution is
proportional with multipliers ``exp(Lambda)``; what remains is choosing a
rounding whose slice sums stay within ``alpha`` of the marginals.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import simplex
from .errors import GuaranteeViolated
from .lpcore import (
    INT_TOL,
    PrimalDualPair,
    build_lp,
    certificate,
    solve_lp,
)
from .model import Apportionment, MarginalSpec, VoteTensor, achieved_deviation

log = logging.getLogger(__name__)


def satisfies_guarantee(alpha: Sequence[int]) -> bool:
    """Whether ``sum_i 1 / (alpha_i + 2) <= 1``."""
    return sum(1.0 / (a + 2) for a in alpha) <= 1.0 + 1e-12


@dataclass(frozen=True)
class DeviationPolicy:
    schedule: tuple[tuple[int, ...], ...]
    fallback: tuple[int, ...]

    def __post_init__(self):
        if not satisfies_guarantee(self.fallback):
            raise ValueError(f"fallback deviation {self.fallback} has sum 1/(a+2) > 1")
        d = len(self.fallback)
        if any(len(a) != d for a in self.schedule):
            raise ValueError("all deviation vectors need the same length")

    @classmethod
    def default(cls, d: int = 3) -> "DeviationPolicy":
        """District-exact schedule for (district, list, gender); generic otherwise."""
        if d == 3:
            sched = tuple((0, 0, z) for z in range(5)) + tuple((1, 0, z) for z in range(5))
            return cls(sched, (1, 0, 4))
        return cls(((0,) * d,), (max(d - 2, 0),) * d)


def _problem(pair: PrimalDualPair):
    lp = pair.lp
    x = pair.x
    floor = np.floor(x + INT_TOL).astype(np.int64)
    frac_part = x - floor
    frac_pos = np.flatnonzero(frac_part > INT_TOL)
    return lp, floor, frac_part, frac_pos


def _element_rows(lp) -> np.ndarray:
    return lp.element_rows()


def round_exact(pair: PrimalDualPair, spec: MarginalSpec | None, alpha: Sequence[int]) -> np.ndarray | None:
    """Best floor/ceiling rounding within ``alpha`` of the marginals, or None.

    Depth-first branch and bound over the fractional entries. Among feasible
    roundings the one minimising ``sum |rounded - x|`` wins; ties go to the
    lexicographically smaller seat vector in row-major tuple order. Only
    values inside each tuple's certified window are considered.
    """
    lp, floor, frac_part, frac_pos = _problem(pair)
    spec = lp.spec if spec is None else spec
    d = lp.votes.ndim
    alpha = tuple(int(a) for a in alpha)
    rows = _element_rows(lp)
    targets = np.concatenate([np.asarray(m, dtype=float) for m in spec.marginals])
    alpha_row = np.concatenate([np.full(len(m), alpha[i]) for i, m in enumerate(spec.marginals)])
    base = np.zeros(len(targets))
    for i in range(d):
        np.add.at(base, rows[:, i], floor)
    lo_need = np.ceil(targets - alpha_row - base - 1e-9).astype(int)
    hi_need = np.floor(targets + alpha_row - base + 1e-9).astype(int)

    cert = certificate(pair)
    windows = [cert.windows[tuple(int(a) for a in lp.support[p])] for p in range(lp.n_support)]
    frac_set = set(int(p) for p in frac_pos)
    for p in range(lp.n_support):
        if p not in frac_set and int(floor[p]) not in windows[p]:
            log.warning("integral LP entry outside its certified window at %s", tuple(lp.support[p]))
            return None

    undecided = np.zeros(len(targets), dtype=int)
    for p in frac_pos:
        undecided[rows[p]] += 1
    if np.any(hi_need < 0) or np.any(undecided < lo_need):
        return None

    n = len(frac_pos)
    options = []
    for p in frac_pos:
        f = float(frac_part[p])
        opts = []
        for up in (0, 1):
            if int(floor[p]) + up in windows[p]:
                opts.append((f if up == 0 else 1.0 - f, up))
        opts.sort()
        options.append(opts)
    min_cost = [min(c for c, _ in o) if o else math.inf for o in options]
    suffix = np.zeros(n + 1)
    for j in range(n - 1, -1, -1):
        suffix[j] = suffix[j + 1] + min_cost[j]
    if not math.isfinite(suffix[0]):
        return None

    prow = [tuple(int(r) for r in rows[p]) for p in frac_pos]
    ceils = np.zeros(len(targets), dtype=int)
    choice = [0] * n
    best = {"cost": math.inf, "choice": None}

    def feasible(rs) -> bool:
        for r in rs:
            if ceils[r] > hi_need[r] or ceils[r] + undecided[r] < lo_need[r]:
                return False
        return True

    def dfs(j: int, cost: float) -> None:
        if cost + suffix[j] > best["cost"] + 1e-12:
            return
        if j == n:
            cur = tuple(choice)
            if cost < best["cost"] - 1e-12 or best["choice"] is None or cur < best["choice"]:
                best["cost"] = min(cost, best["cost"])
                best["choice"] = cur
            return
        rs = prow[j]
        for c, up in options[j]:
            for r in rs:
                undecided[r] -= 1
                ceils[r] += up
            choice[j] = up
            if feasible(rs):
                dfs(j + 1, cost + c)
            for r in rs:
                undecided[r] += 1
                ceils[r] -= up
        choice[j] = 0

    dfs(0, 0.0)
    if best["choice"] is None:
        return None
    seats = floor.copy()
    seats[frac_pos] += np.asarray(best["choice"], dtype=np.int64)
    out = np.zeros(lp.votes.shape, dtype=np.int64)
    out[tuple(lp.support.T)] = seats
    return out


def _vertex_objective(n: int) -> np.ndarray:
    # fixed irrational-ish weights: any generic cost makes the optimum a vertex
    return np.array([math.sin(1.0 + 0.7 * j) for j in range(n)])


def round_guaranteed(
    pair: PrimalDualPair, spec: MarginalSpec | None, alpha: Sequence[int]
) -> np.ndarray:
    """Iterated LP rounding with constraint dropping.

    Keeps every entry inside its original floor/ceiling box. A marginal
    constraint of dimension ``i`` is dropped once at most ``alpha_i + 1`` of
    its entries are still fractional; ``sum 1/(alpha_i+2) <= 1`` ensures that
    each vertex either fixes an entry or frees a constraint.
    """
    alpha = tuple(int(a) for a in alpha)
    if not satisfies_guarantee(alpha):
        raise ValueError(f"deviation {alpha} does not satisfy sum 1/(a+2) <= 1")
    lp, floor, frac_part, frac_pos = _problem(pair)
    spec = lp.spec if spec is None else spec
    d = lp.votes.ndim
    rows = _element_rows(lp)
    n_rows = sum(len(m) for m in spec.marginals)
    targets = np.concatenate([np.asarray(m, dtype=float) for m in spec.marginals])
    row_dim = np.concatenate([np.full(len(m), i) for i, m in enumerate(spec.marginals)])

    z = pair.x.astype(float).copy()
    box_lo = floor.astype(float)
    box_hi = np.ceil(pair.x - INT_TOL)
    fixed = np.ones(lp.n_support, dtype=bool)
    fixed[frac_pos] = False
    z[fixed] = np.round(z[fixed])
    active = np.ones(n_rows, dtype=bool)

    while not fixed.all():
        free = np.flatnonzero(~fixed)
        counts = np.zeros(n_rows, dtype=int)
        for i in range(d):
            np.add.at(counts, rows[free, i], 1)
        dropped = active & (counts <= np.array([alpha[row_dim[r]] + 1 for r in range(n_rows)]))
        active &= ~dropped
        act = np.flatnonzero(active)
        A = np.zeros((len(act), len(free)))
        pos = {int(r): k for k, r in enumerate(act)}
        for col, p in enumerate(free):
            for i in range(d):
                r = int(rows[p, i])
                if r in pos:
                    A[pos[r], col] = 1.0
        fixed_sum = np.zeros(n_rows)
        fixed_idx = np.flatnonzero(fixed)
        for i in range(d):
            np.add.at(fixed_sum, rows[fixed_idx, i], z[fixed_idx])
        b = targets[act] - fixed_sum[act]
        if len(act) == 0:
            # nothing left to respect: round toward the current values
            z[free] = np.where(z[free] - box_lo[free] >= 0.5, box_hi[free], box_lo[free])
            fixed[free] = True
            break
        res = simplex.solve(_vertex_objective(len(free)), A, b, box_lo[free], box_hi[free])
        if res.status != "optimal":
            raise GuaranteeViolated(f"iterated rounding LP ended with status {res.status}")
        z[free] = res.x
        newly = np.abs(res.x - np.round(res.x)) <= 1e-7
        if not newly.any() and not dropped.any():
            raise GuaranteeViolated("iterated rounding made no progress at a vertex")
        z[free[newly]] = np.round(res.x[newly])
        fixed[free[newly]] = True

    seats = np.zeros(lp.votes.shape, dtype=np.int64)
    seats[tuple(lp.support.T)] = np.round(z).astype(np.int64)
    dev = achieved_deviation(seats, spec)
    if any(a > b for a, b in zip(dev, alpha)):
        raise GuaranteeViolated(f"deviation {dev} exceeds the guaranteed {alpha}")
    return seats


@dataclass
class Attempt:
    alpha: tuple[int, ...]
    route: str
    found: bool


@dataclass
class RoundingTrace:
    attempts: list[Attempt] = field(default_factory=list)


def approximate_apportionment(
    votes: VoteTensor,
    spec: MarginalSpec,
    policy: DeviationPolicy | None = None,
    backend: str = "simplex",
    method: str = "",
    pair: PrimalDualPair | None = None,
) -> Apportionment:
    """Walk the deviation schedule with exact rounding, then fall back.

    Returns the first success together with the deviations it achieved.
    :class:`~mdapportion.errors.Infeasible` propagates from the LP solve.
    """
    policy = DeviationPolicy.default(votes.ndim) if policy is None else policy
    if pair is None:
        pair = solve_lp(build_lp(votes, spec), backend)
    attempts = []
    seats = None
    used = None
    for alpha in policy.schedule:
        seats = round_exact(pair, spec, alpha)
        attempts.append(Attempt(tuple(alpha), "exact", seats is not None))
        if seats is not None:
            used = tuple(alpha)
            break
    if seats is None:
        seats = round_guaranteed(pair, spec, policy.fallback)
        attempts.append(Attempt(policy.fallback, "guaranteed", True))
        used = policy.fallback
    return Apportionment(
        votes=votes,
        seats=seats,
        multipliers=pair.multipliers,
        achieved_deviation=achieved_deviation(seats, spec),
        method=method,
        alpha=used,
        attempts=tuple(attempts),
    )
