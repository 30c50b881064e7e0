"""Disproportionality, representativeness and vote-power metrics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .fairshare import fair_share
from .methods import MethodResult
from .model import ElectionInstance, VoteTensor

GI_FORMS = ("gallagher", "euclidean")


def gallagher(shares_a, shares_b, form: str = "gallagher") -> float:
    """Distance between two share vectors, in percent.

    ``gallagher`` is ``100 * sqrt(sum (a - b)^2 / 2)``; ``euclidean`` drops the 1/2.
    """
    a = np.asarray(shares_a, dtype=float)
    b = np.asarray(shares_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("share vectors must have the same shape")
    if form not in GI_FORMS:
        raise ValueError(f"unknown GI form {form!r}")
    for v in (a, b):
        if v.size and (np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9):
            raise ValueError("shares must be nonnegative and sum to 1")
    sq = float(np.sum((a - b) ** 2))
    if form == "gallagher":
        sq /= 2.0
    return 100.0 * math.sqrt(sq)


def _shares(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    s = v.sum()
    return v / s if s > 0 else v


@dataclass
class MetricsReport:
    method: str
    global_gallagher: float
    local_gallagher: dict[str, float]
    local_gallagher_avg: float
    gallagher_3d: float
    avg_votes: float
    avg_district_pct: float
    vote_power: dict[str, float]
    gi_form: str = "gallagher"

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self) -> list[dict]:
        """Flat rows for plotting: one per scalar metric, one per district for local metrics."""
        out = [
            {"method": self.method, "metric": name, "district": "", "value": getattr(self, name)}
            for name in ("global_gallagher", "local_gallagher_avg", "gallagher_3d", "avg_votes", "avg_district_pct")
        ]
        for d, v in self.local_gallagher.items():
            out.append({"method": self.method, "metric": "local_gallagher", "district": d, "value": v})
        for d, v in self.vote_power.items():
            out.append({"method": self.method, "metric": "vote_power", "district": d, "value": v})
        return out


def reference_share(votes: VoteTensor, district_seats, house_size: int):
    """3-dimensional fair share with districts at q, lists at their vote share of H, genders at H/2."""
    q = np.asarray(district_seats, dtype=float)
    lv = votes.projection(1).astype(float)
    m_l = house_size * lv / lv.sum()
    m_g = np.full(votes.shape[2], house_size / votes.shape[2])
    return fair_share(votes, [q, m_l, m_g])


def vote_power(instance: ElectionInstance, votes: VoteTensor) -> dict[str, float]:
    dv = votes.projection(0).astype(float)
    national = instance.house_size / float(votes.total)
    return {
        d: float((instance.district_seats[d] / dv[k]) / national) if dv[k] > 0 else math.inf
        for k, d in enumerate(votes.dims[0])
    }


def evaluate(result: MethodResult, instance: ElectionInstance, form: str = "gallagher", reference=None) -> MetricsReport:
    votes = result.votes
    seats = np.asarray(result.seats, dtype=float)
    V = votes.values.astype(float)
    H = instance.house_size

    g_global = gallagher(_shares(V.sum(axis=(0, 2))), _shares(seats.sum(axis=(0, 2))), form)

    local = {}
    for k, d in enumerate(votes.dims[0]):
        local[d] = gallagher(_shares(V[k].sum(axis=1)), _shares(seats[k].sum(axis=1)), form)
    local_avg = float(np.mean(list(local.values()))) if local else 0.0

    if reference is None:
        reference = reference_share(votes, [instance.district_seats[d] for d in votes.dims[0]], H)
    g3 = gallagher((reference.values / H).ravel(), (seats / H).ravel(), form)

    dv = {d: float(V[k].sum()) for k, d in enumerate(votes.dims[0])}
    elected = [instance.candidate(c) for c in sorted(result.assignment.elected)]
    avg_votes = float(np.mean([c.votes for c in elected])) if elected else 0.0
    avg_pct = float(np.mean([100.0 * c.votes / dv[c.district] for c in elected])) if elected else 0.0

    return MetricsReport(
        method=result.method.value,
        global_gallagher=g_global,
        local_gallagher=local,
        local_gallagher_avg=local_avg,
        gallagher_3d=g3,
        avg_votes=avg_votes,
        avg_district_pct=avg_pct,
        vote_power=vote_power(instance, votes),
        gi_form=form,
    )


def evaluate_all(results, instance: ElectionInstance, form: str = "gallagher") -> list[MetricsReport]:
    """Evaluate several results of one instance, sharing the reference fair share."""
    results = list(results)
    if not results:
        return []
    votes = results[0].votes
    ref = reference_share(votes, [instance.district_seats[d] for d in votes.dims[0]], instance.house_size)
    return [evaluate(r, instance, form, ref) for r in results]
