"""Fractional d-dimensional fair share by iterative proportional fitting.

The fair share is the unique tensor ``f = V * prod_i lam_i[e_i]`` whose slice
sums equal the marginals. It also minimises
``sum f_e (log(f_e / V_e) - 1)`` over the marginal polytope.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NonConvergence, ValidationError
from .model import MarginalSpec, VoteTensor

DEFAULT_TOL = 1e-9
MAX_SWEEPS = 100_000


@dataclass(frozen=True)
class FairShare:
    votes: VoteTensor
    values: np.ndarray
    multipliers: tuple[np.ndarray, ...]
    residual: float
    sweeps: int = 0

    def marginal_sums(self) -> list[np.ndarray]:
        return [_slice_sums(self.values, i) for i in range(self.values.ndim)]


def _slice_sums(arr: np.ndarray, dim: int) -> np.ndarray:
    axes = tuple(a for a in range(arr.ndim) if a != dim)
    return arr.sum(axis=axes)


def _broadcast(vec: np.ndarray, dim: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[dim] = len(vec)
    return vec.reshape(shape)


def _marginal_vectors(marginals, votes: VoteTensor) -> list[np.ndarray]:
    if isinstance(marginals, MarginalSpec):
        marginals = marginals.marginals
    ms = [np.asarray(m, dtype=float) for m in marginals]
    if len(ms) != votes.ndim or any(len(m) != n for m, n in zip(ms, votes.shape)):
        raise ValidationError("marginals do not match the vote tensor dimensions")
    return ms


def fair_share(
    votes: VoteTensor,
    marginals: MarginalSpec | Sequence[Sequence[float]],
    tolerance: float = DEFAULT_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> FairShare:
    """Scale ``votes`` so every slice sum matches its marginal.

    Bounds in a :class:`MarginalSpec` are ignored. Elements with a zero
    marginal are removed first; their tuples get value 0 and multiplier 0 is
    never reported (those multipliers are left at 1). Raises
    :class:`NonConvergence` when the support admits no exact scaling.
    """
    ms = _marginal_vectors(marginals, votes)
    d = votes.ndim
    V = votes.values.astype(float)
    keep = votes.mask.copy()
    for i, m in enumerate(ms):
        if (m < 0).any():
            raise ValidationError("marginals must be nonnegative")
        keep &= _broadcast(m > 0, i, d)
    V = np.where(keep, V, 0.0)
    # every positive marginal needs some support left to carry it
    for i, m in enumerate(ms):
        carried = _slice_sums(V, i) > 0
        if ((m > 0) & ~carried).any():
            k = int(np.argmax((m > 0) & ~carried))
            raise NonConvergence(0, float(m[k]))

    lams = [np.ones(n) for n in votes.shape]
    # start from an overall scale matching the house size
    total = V.sum()
    target = ms[0].sum() if d else 0.0
    if total > 0:
        lams[0] *= target / total

    def current() -> np.ndarray:
        out = V.copy()
        for i, lam in enumerate(lams):
            out *= _broadcast(lam, i, d)
        return out

    f = current()
    residual = max(float(np.max(np.abs(_slice_sums(f, i) - m))) for i, m in enumerate(ms))
    sweeps = 0
    while residual > tolerance and sweeps < max_sweeps:
        for i, m in enumerate(ms):
            s = _slice_sums(f, i)
            ratio = np.divide(m, s, out=np.ones_like(m), where=s > 0)
            lams[i] *= ratio
            f *= _broadcast(ratio, i, d)
        sweeps += 1
        residual = max(float(np.max(np.abs(_slice_sums(f, i) - m))) for i, m in enumerate(ms))
        if sweeps % 64 == 0:
            f = current()  # limit drift of the incremental product
    if residual > tolerance:
        raise NonConvergence(sweeps, residual)

    lams = _normalise(lams)
    f = current()
    residual = max(float(np.max(np.abs(_slice_sums(f, i) - m))) for i, m in enumerate(ms))
    return FairShare(votes, f, tuple(lams), residual, sweeps)


def _normalise(lams: list[np.ndarray]) -> list[np.ndarray]:
    """Fold the geometric mean of dimensions 2..d into dimension 1."""
    out = [lam.copy() for lam in lams]
    for i in range(1, len(out)):
        g = float(np.exp(np.mean(np.log(out[i]))))
        out[i] /= g
        out[0] *= g
    return out


def check_exactness(votes: VoteTensor, marginals) -> float | None:
    """Return ``delta`` when ``delta * V`` already meets every marginal, else None."""
    ms = _marginal_vectors(marginals, votes)
    total = votes.total
    if total == 0:
        return None
    house = float(ms[0].sum())
    delta = house / total
    for i, m in enumerate(ms):
        proj = votes.projection(i) * delta
        if not np.allclose(proj, m, rtol=1e-12, atol=1e-9):
            return None
    return delta


def restrict(share: FairShare, subsets: Sequence[Sequence[str]]) -> tuple[FairShare, list[np.ndarray]]:
    """Restrict a fair share to a sub-box and return the induced marginals."""
    votes = share.votes
    if len(subsets) != votes.ndim:
        raise ValueError("one subset per dimension is required")
    idx = []
    for i, sub in enumerate(subsets):
        if not sub:
            raise ValueError("subsets must be nonempty")
        idx.append([votes.index(i, v) for v in sub])
    grid = np.ix_(*idx)
    sub_votes = VoteTensor([list(s) for s in subsets], votes.values[grid], votes.names)
    values = share.values[grid]
    lams = tuple(lam[ix] for lam, ix in zip(share.multipliers, idx))
    induced = [_slice_sums(values, i) for i in range(values.ndim)]
    return FairShare(sub_votes, values, lams, share.residual), induced
