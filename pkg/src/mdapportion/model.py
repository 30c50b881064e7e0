"""Domain types, validation, vote aggregation and CSV ingestion."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError

CANDIDATE_FIELDS = ("candidate_id", "district", "list", "sublist", "gender", "votes")
DISTRICT_FIELDS = ("district", "seats", "population")
CHILEAN_DIMENSIONS = ("district", "list", "gender")


@dataclass(frozen=True)
class Candidate:
    id: str
    district: str
    list: str
    gender: str
    votes: int
    sublist: str | None = None

    def __post_init__(self):
        if self.votes < 0:
            raise ValidationError(f"candidate {self.id!r} has negative votes")

    @property
    def group(self) -> str:
        """Sublist used for the second divisor round; defaults to the list."""
        return self.sublist if self.sublist else self.list

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.district, self.list, self.gender)


def candidate_order(c: Candidate):
    """Sort key: most votes first, then lexicographically smaller id."""
    return (-c.votes, c.id)


@dataclass(frozen=True)
class ElectionInstance:
    candidates: tuple[Candidate, ...]
    district_seats: Mapping[str, int]
    house_size: int | None = None
    populations: Mapping[str, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "district_seats", dict(self.district_seats))
        if self.populations is not None:
            object.__setattr__(self, "populations", dict(self.populations))
        total = sum(self.district_seats.values())
        if self.house_size is None:
            object.__setattr__(self, "house_size", total)
        self.validate()

    def validate(self) -> None:
        if not self.district_seats:
            raise ValidationError("no districts given")
        for d, q in self.district_seats.items():
            if q <= 0:
                raise ValidationError(f"district {d!r} must have a positive seat count")
        total = sum(self.district_seats.values())
        if total != self.house_size:
            raise ValidationError(
                f"district seats sum to {total} but the house size is {self.house_size}"
            )
        seen = set()
        for c in self.candidates:
            if c.id in seen:
                raise ValidationError(f"duplicate candidate id {c.id!r}")
            seen.add(c.id)
            if c.district not in self.district_seats:
                raise ValidationError(
                    f"candidate {c.id!r} references unknown district {c.district!r}"
                )
        if self.populations is not None:
            for d, p in self.populations.items():
                if d not in self.district_seats:
                    raise ValidationError(f"population given for unknown district {d!r}")
                if p <= 0:
                    raise ValidationError(f"district {d!r} must have a positive population")

    @property
    def districts(self) -> tuple[str, ...]:
        return tuple(self.district_seats)

    @property
    def lists(self) -> tuple[str, ...]:
        return tuple(sorted({c.list for c in self.candidates}))

    @property
    def genders(self) -> tuple[str, ...]:
        return tuple(sorted({c.gender for c in self.candidates}))

    def candidate(self, cid: str) -> Candidate:
        return self._by_id[cid]

    @property
    def _by_id(self) -> dict[str, Candidate]:
        cache = self.__dict__.get("_id_cache")
        if cache is None:
            cache = {c.id: c for c in self.candidates}
            object.__setattr__(self, "_id_cache", cache)
        return cache

    def require_two_genders(self) -> None:
        if len(self.genders) != 2:
            raise ValidationError(
                f"the Chilean methods need exactly two genders, found {list(self.genders)}"
            )


class VoteTensor:
    """Nonnegative integer votes over the product of labelled element sets.

    Stored densely; zero entries are outside the support and never receive
    seats.
    """

    __slots__ = ("dims", "names", "values")

    def __init__(self, dims: Sequence[Sequence[str]], values, names: Sequence[str] | None = None):
        dims = tuple(tuple(str(v) for v in d) for d in dims)
        arr = np.array(values, dtype=np.int64)
        if arr.shape != tuple(len(d) for d in dims):
            raise ValidationError(
                f"vote array shape {arr.shape} does not match dimensions "
                f"{tuple(len(d) for d in dims)}"
            )
        if (arr < 0).any():
            raise ValidationError("vote counts must be nonnegative")
        for d in dims:
            if len(set(d)) != len(d):
                raise ValidationError(f"duplicate element labels in dimension {d}")
        arr.setflags(write=False)
        if names is None:
            names = tuple(f"dim{i}" for i in range(len(dims)))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "names", tuple(names))
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("VoteTensor is immutable")

    def __repr__(self):
        shape = "x".join(str(len(d)) for d in self.dims)
        return f"VoteTensor({shape}, support={len(self.support())}, total={self.total})"

    def __eq__(self, other):
        return (
            isinstance(other, VoteTensor)
            and self.dims == other.dims
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.dims, self.values.tobytes()))

    @classmethod
    def from_entries(cls, dims, entries: Mapping[tuple, int], names=None) -> "VoteTensor":
        dims = tuple(tuple(d) for d in dims)
        index = [{v: k for k, v in enumerate(d)} for d in dims]
        arr = np.zeros(tuple(len(d) for d in dims), dtype=np.int64)
        for key, val in entries.items():
            arr[tuple(ix[k] for ix, k in zip(index, key))] += int(val)
        return cls(dims, arr, names)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def total(self) -> int:
        return int(self.values.sum())

    @property
    def mask(self) -> np.ndarray:
        return self.values > 0

    def support(self) -> list[tuple[int, ...]]:
        """Index tuples of E(V) in row-major order."""
        return [tuple(int(i) for i in ix) for ix in np.argwhere(self.values > 0)]

    def index(self, dim: int, label: str) -> int:
        return self.dims[dim].index(label)

    def __getitem__(self, labels: tuple) -> int:
        return int(self.values[tuple(self.index(i, k) for i, k in enumerate(labels))])

    def entries(self) -> dict[tuple, int]:
        return {
            tuple(self.dims[i][k] for i, k in enumerate(ix)): int(self.values[ix])
            for ix in self.support()
        }

    def projection(self, dim: int) -> np.ndarray:
        """Vote totals per element of one dimension."""
        axes = tuple(a for a in range(self.ndim) if a != dim)
        return self.values.sum(axis=axes)

    def scaled(self, factor) -> "VoteTensor":
        return VoteTensor(self.dims, self.values * factor, self.names)


def aggregate(instance: ElectionInstance) -> VoteTensor:
    """Sum candidate votes into a (district, list, gender) tensor."""
    dims = (instance.districts, instance.lists, instance.genders)
    entries: dict[tuple, int] = {}
    for c in instance.candidates:
        entries[c.key] = entries.get(c.key, 0) + c.votes
    return VoteTensor.from_entries(dims, entries, names=CHILEAN_DIMENSIONS)


@dataclass(frozen=True)
class MarginalSpec:
    """Target marginals per dimension element plus per-tuple seat bounds.

    ``marginals[i][k]`` is the target for element ``k`` of dimension ``i``;
    ``lower`` and ``upper`` have the shape of the vote tensor.
    """

    marginals: tuple[np.ndarray, ...]
    lower: np.ndarray
    upper: np.ndarray
    house_size: int

    def __post_init__(self):
        ms = tuple(np.asarray(m).copy() for m in self.marginals)
        lo = np.asarray(self.lower, dtype=np.int64).copy()
        hi = np.asarray(self.upper, dtype=np.int64).copy()
        for a in (*ms, lo, hi):
            a.setflags(write=False)
        object.__setattr__(self, "marginals", ms)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def build(cls, votes: VoteTensor, marginals, house_size=None, lower=None, upper=None):
        """Assemble a spec from per-dimension marginals given as mappings or arrays."""
        ms = []
        for i, m in enumerate(marginals):
            if isinstance(m, Mapping):
                arr = np.array([m.get(v, 0) for v in votes.dims[i]])
            else:
                arr = np.asarray(m)
                if arr.shape != (len(votes.dims[i]),):
                    raise ValidationError(f"marginal vector {i} has the wrong length")
            if np.issubdtype(arr.dtype, np.integer):
                arr = arr.astype(np.int64)
            ms.append(arr)
        if house_size is None:
            house_size = int(round(float(np.sum(ms[0]))))
        shape = votes.shape
        lo = np.zeros(shape, dtype=np.int64) if lower is None else np.broadcast_to(lower, shape)
        hi = np.full(shape, house_size, dtype=np.int64) if upper is None else np.broadcast_to(upper, shape)
        return cls(tuple(ms), lo, hi, int(house_size))

    def marginal(self, votes: VoteTensor, dim: int, label: str):
        return self.marginals[dim][votes.index(dim, label)]

    def with_bounds(self, lower=None, upper=None) -> "MarginalSpec":
        return MarginalSpec(
            self.marginals,
            self.lower if lower is None else lower,
            self.upper if upper is None else upper,
            self.house_size,
        )


def _slice_sum(arr: np.ndarray, dim: int) -> np.ndarray:
    axes = tuple(a for a in range(arr.ndim) if a != dim)
    return arr.sum(axis=axes)


def validate_marginals(spec: MarginalSpec, votes: VoteTensor) -> None:
    """Check marginal/bound consistency and that each dimension sums to H.

    Raises ValidationError naming the first violated constraint.
    """
    if len(spec.marginals) != votes.ndim:
        raise ValidationError("one marginal vector per dimension is required")
    mask = votes.mask
    lo = np.where(mask, spec.lower, 0)
    hi = np.where(mask, spec.upper, 0)
    bad = np.argwhere(mask & (spec.lower > spec.upper))
    if len(bad):
        ix = tuple(int(i) for i in bad[0])
        label = tuple(votes.dims[i][k] for i, k in enumerate(ix))
        raise ValidationError(
            f"lower bound {int(spec.lower[ix])} exceeds upper bound {int(spec.upper[ix])} at {label}"
        )
    for i, m in enumerate(spec.marginals):
        total = m.sum()
        if abs(total - spec.house_size) > 1e-9:
            raise ValidationError(
                f"marginals of dimension {votes.names[i]!r} sum to {total}, "
                f"expected house size {spec.house_size}"
            )
        lo_sum = _slice_sum(lo, i)
        hi_sum = _slice_sum(hi, i)
        for k, v in enumerate(votes.dims[i]):
            if m[k] < 0:
                raise ValidationError(f"negative marginal for {votes.names[i]} {v!r}")
            if lo_sum[k] > m[k]:
                raise ValidationError(
                    f"lower bounds of {votes.names[i]} {v!r} sum to {lo_sum[k]}, "
                    f"above its marginal {m[k]}"
                )
            if hi_sum[k] < m[k]:
                raise ValidationError(
                    f"upper bounds of {votes.names[i]} {v!r} sum to {hi_sum[k]}, "
                    f"below its marginal {m[k]}"
                )


@dataclass(frozen=True)
class Apportionment:
    votes: VoteTensor
    seats: np.ndarray
    multipliers: tuple[np.ndarray, ...]
    achieved_deviation: tuple[int, ...]
    method: str = ""
    alpha: tuple[int, ...] | None = None
    attempts: tuple = ()

    def seat_entries(self) -> dict[tuple, int]:
        dims = self.votes.dims
        return {
            tuple(dims[i][k] for i, k in enumerate(ix)): int(self.seats[ix])
            for ix in np.ndindex(self.seats.shape)
        }

    def sums(self, dim: int) -> dict[str, int]:
        s = _slice_sum(self.seats, dim)
        return {v: int(s[k]) for k, v in enumerate(self.votes.dims[dim])}

    def multiplier_map(self) -> list[dict[str, float]]:
        return [
            {v: float(lam[k]) for k, v in enumerate(self.votes.dims[i])}
            for i, lam in enumerate(self.multipliers)
        ]


@dataclass(frozen=True)
class Assignment:
    elected: frozenset[str]
    by_tuple: dict[tuple, list[str]] = field(default_factory=dict)

    def counts(self) -> dict[tuple, int]:
        return {k: len(v) for k, v in self.by_tuple.items() if v}


def achieved_deviation(seats: np.ndarray, spec: MarginalSpec) -> tuple[int, ...]:
    return tuple(
        int(round(float(np.max(np.abs(_slice_sum(seats, i) - m))))) if len(m) else 0
        for i, m in enumerate(spec.marginals)
    )


# -- CSV ingestion -------------------------------------------------------


def _read_rows(path: Path, required: Sequence[str]):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(str(exc), path) from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("empty file", path)
        header = [h.strip() for h in reader.fieldnames]
        missing = [f for f in required if f not in header]
        if missing:
            raise ParseError(f"missing columns {missing}", path, 1)
        reader.fieldnames = header
        for line, row in enumerate(reader, start=2):
            if None in row:
                raise ParseError("too many fields", path, line)
            yield line, {k: (v or "").strip() for k, v in row.items()}


def _parse_int(text: str, what: str, path, line) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{what} {text!r} is not an integer", path, line) from None


def load_candidates(path) -> list[Candidate]:
    path = Path(path)
    out = []
    for line, row in _read_rows(path, ("candidate_id", "district", "list", "gender", "votes")):
        for f in ("candidate_id", "district", "list", "gender"):
            if not row[f]:
                raise ParseError(f"empty {f}", path, line)
        votes = _parse_int(row["votes"], "votes", path, line)
        if votes < 0:
            raise ParseError("votes must be nonnegative", path, line)
        out.append(
            Candidate(
                id=row["candidate_id"],
                district=row["district"],
                list=row["list"],
                gender=row["gender"],
                votes=votes,
                sublist=row.get("sublist") or None,
            )
        )
    return out


def load_districts(path) -> tuple[dict[str, int], dict[str, int] | None]:
    path = Path(path)
    seats: dict[str, int] = {}
    pops: dict[str, int] = {}
    for line, row in _read_rows(path, ("district", "seats")):
        d = row["district"]
        if not d:
            raise ParseError("empty district", path, line)
        if d in seats:
            raise ValidationError(f"district {d!r} listed twice in {path}")
        seats[d] = _parse_int(row["seats"], "seats", path, line)
        if row.get("population"):
            pops[d] = _parse_int(row["population"], "population", path, line)
    return seats, (pops or None)


def load_instance(candidates_file, districts_file, house_size: int | None = None) -> ElectionInstance:
    """Read and validate an election from the candidates and districts CSVs.

    ``house_size`` defaults to the sum of district seats; when given it must
    match that sum.
    """
    candidates = load_candidates(candidates_file)
    seats, pops = load_districts(districts_file)
    if pops is not None and set(pops) != set(seats):
        missing = sorted(set(seats) - set(pops))
        raise ValidationError(f"population missing for districts {missing}")
    return ElectionInstance(candidates, seats, house_size, pops)


def write_instance(instance: ElectionInstance, candidates_file, districts_file) -> None:
    with open(candidates_file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CANDIDATE_FIELDS)
        for c in instance.candidates:
            w.writerow([c.id, c.district, c.list, c.sublist or "", c.gender, c.votes])
    with open(districts_file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DISTRICT_FIELDS)
        pops = instance.populations or {}
        for d, q in instance.district_seats.items():
            w.writerow([d, q, pops.get(d, "")])


def split_votes(total: int, n: int) -> list[int]:
    """Split a vote total over ``n`` candidates with strictly decreasing weights.

    Weights are 2n-1, 2n-2, ..., n; every candidate gets at least one vote
    when ``total >= n``, otherwise only ``total`` one-vote candidates exist.
    """
    if total <= 0:
        return []
    n = min(n, total)
    weights = [2 * n - 1 - j for j in range(n)]
    w = sum(weights)
    parts = [total * x // w for x in weights]
    parts[0] += total - sum(parts)
    # keep every share positive
    for j in range(n):
        if parts[j] == 0:
            parts[j] = 1
            parts[0] -= 1
    return parts


def instance_from_tensor(
    votes: VoteTensor,
    district_seats: Mapping[str, int],
    populations: Mapping[str, int] | None = None,
    per_tuple: int | Mapping[str, int] | None = None,
) -> ElectionInstance:
    """Synthesize candidates for a (district, list, gender) vote tensor.

    Each nonzero tuple gets ``per_tuple`` candidates (default: the district
    magnitude) whose votes split the tuple total via :func:`split_votes`.
    """
    cands = []
    districts, lists, genders = votes.dims
    for di, li, gi in itertools.product(*(range(len(d)) for d in votes.dims)):
        total = int(votes.values[di, li, gi])
        d, l, g = districts[di], lists[li], genders[gi]
        if per_tuple is None:
            n = district_seats[d]
        elif isinstance(per_tuple, Mapping):
            n = per_tuple[d]
        else:
            n = per_tuple
        for j, v in enumerate(split_votes(total, n), start=1):
            cands.append(Candidate(f"{d}-{l}-{g}-{j}", d, l, g, v))
    return ElectionInstance(cands, dict(district_seats), None, populations)


def example_paths() -> tuple[Path, Path]:
    """Paths of the bundled 6-list, 3-district, 33-seat example election."""
    base = Path(__file__).parent / "data"
    return base / "example_candidates.csv", base / "example_districts.csv"


def load_example() -> ElectionInstance:
    return load_instance(*example_paths())
