import numpy as np
import pytest
from conftest import DISTRICTS, GENDERS, LISTS, TABLE1

from mdapportion.errors import ParseError, ValidationError
from mdapportion.model import (
    Candidate,
    ElectionInstance,
    MarginalSpec,
    VoteTensor,
    aggregate,
    instance_from_tensor,
    load_instance,
    split_votes,
    validate_marginals,
    write_instance,
)


def test_example_aggregates_to_table1(example):
    v = aggregate(example)
    assert v.dims == (DISTRICTS, LISTS, GENDERS)
    assert np.array_equal(v.values, TABLE1)
    assert v["D1", "A", "F"] == 583494
    assert example.house_size == 33


def test_example_support_count(example):
    # Table 1 has 27 nonzero (district, list, gender) cells
    assert len(aggregate(example).support()) == int((TABLE1 > 0).sum()) == 27


def test_aggregate_sums_candidates_sharing_a_tuple():
    inst = ElectionInstance(
        [Candidate("a", "d", "l", "F", 100), Candidate("b", "d", "l", "F", 50), Candidate("c", "d", "l", "M", 1)],
        {"d": 1},
    )
    v = aggregate(inst)
    assert v["d", "l", "F"] == 150


def test_empty_tuple_is_outside_support():
    inst = ElectionInstance(
        [Candidate("a", "d1", "l1", "F", 10), Candidate("b", "d2", "l2", "M", 5)], {"d1": 1, "d2": 1}
    )
    v = aggregate(inst)
    assert v["d1", "l2", "M"] == 0
    assert (0, 1, 1) not in v.support()


def test_aggregate_is_linear():
    rng = np.random.default_rng(3)
    c1 = [Candidate(f"x{k}", f"d{k % 2}", f"l{k % 3}", "FM"[k % 2], int(rng.integers(0, 50))) for k in range(12)]
    c2 = [Candidate(f"y{k}", f"d{k % 2}", f"l{k % 3}", "FM"[(k + 1) % 2], int(rng.integers(0, 50))) for k in range(12)]
    seats = {"d0": 1, "d1": 1}
    a = aggregate(ElectionInstance(c1 + c2, seats)).values
    b1, b2 = aggregate(ElectionInstance(c1, seats)), aggregate(ElectionInstance(c2, seats))
    assert a.sum() == b1.total + b2.total
    assert np.array_equal(a, b1.values + b2.values)


def test_house_size_mismatch_rejected(tmp_path, example):
    cands = tmp_path / "c.csv"
    dists = tmp_path / "d.csv"
    write_instance(example, cands, dists)
    with pytest.raises(ValidationError):
        load_instance(cands, dists, house_size=32)


def test_unknown_district_rejected(tmp_path):
    (tmp_path / "c.csv").write_text("candidate_id,district,list,sublist,gender,votes\nx,D9,A,,F,3\n")
    (tmp_path / "d.csv").write_text("district,seats,population\nD1,2,\n")
    with pytest.raises(ValidationError):
        load_instance(tmp_path / "c.csv", tmp_path / "d.csv").validate()


def test_duplicate_candidate_rejected(tmp_path):
    (tmp_path / "c.csv").write_text("candidate_id,district,list,sublist,gender,votes\nx,D1,A,,F,3\nx,D1,B,,M,4\n")
    (tmp_path / "d.csv").write_text("district,seats,population\nD1,2,\n")
    with pytest.raises(ValidationError):
        load_instance(tmp_path / "c.csv", tmp_path / "d.csv").validate()


def test_malformed_row_reports_line(tmp_path):
    (tmp_path / "c.csv").write_text("candidate_id,district,list,sublist,gender,votes\nx,D1,A,,F,3\ny,D1,A,,F,many\n")
    (tmp_path / "d.csv").write_text("district,seats,population\nD1,2,\n")
    with pytest.raises(ParseError) as err:
        load_instance(tmp_path / "c.csv", tmp_path / "d.csv")
    assert err.value.line == 3


def test_round_trip(tmp_path, example):
    write_instance(example, tmp_path / "c.csv", tmp_path / "d.csv")
    again = load_instance(tmp_path / "c.csv", tmp_path / "d.csv")
    assert again.candidates == example.candidates
    assert again.district_seats == example.district_seats
    assert again.house_size == example.house_size


def test_example_marginals_validate(table1_votes):
    spec = MarginalSpec.build(table1_votes, [[6, 15, 12], [13, 1, 15, 3, 0, 1], [17, 16]])
    validate_marginals(spec, table1_votes)


def test_marginal_sum_off_by_one_rejected(table1_votes):
    with pytest.raises(ValidationError):
        spec = MarginalSpec.build(table1_votes, [[6, 15, 11], [13, 1, 15, 3, 0, 1], [17, 16]], house_size=33)
        validate_marginals(spec, table1_votes)


def test_inverted_bounds_rejected(table1_votes):
    lower = np.zeros(table1_votes.shape, dtype=int)
    upper = np.full(table1_votes.shape, 33)
    lower[0, 0, 0], upper[0, 0, 0] = 2, 1
    with pytest.raises(ValidationError):
        spec = MarginalSpec.build(table1_votes, [[6, 15, 12], [13, 1, 15, 3, 0, 1], [17, 16]], lower=lower, upper=upper)
        validate_marginals(spec, table1_votes)


def _brute_force_eq4_eq5(spec, votes):
    H = spec.house_size
    for i, m in enumerate(spec.marginals):
        if sum(m) != H:
            return False
        for k, mv in enumerate(m):
            sl = [slice(None)] * votes.ndim
            sl[i] = k
            lo = spec.lower[tuple(sl)][votes.values[tuple(sl)] > 0].sum()
            hi = np.minimum(spec.upper[tuple(sl)], H)[votes.values[tuple(sl)] > 0].sum()
            if not lo <= mv <= hi:
                return False
    return bool(np.all(spec.lower <= spec.upper))


def test_validate_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(150):
        V = rng.integers(0, 4, size=(2, 3, 2))
        if V.sum() == 0:
            continue
        votes = VoteTensor((("a", "b"), ("x", "y", "z"), ("F", "M")), V)
        H = int(rng.integers(1, 6))
        ms = []
        for n in (2, 3, 2):
            cut = np.sort(rng.integers(0, H + 1, size=n - 1))
            ms.append(np.diff(np.concatenate([[0], cut, [H]])))
        if rng.random() < 0.3:
            ms[0] = ms[0] + np.eye(2, dtype=int)[0]
        lower = (rng.random(V.shape) < 0.2).astype(int)
        upper = np.where(rng.random(V.shape) < 0.2, rng.integers(0, 3, size=V.shape), H)
        try:
            spec = MarginalSpec.build(votes, ms, house_size=H, lower=lower, upper=upper)
            validate_marginals(spec, votes)
            ok = True
        except ValidationError:
            ok = False
            spec = None
        if spec is None:
            try:
                spec = MarginalSpec(tuple(np.asarray(m) for m in ms), lower, upper, H)
            except ValidationError:
                continue
        assert ok == _brute_force_eq4_eq5(spec, votes)


def test_split_votes_positive_and_exact():
    for total in (1, 2, 7, 100, 160686):
        for n in (1, 2, 5, 15):
            parts = split_votes(total, n)
            assert sum(parts) == total
            assert all(p > 0 for p in parts)
            assert parts == sorted(parts, reverse=True)


def test_instance_from_tensor_reaggregates(table1_votes):
    inst = instance_from_tensor(table1_votes, {"D1": 6, "D2": 15, "D3": 12})
    assert np.array_equal(aggregate(inst).values, table1_votes.values)
