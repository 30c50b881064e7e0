from fractions import Fraction

import numpy as np
import pytest
from oracles import divisor_solutions, priority_dhondt, round_down_set

from mdapportion.divisor import (
    certify,
    clamped_round_set,
    dhondt,
    dhondt_bounded,
    highest_averages,
    round_set,
)
from mdapportion.errors import DegenerateInput, InfeasibleBounds


@pytest.mark.parametrize("t", [Fraction(0), Fraction(1, 3), Fraction(2), Fraction(7, 2), Fraction(5)])
def test_round_set_matches_oracle(t):
    assert set(round_set(t)) == round_down_set(t)


def test_round_set_examples():
    assert round_set(0) == {0}
    assert round_set(Fraction(5, 2)) == {2}
    assert round_set(3) == {2, 3}
    assert clamped_round_set(3, 3, 5) == {3}
    assert clamped_round_set(Fraction(1, 2), 1, 4) == {1}
    with pytest.raises(ValueError):
        round_set(-1)


def test_table1_district_example():
    # D1 column of the running example, list totals over genders
    votes = [825606, 82128, 424146, 175932, 160686, 0]
    res = dhondt(votes, 6)
    assert res.seats == (4, 0, 2, 0, 0, 0) == priority_dhondt(votes, 6)
    assert res.certifies(votes)
    assert sum(res.seats) == 6


def test_multiplier_six_millionths_certifies_national_list_seats():
    votes = [2185206, 196122, 2627586, 551946, 160686, 173682]
    res = dhondt(votes, 33)
    assert certify(res.seats, votes, Fraction(6, 1_000_000))
    assert res.certifies(votes)


def test_against_exhaustive_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 300:
        n = int(rng.integers(2, 5))
        votes = [int(x) for x in rng.integers(0, 12, size=n)]
        if not any(votes):
            continue
        H = int(rng.integers(1, 7))
        lower = [int(x) for x in rng.integers(0, 2, size=n)]
        upper = [lo + int(rng.integers(0, 4)) for lo in lower]
        sols = divisor_solutions(votes, H, lower, upper)
        try:
            res = dhondt_bounded(votes, H, lower, upper)
        except (InfeasibleBounds, DegenerateInput):
            assert not sols
            checked += 1
            continue
        assert res.seats in sols
        assert certify(res.seats, votes, res.multiplier, lower, upper)
        checked += 1


def test_small_votes_produce_ties_resolved_by_votes_then_label():
    # equal quotients at the breakpoint: larger party wins, then smaller label
    assert dhondt([2, 1], 2).seats == (2, 0)  # 2/2 == 1/1
    res = dhondt([4, 2], 2)
    assert res.seats == (2, 0)  # 4/2 == 2/1, more votes first
    res = dhondt([3, 3], 1, labels=["b", "a"])
    assert res.seats == (0, 1)


def test_unbounded_matches_highest_averages():
    rng = np.random.default_rng(1)
    for _ in range(500):
        n = int(rng.integers(1, 8))
        votes = [int(x) for x in rng.integers(0, 60, size=n)]
        if not any(votes):
            continue
        H = int(rng.integers(0, 25))
        assert dhondt(votes, H).seats == highest_averages(votes, H) == priority_dhondt(votes, H)


def test_bounds_are_respected_and_infeasible_detected():
    rng = np.random.default_rng(2)
    for _ in range(300):
        n = int(rng.integers(2, 7))
        votes = [int(x) for x in rng.integers(1, 1000, size=n)]
        lower = [int(x) for x in rng.integers(0, 3, size=n)]
        upper = [lo + int(x) for lo, x in zip(lower, rng.integers(0, 5, size=n))]
        H = int(rng.integers(0, 20))
        if sum(lower) <= H <= sum(min(u, H) for u in upper):
            res = dhondt_bounded(votes, H, lower, upper)
            assert sum(res.seats) == H
            assert all(lo <= s <= hi for s, lo, hi in zip(res.seats, lower, upper))
            assert certify(res.seats, votes, res.multiplier, lower, upper)
        else:
            with pytest.raises(InfeasibleBounds):
                dhondt_bounded(votes, H, lower, upper)


def test_scale_invariance():
    rng = np.random.default_rng(4)
    for _ in range(200):
        votes = [int(x) for x in rng.integers(1, 500, size=5)]
        H = int(rng.integers(1, 30))
        k = int(rng.integers(2, 50))
        assert dhondt(votes, H).seats == dhondt([k * v for v in votes], H).seats


def test_lower_bounds_filling_house():
    res = dhondt_bounded([10, 5, 0], 3, [1, 1, 1], [3, 3, 3])
    assert res.seats == (1, 1, 1)
    assert res.certifies([10, 5, 0], [1, 1, 1], [3, 3, 3])


def test_degenerate_inputs():
    with pytest.raises(DegenerateInput):
        dhondt([0, 0], 2)
    with pytest.raises(ValueError):
        dhondt([-1, 3], 2)
    with pytest.raises(InfeasibleBounds):
        dhondt_bounded([1, 1], 5, [0, 0], [2, 2])
    with pytest.raises(InfeasibleBounds):
        dhondt_bounded([1, 1], 1, [1, 1], [2, 2])


def test_multiplier_sweep_oracle_agrees_with_enumeration():
    from oracles import divisor_solutions_by_multiplier

    rng = np.random.default_rng(19)
    for _ in range(200):
        n = int(rng.integers(1, 4))
        votes = [int(x) for x in rng.integers(0, 9, size=n)]
        H = int(rng.integers(0, 6))
        lower = [int(x) for x in rng.integers(0, 2, size=n)]
        upper = [lo + int(rng.integers(0, 4)) for lo in lower]
        assert divisor_solutions_by_multiplier(votes, H, lower, upper) == divisor_solutions(votes, H, lower, upper)
