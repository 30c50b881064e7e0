import dataclasses
import itertools

import numpy as np
import pytest
from conftest import random_marginals, random_tensor

from mdapportion.errors import Infeasible, NotARounding
from mdapportion.lpcore import (
    build_lp,
    ceil_rounding,
    certify_rounding,
    floor_rounding,
    is_box_rounding,
    solve_lp,
    step_structure_ok,
    verify_kkt,
)
from mdapportion.model import MarginalSpec

EXAMPLE_MARGINALS = [[6, 15, 12], [13, 1, 15, 3, 0, 1], [17, 16]]


@pytest.fixture(scope="module")
def example_pair(table1_votes):
    spec = MarginalSpec.build(table1_votes, EXAMPLE_MARGINALS)
    return solve_lp(build_lp(table1_votes, spec))


def test_example_kkt(example_pair):
    report = verify_kkt(example_pair)
    assert report.passed, report.lines()
    assert step_structure_ok(example_pair)


def test_example_solution_is_integral_table2(example_pair):
    from conftest import TABLE2

    # the running example's LP optimum is already integral
    assert len(example_pair.fractional()) == 0
    assert np.array_equal(floor_rounding(example_pair), TABLE2)


def test_backends_agree(table1_votes):
    spec = MarginalSpec.build(table1_votes, EXAMPLE_MARGINALS)
    lp = build_lp(table1_votes, spec)
    a, b = solve_lp(lp, "simplex"), solve_lp(lp, "highs")
    assert a.objective == pytest.approx(b.objective, abs=1e-8)
    assert verify_kkt(b).passed


def test_random_instances_kkt_and_windows():
    rng = np.random.default_rng(12)
    for _ in range(25):
        votes = random_tensor(rng, (3, 3, 2), 1, 200, zero_prob=0.15)
        if any((votes.projection(i) == 0).any() for i in range(3)):
            continue
        spec = MarginalSpec.build(votes, random_marginals(rng, votes, 11))
        pair = solve_lp(build_lp(votes, spec))
        assert verify_kkt(pair).passed
        assert step_structure_ok(pair)
        # every floor/ceiling choice over the fractional entries is certified
        frac = pair.fractional()
        base = floor_rounding(pair)
        sup = pair.lp.support
        for bits in itertools.islice(itertools.product((0, 1), repeat=len(frac)), 256):
            cand = base.copy()
            for p, bit in zip(frac, bits):
                cand[tuple(sup[p])] += bit
            assert certify_rounding(pair, spec, cand)


def test_corrupted_pair_fails_kkt(example_pair):
    bad_lam = tuple(l.copy() for l in example_pair.Lambda)
    bad_lam[1][0] += 0.5
    assert not verify_kkt(dataclasses.replace(example_pair, Lambda=bad_lam)).passed
    y = example_pair.y.copy()
    y[0] = 0.5
    assert not verify_kkt(dataclasses.replace(example_pair, y=y)).passed


def test_not_a_rounding(example_pair):
    cand = ceil_rounding(example_pair).copy()
    cand[0, 0, 0] += 1
    assert not is_box_rounding(example_pair, cand)
    with pytest.raises(NotARounding):
        certify_rounding(example_pair, None, cand)


def test_lp_shape(table1_votes):
    spec = MarginalSpec.build(table1_votes, EXAMPLE_MARGINALS)
    lp = build_lp(table1_votes, spec)
    assert lp.n_support == 27
    assert lp.A.shape[0] == 3 + 6 + 2
    assert np.all(np.diff(lp.costs[lp.col_tuple == 0]) > 0)


def test_bounds_add_rows_and_hold(table1_votes):
    lower = np.zeros(table1_votes.shape, dtype=int)
    upper = np.full(table1_votes.shape, 33)
    lower[0, 1, 0] = 1  # (D1, B, F) at least one seat
    upper[2, 2, 0] = 3  # (D3, C, F) at most three
    spec = MarginalSpec.build(table1_votes, EXAMPLE_MARGINALS, lower=lower, upper=upper)
    lp = build_lp(table1_votes, spec)
    assert len(lp.lower_rows) == 1 and len(lp.upper_rows) >= 1
    pair = solve_lp(lp)
    assert verify_kkt(pair).passed
    x = pair.x_tensor()
    assert x[0, 1, 0] >= 1 - 1e-9 and x[2, 2, 0] <= 3 + 1e-9


def test_infeasible_bounds_raise(table1_votes):
    upper = np.zeros(table1_votes.shape, dtype=int)
    upper[:, :, 0] = 33
    spec = MarginalSpec(tuple(np.asarray(m) for m in EXAMPLE_MARGINALS), np.zeros_like(upper), upper, 33)
    with pytest.raises(Infeasible):
        solve_lp(build_lp(table1_votes, spec))
