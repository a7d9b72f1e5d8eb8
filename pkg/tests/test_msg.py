import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from sparsetest.core import BudgetExceeded, MultilinearPolynomial, rademacher
from sparsetest.exactdist import output_distribution
from sparsetest.msg import (
    GridSpec,
    canonical_pattern,
    certify_witness,
    compute_msg,
    count_sparsity_patterns,
    decision_tree_polynomial,
    disjoint_sum,
    enumerate_sparsity_patterns,
    find_msg_witness,
    output_count_bounds,
    phi_bound,
)

from strategies import brute_force_law, two_point

R = rademacher()


def test_phi_values():
    assert phi_bound(1, 1, 2) == 1024
    assert phi_bound(2, 1, 2) == 2 ** 56
    with pytest.raises(ValueError):
        phi_bound(0, 1, 2)


def test_output_count_bounds():
    assert output_count_bounds(2, 3, 2) == (64, math.log2(3) / 8 - 3)


def test_pattern_counts():
    # 1 + d-monomials on n variables, choose r distinct monomials over at most r*d variables
    assert count_sparsity_patterns(1, 1) == 2  # {const, x1}
    raw = list(enumerate_sparsity_patterns(2, 2, canonical=False))
    canon = list(enumerate_sparsity_patterns(2, 2))
    assert len(raw) == count_sparsity_patterns(2, 2)
    assert len({canonical_pattern(p) for p in raw}) == len(canon)


def test_pattern_cap():
    with pytest.raises(BudgetExceeded):
        list(enumerate_sparsity_patterns(2, 6, cap=1000))


def test_canonical_pattern_is_rename_invariant():
    a = ((1,), (2, 3))
    b = ((5, 7), (9,))
    assert canonical_pattern(a) == canonical_pattern(b)


def test_decision_tree_depth2():
    tree = decision_tree_polynomial(2)
    assert tree.sparsity == 4
    assert output_distribution(tree, R).atoms == output_distribution(MultilinearPolynomial({(1,): 1}), R).atoms


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_decision_tree_is_uniform_sign(depth):
    law = brute_force_law(decision_tree_polynomial(depth), R)
    assert law == {1: Fraction(1, 2), -1: Fraction(1, 2)}


def test_disjoint_sum_uses_fresh_variables():
    t = decision_tree_polynomial(2)
    both = disjoint_sum([t, t])
    assert both.sparsity == 8 and len(both.variables) == 6


def test_witness_r_2_1_4():
    w = find_msg_witness(R, 2, 1, 4)
    assert (w.s, w.t) == (1, 4)
    assert output_distribution(w.p, R).atoms == output_distribution(w.q, R).atoms


def test_witness_r_2_2_8():
    w = find_msg_witness(R, 2, 2, 8)
    assert (w.s, w.t) == (2, 8)
    assert brute_force_law(w.p, R) == brute_force_law(w.q, R)


def test_grid_route_finds_the_tree_without_shortlist():
    w = find_msg_witness(R, 2, 1, 4, GridSpec(2, 2), shortlist=False)
    assert w is not None and w.source == "grid"
    assert brute_force_law(w.p, R) == brute_force_law(w.q, R)


def test_grid_miss_returns_none():
    assert find_msg_witness(R, 2, 1, 2, GridSpec(2, 2), shortlist=False) is None


def test_budget_exceeded():
    with pytest.raises(BudgetExceeded):
        find_msg_witness(R, 2, 1, 4, shortlist=False, budget=10)


def test_certify_rejects_different_laws():
    p = MultilinearPolynomial({(1,): 1})
    q = MultilinearPolynomial({(1,): 1, (2,): 1})
    assert certify_witness(p, q, R) is None


@given(st.sampled_from([Fraction(1, 2), 2, 3]))
def test_identity_witness_on_other_laws(r):
    w = find_msg_witness(two_point(r), 1, 1, 1)
    assert w is not None and w.t == 1


def test_compute_msg_descends_to_four():
    out = compute_msg(R, 2, 1, t_cap=6)
    assert out["best_t_with_witness"] == 4
    assert out["phi_bound"] == 2 ** 56
    assert not out["certified"]
    assert [row["t"] for row in out["trace"]] == [6, 5, 4]
    assert out["witness"]["t"] == 4
