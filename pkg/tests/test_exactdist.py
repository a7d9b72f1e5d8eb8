import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from sparsetest.core import BudgetExceeded, MultilinearPolynomial, rademacher
from sparsetest.exactdist import (
    DiscreteRV,
    abs_moment,
    identical_by_moments,
    moment_distance,
    moment_vector,
    output_distribution,
    raw_moment,
    sum_independent,
    wasserstein1,
)
from strategies import DISTS, brute_force_law, dists, polys

R = rademacher()


@st.composite
def rvs(draw, max_atoms=4):
    values = draw(st.lists(st.integers(-8, 8), min_size=1, max_size=max_atoms, unique=True))
    raw = draw(st.lists(st.integers(1, 5), min_size=len(values), max_size=len(values)))
    total = sum(raw)
    return DiscreteRV([(Fraction(v, 2), Fraction(w, total)) for v, w in zip(values, raw)])


class TestDiscreteRV:
    def test_normalises_atoms(self):
        rv = DiscreteRV([(1, Fraction(1, 4)), (0, Fraction(1, 2)), (1, Fraction(1, 4))])
        assert rv.atoms == ((0, Fraction(1, 2)), (1, Fraction(1, 2)))

    def test_rejects_bad_mass(self):
        with pytest.raises(ValueError):
            DiscreteRV([(0, Fraction(1, 2))])
        with pytest.raises(ValueError):
            DiscreteRV([(0, Fraction(3, 2)), (1, Fraction(-1, 2))])

    @given(rvs())
    def test_text_roundtrip(self, rv):
        assert DiscreteRV.from_text(rv.to_text()) == rv


class TestOutputDistribution:
    @given(polys(n_vars=4, max_degree=3), dists)
    def test_matches_brute_force(self, p, dist):
        assert output_distribution(p, dist).as_dict() == brute_force_law(p, dist)

    def test_decision_tree_is_rademacher(self):
        tree = MultilinearPolynomial(
            {(1, 2): Fraction(1, 2), (1, 3): Fraction(-1, 2), (2,): Fraction(1, 2), (3,): Fraction(1, 2)}
        )
        assert output_distribution(tree, R).as_dict() == {-1: Fraction(1, 2), 1: Fraction(1, 2)}

    def test_zero_polynomial_is_point_mass(self):
        assert output_distribution(MultilinearPolynomial({}), R) == DiscreteRV.point(0)

    def test_float_polynomial_has_exact_probabilities(self):
        rv = output_distribution(MultilinearPolynomial({(1,): 0.5, (2,): 0.25}), R)
        assert all(isinstance(a, Fraction) for a in rv.probs)
        assert sorted(rv.values) == [-0.75, -0.25, 0.25, 0.75]

    def test_budget(self):
        p = MultilinearPolynomial({(i,): 1 for i in range(1, 12)})
        with pytest.raises(BudgetExceeded) as info:
            output_distribution(p, R, budget=1000)
        assert info.value.required == 2**11

    def test_large_coefficients_take_object_route(self):
        p = MultilinearPolynomial({(1, 2, 3): 10**15, (1,): 1})
        assert output_distribution(p, R).as_dict() == brute_force_law(p, R)


class TestMoments:
    @given(rvs(), st.integers(1, 6))
    def test_raw_moment_definition(self, rv, k):
        assert raw_moment(rv, k) == sum(a * v**k for v, a in rv.atoms)
        assert moment_vector(rv, k)[-1] == raw_moment(rv, k)

    def test_abs_moment(self):
        rv = DiscreteRV([(-2, Fraction(1, 2)), (1, Fraction(1, 2))])
        assert abs_moment(rv, 1) == Fraction(3, 2) and raw_moment(rv, 1) == Fraction(-1, 2)

    @pytest.mark.parametrize("dist", DISTS, ids=lambda d: d.label())
    def test_linear_moments_of_single_variable(self, dist):
        rv = output_distribution(MultilinearPolynomial({(1,): 1}), dist)
        assert moment_vector(rv, 2) == [0, 1]

    def test_moment_distance_exact_square(self):
        a = DiscreteRV.point(Fraction(1))
        b = DiscreteRV.point(Fraction(0))
        assert moment_distance(a, b, 3).squared == 3

    @given(rvs(), rvs())
    def test_identical_by_moments_iff_equal(self, a, b):
        assert identical_by_moments(a, b) == (a == b)

    @given(rvs(max_atoms=3), rvs(max_atoms=3))
    def test_sum_independent(self, a, b):
        c = sum_independent(a, b)
        assert raw_moment(c, 1) == raw_moment(a, 1) + raw_moment(b, 1)
        assert sum(c.probs) == 1


class TestWasserstein:
    @given(rvs(), rvs())
    def test_matches_scipy(self, a, b):
        av, ap = a.as_arrays()
        bv, bp = b.as_arrays()
        assert float(wasserstein1(a, b)) == pytest.approx(wasserstein_distance(av, bv, ap, bp), abs=1e-12)

    def test_frozen_value(self):
        # quantile coupling by hand: each -1 half meets {-7/5, -1/5}, giving 2 * (1/4)(2/5 + 4/5)
        a = DiscreteRV([(-1, Fraction(1, 2)), (1, Fraction(1, 2))])
        assert wasserstein1(a, DiscreteRV.point(0)) == 1
        b = DiscreteRV([(Fraction(v, 5), Fraction(1, 4)) for v in (-7, -1, 1, 7)])
        assert wasserstein1(a, b) == Fraction(3, 5)

    @given(rvs(), rvs(), rvs())
    def test_metric_axioms(self, a, b, c):
        ab, bc, ac = wasserstein1(a, b), wasserstein1(b, c), wasserstein1(a, c)
        assert ab >= 0 and (ab == 0) == (a == b)
        assert ab == wasserstein1(b, a)
        assert ac <= ab + bc

    def test_shift_moves_by_constant(self):
        a = DiscreteRV([(0, Fraction(1, 3)), (3, Fraction(2, 3))])
        assert wasserstein1(a, a.map(lambda v: v + Fraction(1, 7))) == Fraction(1, 7)

    @given(polys(n_vars=3), polys(n_vars=3), dists)
    def test_contraction_under_coefficients(self, p, q, dist):
        w = wasserstein1(output_distribution(p, dist), output_distribution(q, dist))
        assert w * w <= sum(c * c for c in (p - q).terms.values())
