import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsetest.core import MultilinearPolynomial, coeff_norm, rademacher
from sparsetest.dfkolab import (
    NoiseOperatorSpec,
    calibrate_tail_theorem,
    chebyshev_check,
    chebyshev_extrema,
    cumulant_bound_check,
    far_sparse_tail_check,
    gumbo_set,
    hypercontractive_check,
    median_sign_check,
    noise_operator,
    noise_operator_pointwise,
    noiseless_moment_check,
    rho_min,
    tail_decay_check,
    tail_hypotheses,
    truncated_second_moment_check,
    two_route_agreement,
    verify_tail_theorem,
)
from sparsetest.exactdist import output_distribution

from strategies import DISTS, dists, polys, three_point, two_point

R = rademacher()


def test_rho_min_values():
    assert rho_min(R) == Fraction(1, 4)
    assert rho_min(two_point(2)) == Fraction(1, 16)  # lambda = 1/5
    assert rho_min(two_point(Fraction(1, 3))) == Fraction(1, 36)


def test_kernel_rows_are_laws():
    for dist in DISTS:
        spec = NoiseOperatorSpec(-rho_min(dist), dist)
        for row in spec.kernel():
            assert sum(row) == 1 and min(row) >= 0


def test_rho_outside_range_rejected():
    with pytest.raises(ValueError):
        NoiseOperatorSpec(-Fraction(1, 4) - Fraction(1, 100), R)
    with pytest.raises(ValueError):
        NoiseOperatorSpec(Fraction(101, 100), R)


def test_kernel_fixes_the_base_law():
    dist = three_point(2)
    spec = NoiseOperatorSpec(Fraction(1, 3), dist)
    k = np.array(spec.kernel(), dtype=object)
    assert list(np.array(dist.probs, dtype=object) @ k) == list(dist.probs)


@st.composite
def rho_for(draw, dist):
    lo = rho_min(dist)
    num = draw(st.integers(-12, 12))
    rho = Fraction(num, 12)
    return max(-lo, min(rho, Fraction(1)))


@given(dists.flatmap(lambda d: st.tuples(st.just(d), rho_for(d), polys(n_vars=3, max_degree=3, max_terms=4))))
def test_two_routes_agree(args):
    dist, rho, f = args
    assert two_route_agreement(f, NoiseOperatorSpec(rho, dist))


@given(dists.flatmap(lambda d: st.tuples(st.just(d), rho_for(d), rho_for(d), polys(n_vars=3, max_degree=2))))
def test_semigroup(args):
    dist, a, b, f = args
    sa, sb, sab = (NoiseOperatorSpec(r, dist) for r in (a, b, a * b))
    assert noise_operator(noise_operator(f, sa), sb) == noise_operator(f, sab)
    ka, kb, kab = (np.array(s.kernel(), dtype=object) for s in (sa, sb, sab))
    assert (ka.dot(kb) == kab).all()
    # pointwise route of T_b applied to T_a f equals the Fourier route of T_ab
    lhs = noise_operator_pointwise(noise_operator(f, sa), sb, f.variables)
    rhs = noise_operator_pointwise(f, sab, f.variables)
    assert (lhs == rhs).all()


def test_rho_one_is_identity_and_zero_is_mean():
    f = MultilinearPolynomial({(): 2, (1,): 3, (1, 2): -1}, 2)
    assert noise_operator(f, NoiseOperatorSpec(1, R)) == f
    vals = noise_operator_pointwise(f, NoiseOperatorSpec(0, R))
    assert all(v == 2 for v in vals.flat)


@given(dists, polys(n_vars=3, max_degree=3), st.sampled_from([3, 4, 6]))
def test_hypercontractive_holds(dist, f, q):
    assert hypercontractive_check(f, q, dist)["holds"]


def test_hypercontractive_float_q():
    f = MultilinearPolynomial({(1, 2): 1, (3,): 1}, 2)
    out = hypercontractive_check(f, 2.5, R)
    assert out["holds"] and out["lhs"] <= out["rhs"]
    with pytest.raises(ValueError):
        hypercontractive_check(f, 2, R)


@given(dists, polys(n_vars=3, max_degree=2), st.integers(2, 8))
def test_noiseless_moment_bound(dist, p, ell):
    assert noiseless_moment_check(p, ell, dist)["holds"]


def test_noiseless_bound_is_vacuous_at_one():
    p = MultilinearPolynomial({(1,): 1}, 1)
    assert not noiseless_moment_check(p, 1, R)["holds"]


@given(dists, polys(n_vars=3, max_degree=2), st.integers(1, 8))
def test_cumulant_bound(dist, p, ell):
    p = MultilinearPolynomial({m: c for m, c in p.items() if m}, p.degree)  # mean zero
    assert cumulant_bound_check(output_distribution(p, dist), ell)["holds"]


def test_chebyshev_extrema():
    assert chebyshev_extrema(2) == pytest.approx([1, 0, -1])
    with pytest.raises(ValueError):
        chebyshev_extrema(0)


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=7))
def test_chebyshev_extrema_bound(coeffs):
    assert chebyshev_check(coeffs)["holds"]


def test_tail_hypotheses_on_majority_like_form():
    f = MultilinearPolynomial({(i,): Fraction(1, 2) for i in range(1, 5)}, 1)
    h = tail_hypotheses(f, [], Fraction(1, 2), 1, 1)
    assert h["mass_outside_J"] == 1
    assert h["max_influence_outside_J"] == Fraction(1, 4)
    assert h["cond1"] and h["cond2"]  # 1/4 <= (1/4) / 1


def test_verify_and_calibrate_tail_theorem():
    f = MultilinearPolynomial({(i,): Fraction(1, 2) for i in range(1, 5)}, 1)
    inst = [(f, (), Fraction(1, 2), 1)]
    rep = verify_tail_theorem(f, (), Fraction(1, 2), 1, 1, R)
    assert rep["tail"] == Fraction(5, 8)  # |x1+..+x4| >= 2
    assert rep["consistent"]
    c = calibrate_tail_theorem(inst, R)
    assert c == 0.0 or verify_tail_theorem(f, (), Fraction(1, 2), 1, c, R)["consistent"]


def test_calibration_boundary_is_tight():
    # tail Pr[|x1+x2| >= 2] = 1/2 with one hypothesis per instance
    f = MultilinearPolynomial({(1,): 1, (2,): 1}, 1)
    inst = [(f, (), 2, 2)]
    c = calibrate_tail_theorem(inst, R)
    assert c > 0
    assert verify_tail_theorem(f, (), 2, 2, c, R)["consistent"]
    # just below C* the influence hypothesis still holds and the conclusion fails
    below = verify_tail_theorem(f, (), 2, 2, c * 0.999, R)
    assert not below["consistent"]


def test_far_sparse_tail_check_on_tree_sum():
    # four disjoint copies of x1 x2 scaled to unit norm; far from 2-sparse
    p = MultilinearPolynomial({(2 * i + 1, 2 * i + 2): Fraction(1, 2) for i in range(4)}, 2)
    out = far_sparse_tail_check(p, 1, 2, Fraction(1, 2), 1, 1, R)
    assert out["far"]
    assert out["distance_squared"] == Fraction(1, 2)
    assert out["tail"] == Fraction(1, 8)  # all four products agree
    assert out["threshold"] == 2


def test_gumbo_set():
    p = MultilinearPolynomial({(1,): Fraction(9, 10), (2,): Fraction(1, 10), (3,): Fraction(1, 10)}, 1)
    g = gumbo_set(p, 4, 1)
    assert g["kappa"] == pytest.approx(math.e / 4)
    assert g["size_ok"] and g["J"] == (1,)  # Inf_1 = 0.81 > e/4


@given(dists, polys(n_vars=3, max_degree=2))
def test_median_sign(dist, f):
    assert median_sign_check(f, dist)["holds"]


@pytest.mark.parametrize("dist", DISTS, ids=lambda d: d.label())
def test_tail_decay_and_truncated_second_moment(dist):
    f = MultilinearPolynomial({(1,): Fraction(3, 5), (2,): Fraction(4, 5)}, 1)
    t = (2 * math.e / float(dist.lam)) ** 0.5
    assert tail_decay_check(f, t, dist)["holds"]
    with pytest.raises(ValueError):
        tail_decay_check(f, t / 2, dist)
    assert truncated_second_moment_check(f, dist)["holds"]


def test_truncated_moment_requires_unit_norm():
    with pytest.raises(ValueError):
        truncated_second_moment_check(MultilinearPolynomial({(1,): 2}, 1), R)
