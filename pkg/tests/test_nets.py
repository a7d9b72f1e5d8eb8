import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.stats import wasserstein_distance

from sparsetest.core import BudgetExceeded, MultilinearPolynomial, coeff_distance, coeff_norm, distance_to_sparsity, rademacher
from sparsetest.exactdist import moment_distance, moment_vector, output_distribution
from sparsetest.msg import decision_tree_polynomial
from sparsetest.nets import (
    GapNotFound,
    construct_poly_nets,
    construct_rv_nets,
    estimate_wasserstein_gap,
    grid_resolution,
    keep_and_rescale,
    kong_valiant_check,
    load_poly_net,
    perturbation_check,
    save_net,
    sphere_grid,
    sphere_grid_size,
    w1_to_rv,
    wasserstein_gap_upper_bound,
    xi_constant,
)

from strategies import dense_grid_gap, dists, polys

R = rademacher()
HALF = Fraction(1, 2)


def _unit(rng, r):
    v = rng.standard_normal(r)
    return v / np.linalg.norm(v)


@pytest.mark.parametrize("r,n", [(1, 1), (2, 3), (3, 2), (4, 1)])
def test_sphere_grid_size(r, n):
    g = sphere_grid(r, n)
    assert len(g) == sphere_grid_size(r, n)
    assert (np.abs(g).max(axis=1) == n).all() and (g != 0).all()


def test_grid_resolution():
    assert grid_resolution(1, 0.01) == 1
    assert grid_resolution(2, 0.1) == 5
    assert grid_resolution(5, 0.25) == 4


def test_p_net_covers_random_members():
    zeta = 0.2
    net_p, _ = construct_poly_nets(R, 2, 2, 2, HALF, zeta, spaces=("P",))
    rng = np.random.default_rng(0)
    blocks = [b for b in net_p.blocks if len(b.pattern) == 2]
    for _ in range(500):
        b = blocks[rng.integers(len(blocks))]
        z = _unit(rng, 2)
        assert np.linalg.norm(b.coeffs - z, axis=1).min() <= zeta


def test_p_eps_net_covers_random_far_members():
    zeta, eps = 0.2, HALF
    _, net_e = construct_poly_nets(R, 1, 1, 1, eps, zeta)
    rng = np.random.default_rng(1)
    hits = 0
    while hits < 500:
        z = _unit(rng, 2)
        if (z**2).min() < float(eps) ** 2:
            continue
        hits += 1
        for b in net_e.blocks:
            assert np.linalg.norm(b.coeffs - z, axis=1).min() <= zeta


def test_p_eps_members_are_far():
    _, net_e = construct_poly_nets(R, 1, 1, 1, HALF, 0.25)
    for m in net_e.members():
        if m.poly.is_exact:
            assert distance_to_sparsity(m.poly, 1).squared >= Fraction(1, 4)
        else:
            assert float(distance_to_sparsity(m.poly, 1).squared) >= 0.25 - 1e-12
        assert abs(float(coeff_norm(m.poly).squared) - 1) < 1e-12


def test_exact_members_have_exact_unit_norm():
    net_p, _ = construct_poly_nets(R, 1, 2, 2, HALF, 0.3, spaces=("P",))
    exact = [m for m in net_p.members() if m.poly.is_exact]
    assert exact and all(m.unit_norm_exact() for m in exact)


def test_budget():
    with pytest.raises(BudgetExceeded):
        construct_poly_nets(R, 2, 2, 2, HALF, 0.01, budget=1000)


def test_xi_constant_values():
    assert xi_constant(1, 2, R) == 1
    assert xi_constant(2, 2, R) == pytest.approx(math.sqrt(10))
    assert xi_constant(4, 2, R) == pytest.approx(87724.606, rel=1e-6)
    with pytest.raises(ValueError):
        xi_constant(0, 2, R)


def test_xi_bounds_moment_distance():
    rng = np.random.default_rng(2)
    monos = [(1,), (2,), (1, 2), (3,), (2, 3)]
    for _ in range(200):
        k = int(rng.integers(1, 5))
        pick = rng.choice(len(monos), size=3, replace=False)
        a, b = _unit(rng, 3), _unit(rng, 3)
        q1 = MultilinearPolynomial({monos[i]: float(c) for i, c in zip(pick, a)}, 2)
        q2 = MultilinearPolynomial({monos[i]: float(c) for i, c in zip(pick, b)}, 2)
        mom = moment_distance(output_distribution(q1, R), output_distribution(q2, R), k).value
        assert mom <= xi_constant(k, 2, R) * coeff_distance(q1, q2).value + 1e-9


def test_rv_net_moments_match_recomputation():
    net_p, _ = construct_rv_nets(R, 1, 2, 2, HALF, 2.0, 3, spaces=("P",))
    for mem in net_p.members:
        exact = output_distribution(mem.source.poly, R)
        want = [float(v) for v in moment_vector(exact, 3)]
        assert np.allclose([float(v) for v in mem.moments], want)


def test_rv_net_covering_in_moment_distance():
    zeta_mom, k = 2.0, 2
    net_p, _ = construct_rv_nets(R, 1, 2, 2, HALF, zeta_mom, k, spaces=("P",))
    mat = net_p.moment_matrix()
    rng = np.random.default_rng(3)
    for _ in range(500):
        z = _unit(rng, 2)
        q = MultilinearPolynomial({(): float(z[0]), (1,): float(z[1])}, 1)
        mv = np.array([float(v) for v in moment_vector(output_distribution(q, R), k)])
        assert np.linalg.norm(mat - mv, axis=1).min() <= zeta_mom


@given(polys(n_vars=3, max_degree=2), polys(n_vars=3, max_degree=2))
def test_w1_vectorised_matches_scipy(p, q):
    a, b = output_distribution(p, R), output_distribution(q, R)
    av, ap = a.as_arrays()
    bv, bp = b.as_arrays()
    got = w1_to_rv(av[None, :], ap, bv, bp)[0]
    assert got == pytest.approx(wasserstein_distance(av, bv, ap, bp), abs=1e-9)


def test_toy_gap_brackets_dense_oracle():
    est = estimate_wasserstein_gap(R, 1, 1, 1, HALF)
    assert est.c > 0 and 4 * est.zeta <= est.c
    oracle = dense_grid_gap()
    assert est.c / 2 <= oracle <= est.c + 1e-9
    # frozen: sqrt(2) - 1 from the three-term forms
    assert oracle == pytest.approx(math.sqrt(2) - 1, abs=2e-3)


def test_gap_cap_below_witness_sparsity():
    with pytest.raises(GapNotFound) as info:
        estimate_wasserstein_gap(R, 2, 1, 3, HALF, t_max=1, var_cap=3)
    assert info.value.trace[0]["c"] == pytest.approx(0, abs=1e-12)


def test_gap_upper_bound_from_desk_witness():
    tree = decision_tree_polynomial(2)
    q = MultilinearPolynomial({**{m: c * Fraction(4, 5) for m, c in tree.items()}, (4,): Fraction(3, 5)}, 2)
    ub = wasserstein_gap_upper_bound(R, 2, 1, 4, Fraction(2, 5), [q])
    assert ub == pytest.approx(0.6)
    with pytest.raises(ValueError):
        wasserstein_gap_upper_bound(R, 2, 1, 4, Fraction(2, 5), [tree])  # 4-sparse, not far


@settings(max_examples=40)
@given(dists, polys(n_vars=3, max_degree=2), polys(n_vars=3, max_degree=2), st.integers(2, 6))
def test_kong_valiant_calibration(dist, p, q, k):
    out = kong_valiant_check(output_distribution(p, dist), output_distribution(q, dist), k)
    assert out["holds"], out


@st.composite
def rational_unit_vectors(draw, r):
    # inverse stereographic projection: every rational point of the sphere
    t = draw(st.lists(st.fractions(min_value=-3, max_value=3, max_denominator=5), min_size=r - 1, max_size=r - 1))
    n2 = sum(x * x for x in t)
    return [2 * x / (n2 + 1) for x in t] + [(n2 - 1) / (n2 + 1)]


@given(rational_unit_vectors(5), st.integers(1, 3), st.integers(1, 5))
def test_keep_and_rescale_perturbation(v, T, keep):
    q = MultilinearPolynomial({(i + 1,): c for i, c in enumerate(v)}, 1)
    assume(q.sparsity == 5)
    eps_sq = distance_to_sparsity(q, T).squared
    assume(eps_sq > 0)
    u, A = keep_and_rescale(q, keep)
    tail = 1 - A
    eps_prime = math.sqrt(float(tail)) * 1.0001
    eps = math.sqrt(float(eps_sq))
    out = perturbation_check(q, T, keep, Fraction(eps), Fraction(eps_prime))
    assert out["close"]
    assert out["distance_squared"] <= 4 * eps_prime**2 + 1e-12
    if 2 * tail <= eps_sq * Fraction(999, 1000):
        assert out["in_P_half_eps"]


def test_perturbation_requires_unit_norm():
    with pytest.raises(ValueError):
        perturbation_check(MultilinearPolynomial({(1,): 2}, 1), 1, 1, HALF, HALF)


def test_save_and_load(tmp_path):
    net_p, _ = construct_poly_nets(R, 1, 2, 2, HALF, 0.5, spaces=("P",))
    save_net(net_p, tmp_path / "net")
    manifest, back = load_poly_net(tmp_path / "net")
    assert manifest["count"] == net_p.size == len(back)
    assert manifest["space"] == "P"
    for orig, loaded in zip(net_p.members(), back):
        assert float(coeff_distance(orig.poly.to_float(), loaded.to_float()).value) < 1e-12


def test_save_rv_net(tmp_path):
    net, _ = construct_rv_nets(R, 1, 1, 1, HALF, 1.0, 2, spaces=("P",))
    save_net(net, tmp_path / "rv")
    manifest, back = load_poly_net(tmp_path / "rv")
    assert manifest["kind"] == "rv" and len(manifest["moments"]) == net.size == len(back)
