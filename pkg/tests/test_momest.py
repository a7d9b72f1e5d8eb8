import math
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from sparsetest.core import BudgetExceeded, MultilinearPolynomial, rademacher
from sparsetest.exactdist import DiscreteRV, moment_vector, output_distribution, sum_independent
from sparsetest.momest import (
    BatchOracle,
    ExactMomentOracle,
    LabeledSampleBatch,
    NoiseSpec,
    SampleOracle,
    ScaledOracle,
    bell_polynomial_partitions,
    bell_table,
    cumulants_to_moments,
    deconvolution_weights,
    draw_labeled_samples,
    empirical_raw_moments,
    estimate_clean_moments,
    log2_sample_size_for,
    moments_to_cumulants,
    sample_size_for,
)
from strategies import polys

R = rademacher()
X1 = MultilinearPolynomial({(1,): 1})


@st.composite
def rvs(draw):
    values = draw(st.lists(st.integers(-5, 5), min_size=1, max_size=4, unique=True))
    raw = draw(st.lists(st.integers(1, 4), min_size=len(values), max_size=len(values)))
    return DiscreteRV([(Fraction(v, 3), Fraction(w, sum(raw))) for v, w in zip(values, raw)])


def sympy_cumulants(rv: DiscreteRV, n: int) -> list:
    """Independent oracle: coefficients of log E[e^{tY}]."""
    t = sympy.symbols("t")
    mgf = sum(sympy.Rational(a.numerator, a.denominator) * sympy.exp(t * sympy.Rational(v.numerator, v.denominator))
              for v, a in rv.atoms)
    series = sympy.series(sympy.log(mgf), t, 0, n + 1).removeO()
    return [Fraction(str(series.coeff(t, k) * sympy.factorial(k))) for k in range(1, n + 1)]


def homogeneous_scale(m, ell):
    """``max(1, max_j |m_j|^(ell/j))``: the size of the largest term that can cancel in ``m_ell``."""
    return max([1.0] + [abs(v) ** (ell / j) for j, v in enumerate(m[:ell], start=1)])


class TestBell:
    @given(st.lists(st.integers(-3, 3), min_size=6, max_size=6))
    def test_recursion_matches_partitions(self, xs):
        x = [Fraction(v) for v in xs]
        B = bell_table(x, 6)
        for n in range(7):
            for k in range(n + 1):
                assert B[n][k] == bell_polynomial_partitions(n, k, x)

    def test_known_values(self):
        x = [1] * 5
        B = bell_table(x, 5)
        # Stirling numbers of the second kind S(5, k)
        assert [B[5][k] for k in range(1, 6)] == [1, 15, 25, 10, 1]


class TestCumulants:
    def test_rademacher_frozen(self):
        # log cosh t = t^2/2 - t^4/12 + t^6/45 - 17 t^8/2520
        m = moment_vector(output_distribution(X1, R), 8)
        assert moments_to_cumulants(m) == [0, 1, 0, -2, 0, 16, 0, -272]

    def test_gaussian_noise_cumulants(self):
        g = NoiseSpec.gaussian(Fraction(1, 2), 2)
        assert g.cumulants(4) == [Fraction(1, 2), 4, 0, 0]
        assert g.raw_moments(4) == [Fraction(1, 2), Fraction(17, 4), Fraction(49, 8), Fraction(865, 16)]

    @given(rvs())
    def test_against_sympy_oracle(self, rv):
        assert moments_to_cumulants(moment_vector(rv, 5)) == sympy_cumulants(rv, 5)

    @given(rvs())
    def test_exact_round_trip(self, rv):
        m = moment_vector(rv, 10)
        assert cumulants_to_moments(moments_to_cumulants(m)) == m

    @given(
        st.lists(st.tuples(st.floats(-10, 10, allow_nan=False), st.floats(0.01, 1)), min_size=1, max_size=6),
        st.integers(1, 12),
    )
    def test_float_round_trip(self, atoms, k):
        # moment vectors of genuine (float) laws
        tot = sum(w for _, w in atoms)
        m = [sum(w / tot * v**j for v, w in atoms) for j in range(1, k + 1)]
        back = cumulants_to_moments(moments_to_cumulants(m))
        for ell, (a, b) in enumerate(zip(m, back), start=1):
            assert abs(a - b) <= 1e-10 * homogeneous_scale(m, ell)

    @given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=12))
    def test_float_round_trip_arbitrary_vectors(self, m):
        # arbitrary vectors are not moment sequences; their cumulants can reach
        # (l-1)! m_1^l, and rounding those bounds the achievable accuracy
        kappa = moments_to_cumulants(m)
        back = cumulants_to_moments(kappa)
        for ell, (a, b) in enumerate(zip(m, back), start=1):
            cond = max(homogeneous_scale(m, ell), homogeneous_scale(kappa, ell))
            assert abs(a - b) <= 1e-10 * cond

    @given(rvs(), rvs())
    def test_additive_over_independent_sums(self, a, b):
        n = 6
        ka = moments_to_cumulants(moment_vector(a, n))
        kb = moments_to_cumulants(moment_vector(b, n))
        kab = moments_to_cumulants(moment_vector(sum_independent(a, b), n))
        assert kab == [x + y for x, y in zip(ka, kb)]


class TestNoise:
    def test_finite_noise_moments(self):
        eta = NoiseSpec.finite([(-1, "1/2"), (1, "1/2")])
        assert eta.raw_moments(4) == [0, 1, 0, 1]

    def test_moment_table_order_check(self):
        eta = NoiseSpec.from_moments(["0", "1"])
        with pytest.raises(ValueError):
            eta.raw_moments(3)
        with pytest.raises(ValueError):
            eta.sample(np.random.default_rng(0), 3)

    def test_scaled(self):
        eta = NoiseSpec.gaussian(0, 1).scaled(2)
        assert eta.sigma == Fraction(1, 2)

    @pytest.mark.parametrize("spec", [NoiseSpec(), NoiseSpec.gaussian(0, Fraction(1, 3)), NoiseSpec.finite([(2, "1/4"), (0, "3/4")])])
    def test_dict_roundtrip(self, spec):
        assert NoiseSpec.from_dict(spec.to_dict()) == spec

    @pytest.mark.parametrize("ell", [1, 2, 3, 4, 6])
    def test_deconvolution_weights_invert_noise(self, ell):
        eta = NoiseSpec.gaussian(Fraction(1, 3), Fraction(1, 2))
        clean = moment_vector(output_distribution(MultilinearPolynomial({(1,): 1, (2,): 1}), R), ell)
        noisy = cumulants_to_moments([a + b for a, b in zip(moments_to_cumulants(clean), eta.cumulants(ell))])
        w = deconvolution_weights(eta, ell)
        assert w[0] + sum(wj * mj for wj, mj in zip(w[1:], noisy)) == clean[-1]


class TestSampling:
    def test_deterministic_given_seed(self):
        a = draw_labeled_samples(X1, R, NoiseSpec.gaussian(0, 1), 50, seed=4)
        b = draw_labeled_samples(X1, R, NoiseSpec.gaussian(0, 1), 50, seed=4)
        assert a.to_csv() == b.to_csv()

    def test_csv_roundtrip(self):
        a = draw_labeled_samples(MultilinearPolynomial({(2, 5): 1}), R, NoiseSpec(), 20, seed=1)
        b = LabeledSampleBatch.from_csv(a.to_csv())
        assert b.variables == (2, 5) and np.array_equal(a.ys, b.ys)

    def test_noiseless_labels_follow_polynomial(self):
        p = MultilinearPolynomial({(1, 2): 2, (3,): -1})
        batch = draw_labeled_samples(p, R, NoiseSpec(), 100, seed=2)
        assert np.allclose(batch.ys, p.evaluate_array(batch.xs, batch.variables))

    def test_oracle_streams_continue(self):
        o = SampleOracle(X1, R, NoiseSpec(), seed=3)
        first, second = o.draw(10), o.draw(10)
        whole = draw_labeled_samples(X1, R, NoiseSpec(), 20, seed=3)
        assert np.array_equal(np.concatenate([first.ys, second.ys]), whole.ys)
        assert o.samples_drawn == 20

    def test_batch_oracle_exhausts(self):
        o = BatchOracle(draw_labeled_samples(X1, R, NoiseSpec(), 10, seed=0))
        o.draw(7)
        assert o.remaining == 3
        with pytest.raises(BudgetExceeded):
            o.draw(4)

    def test_empirical_moments(self):
        batch = LabeledSampleBatch(np.zeros((2, 0)), np.array([1.0, 3.0]), ())
        assert empirical_raw_moments(batch, 3) == [2.0, 5.0, 14.0]


class TestEstimation:
    def test_exact_oracle_short_circuit(self):
        p = MultilinearPolynomial({(1,): Fraction(3, 5), (1, 2): Fraction(4, 5)})
        est = estimate_clean_moments(ExactMomentOracle(p, R), 4, 0.1, 0.1, NoiseSpec.gaussian(0, 1))
        assert est.mode == "exact" and est.samples == 0
        assert est.clean_moments == moment_vector(output_distribution(p, R), 4)

    def test_scaled_oracle_moments(self):
        o = ScaledOracle(ExactMomentOracle(MultilinearPolynomial({(1,): 2}), R), 2)
        assert o.moments(4) == [0, 1, 0, 1]

    def test_practical_noiseless_is_accurate(self):
        est = estimate_clean_moments(SampleOracle(X1, R, NoiseSpec(), seed=1), 4, 0.1, 0.1, NoiseSpec())
        assert abs(est.value - 1) < 1e-12  # x1^4 = 1 on every sample
        assert est.samples >= 200

    def test_gaussian_noise_single_run(self):
        eta = NoiseSpec.gaussian(0, Fraction(1, 2))
        est = estimate_clean_moments(SampleOracle(X1, R, eta, seed=11), 4, 0.1, 0.1, eta)
        assert abs(est.value - 1) <= 0.1
        assert len(est.clean_cumulants) == 4

    def test_explicit_sample_count(self):
        est = estimate_clean_moments(SampleOracle(X1, R, NoiseSpec(), seed=1), 2, 0.1, 0.1, NoiseSpec(), samples=321)
        assert est.samples == 321

    def test_max_samples_budget(self):
        eta = NoiseSpec.gaussian(0, 3)
        with pytest.raises(BudgetExceeded) as info:
            estimate_clean_moments(SampleOracle(X1, R, eta, seed=1), 6, 0.01, 0.01, eta, max_samples=10**4)
        assert info.value.owner == "momest"

    def test_explicit_mode_refuses_astronomical_counts(self):
        with pytest.raises(BudgetExceeded) as info:
            estimate_clean_moments(SampleOracle(X1, R, NoiseSpec(), seed=1), 4, 0.1, 0.1, NoiseSpec(), mode="explicit", d=1)
        assert info.value.log2_required > 30

    def test_explicit_count_monotone(self):
        a = log2_sample_size_for(4, 0.1, 0.1, 1, 1, Fraction(1, 2), NoiseSpec())
        b = log2_sample_size_for(4, 0.05, 0.1, 1, 1, Fraction(1, 2), NoiseSpec())
        c = log2_sample_size_for(4, 0.1, 0.1, 1, 2, Fraction(1, 2), NoiseSpec())
        assert b > a and c > a
        assert sample_size_for(1, 0.5, 0.5, 1, 1, Fraction(1, 2), NoiseSpec()) >= 1
