"""
Coarse and sharp sparsity testers
=================================

The coarse tester compares one even moment with the largest value an
``s``-sparse polynomial can take.  The sharp tester additionally matches
the first ``k`` clean moments against a net of sparse output laws; here
it runs on the calibrated desk configuration.
"""

from fractions import Fraction

from sparsetest import CoarseConfig, ExactMomentOracle, NoiseSpec, SampleOracle, coarse_test, rademacher
from sparsetest.core import MultilinearPolynomial
from sparsetest.exactdist import DiscreteRV, sum_independent
from sparsetest.sharp import desk_config, desk_far_witness, test_sparsity

X = rademacher()

# coarse: 1-sparse versus far from 16-sparse, exact moments
cfg = CoarseConfig(1, 1, Fraction(17, 20))
one = MultilinearPolynomial({(1,): Fraction(3, 4)}, 1)
spread = MultilinearPolynomial({(i,): Fraction(1, 8) for i in range(1, 65)}, 1)
for name, p in (("3/4 x1", one), ("64 terms of 1/8", spread)):
    # 2^64 inputs: build the law by convolving the independent terms
    law = DiscreteRV.point(Fraction(0))
    for c in p.terms.values():
        law = sum_independent(law, DiscreteRV([(-c, Fraction(1, 2)), (c, Fraction(1, 2))]))
    rep = coarse_test(ExactMomentOracle(p, X, rv=law), cfg, X)
    print(f"coarse  {name:18s} -> {rep.verdict}  (m4 = {rep.phases[0]['estimate']['value']})")

# sharp: desk configuration, exact and sampled
for name, p in (("x1", MultilinearPolynomial({(1,): 1}, 2)), ("far witness", desk_far_witness())):
    rep = test_sparsity(ExactMomentOracle(p, X), desk_config())
    print(f"sharp   {name:18s} -> {rep.verdict}  phases {[ph['phase'] for ph in rep.phases]}")

noise = NoiseSpec.gaussian(0, Fraction(1, 4))
scfg = desk_config(noise=noise)
accepted = sum(test_sparsity(SampleOracle(MultilinearPolynomial({(1,): 1}, 2), X, noise, s), scfg).accepted for s in range(10))
print(f"sampled x1 accepted in {accepted}/10 runs")
