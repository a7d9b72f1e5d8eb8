"""
Clean moments from noisy labels
===============================

Labels arrive as ``p(x) + eta`` with independent noise of known law.
Cumulants add over independent sums, so subtracting the noise cumulants
from the empirical ones and converting back gives the clean moments.
"""

from fractions import Fraction

import numpy as np

from sparsetest import NoiseSpec, SampleOracle, estimate_clean_moments, rademacher
from sparsetest.core import MultilinearPolynomial
from sparsetest.exactdist import moment_vector, output_distribution

X = rademacher()
p = MultilinearPolynomial({(1,): Fraction(1, 2), (2, 3): Fraction(1, 2), (1, 4): Fraction(1, 2), (5,): Fraction(1, 2)}, 2)
noise = NoiseSpec.gaussian(0, 1)

exact = [float(v) for v in moment_vector(output_distribution(p, X), 4)]
print("exact clean moments:", exact)

errors = []
for seed in range(20):
    est = estimate_clean_moments(SampleOracle(p, X, noise, seed), 4, 0.1, 0.1, noise)
    errors.append(abs(float(est.value) - exact[3]))
print("samples per run    :", est.samples)
print("noisy m4 (last run):", float(est.noisy_moments[3]))
print("|error| in m4      : median %.3f, max %.3f" % (np.median(errors), max(errors)))
