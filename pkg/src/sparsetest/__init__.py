"""Testing sparsity of low-degree multilinear polynomials from labeled samples.

Submodules
----------
core        polynomials, distributions, coefficient geometry
exactdist   exact output laws, moments and W1
momest      noisy samples and clean-moment estimation
coarse      one-moment tester (s-sparse vs far from Upsilon-sparse)
msg         sparsity-gap witnesses
nets        coefficient and moment nets, Wasserstein gap
sharp       four-phase tester for T above the sparsity gap
hardness    block ensembles behind the sample lower bound
dfkolab     exact checks of the structural inequalities
cli         command-line harness
"""

from .coarse import CoarseConfig, coarse_test, upsilon
from .core import (
    BudgetExceeded,
    FiniteDistribution,
    MultilinearPolynomial,
    RootValue,
    coeff_distance,
    coeff_norm,
    distance_to_sparsity,
    rademacher,
    validate_distribution,
)
from .exactdist import DiscreteRV, moment_distance, moment_vector, output_distribution, wasserstein1
from .hardness import HardInstanceEnsemble, label_marginal, make_hard_instance, transcript_experiment
from .momest import (
    BatchOracle,
    ExactMomentOracle,
    NoiseSpec,
    SampleOracle,
    cumulants_to_moments,
    estimate_clean_moments,
    moments_to_cumulants,
)
from .msg import MsgWitness, compute_msg, find_msg_witness, phi_bound
from .nets import construct_poly_nets, construct_rv_nets, estimate_wasserstein_gap, xi_constant
from .report import FAR, INCONCLUSIVE, SPARSE, TesterReport
from .sharp import SharpConfig, desk_config, normalize_labels, test_sparsity

__version__ = "0.1.0"

__all__ = [
    "BatchOracle",
    "BudgetExceeded",
    "CoarseConfig",
    "DiscreteRV",
    "ExactMomentOracle",
    "FAR",
    "FiniteDistribution",
    "HardInstanceEnsemble",
    "INCONCLUSIVE",
    "MsgWitness",
    "MultilinearPolynomial",
    "NoiseSpec",
    "RootValue",
    "SPARSE",
    "SampleOracle",
    "SharpConfig",
    "TesterReport",
    "coarse_test",
    "coeff_distance",
    "coeff_norm",
    "compute_msg",
    "construct_poly_nets",
    "construct_rv_nets",
    "cumulants_to_moments",
    "desk_config",
    "distance_to_sparsity",
    "estimate_clean_moments",
    "estimate_wasserstein_gap",
    "find_msg_witness",
    "label_marginal",
    "make_hard_instance",
    "moment_distance",
    "moment_vector",
    "moments_to_cumulants",
    "normalize_labels",
    "output_distribution",
    "phi_bound",
    "rademacher",
    "test_sparsity",
    "transcript_experiment",
    "upsilon",
    "validate_distribution",
    "wasserstein1",
    "xi_constant",
]
