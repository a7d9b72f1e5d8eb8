"""Structural laboratory: the noise operator, hypercontractive bounds and
low-degree tail theorems, checked exactly on small instances.

Nothing here is used by the testers at runtime.  The functions evaluate
both sides of an inequality (exactly when the quantities are rational)
and return a small report dict with ``holds`` plus the two sides, so that
sweeps can count violations and calibrate the unspecified constants.

The noise kernel for ``rho`` in ``[-rho_min, 1]`` keeps a coordinate with
probability ``rho + (1 - rho) alpha_i`` and otherwise resamples it from the
base distribution; negative ``rho`` is legal as long as every entry stays
nonnegative, which ``rho_min = lambda / (4 (1 - lambda))`` guarantees.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .coarse import _log_d, sparse_value_bound, tail_prob_bound
from .core import (
    FiniteDistribution,
    MultilinearPolynomial,
    coeff_norm,
    distance_to_sparsity,
    influence,
)
from .exactdist import DEFAULT_ENUMERATION_BUDGET, DiscreteRV, abs_moment, moment_vector, output_distribution
from .momest import moments_to_cumulants

__all__ = [
    "E_LOWER",
    "rho_min",
    "NoiseOperatorSpec",
    "noise_operator",
    "noise_operator_pointwise",
    "value_tensor",
    "two_route_agreement",
    "hypercontractive_bound",
    "hypercontractive_check",
    "noiseless_moment_check",
    "cumulant_bound_check",
    "chebyshev_extrema",
    "chebyshev_check",
    "tail_hypotheses",
    "verify_tail_theorem",
    "calibrate_tail_theorem",
    "gumbo_set",
    "far_sparse_tail_check",
    "median_sign_check",
    "tail_decay_check",
    "truncated_second_moment_check",
]

# rational lower bound for e, so that e-dependent upper bounds stay exact
E_LOWER = Fraction(2718281828, 10**9)


def rho_min(dist: FiniteDistribution) -> Fraction:
    """``(1/4) min_i alpha_i / (1 - alpha_i)``, which equals ``lambda / (4 (1 - lambda))``."""
    return min(a / (1 - a) for a in dist.probs) / 4


@dataclass(frozen=True)
class NoiseOperatorSpec:
    """A noise rate ``rho`` together with the base distribution."""

    rho: Fraction
    dist: FiniteDistribution

    def __post_init__(self):
        rho = Fraction(self.rho)
        object.__setattr__(self, "rho", rho)
        if not -rho_min(self.dist) <= rho <= 1:
            raise ValueError(f"rho = {rho} outside [-{rho_min(self.dist)}, 1]")
        k = self.kernel()
        if any(a < 0 for row in k for a in row):
            raise ValueError("noise kernel has a negative entry")

    def kernel(self) -> list:
        """Row ``i`` is the law of ``N_rho(v_i)`` over the support."""
        rho, probs = self.rho, self.dist.probs
        return [
            [(rho + (1 - rho) * aj) if i == j else (1 - rho) * aj for j, aj in enumerate(probs)]
            for i in range(len(probs))
        ]


def noise_operator(f: MultilinearPolynomial, spec: NoiseOperatorSpec) -> MultilinearPolynomial:
    """Fourier route: each coefficient is multiplied by ``rho^|S|``."""
    rho = spec.rho if f.is_exact else float(spec.rho)
    return MultilinearPolynomial({m: c * rho ** len(m) for m, c in f.items()}, f.degree)


def value_tensor(f: MultilinearPolynomial, dist: FiniteDistribution, variables: Sequence[int] | None = None):
    """Values of ``f`` on ``support^k`` as an object array of shape ``(ell,) * k``."""
    variables = tuple(f.variables if variables is None else variables)
    ell, k = dist.ell, len(variables)
    out = np.empty((ell,) * k, dtype=object)
    for idx in itertools.product(range(ell), repeat=k):
        out[idx] = f.evaluate({v: dist.values[j] for v, j in zip(variables, idx)})
    return out


def noise_operator_pointwise(
    f: MultilinearPolynomial, spec: NoiseOperatorSpec, variables: Sequence[int] | None = None
):
    """Definition route: ``E_{y ~ N_rho(x)} f(y)`` for every support point ``x``.

    The product kernel is applied one axis at a time, which is the same
    expectation as the full ``ell^k x ell^k`` sum but far cheaper.
    """
    variables = tuple(f.variables if variables is None else variables)
    vals = value_tensor(f, spec.dist, variables)
    kern = np.array(spec.kernel(), dtype=object)
    for axis in range(len(variables)):
        vals = np.moveaxis(np.tensordot(kern, vals, axes=([1], [axis])), 0, axis)
    return vals


def two_route_agreement(f: MultilinearPolynomial, spec: NoiseOperatorSpec) -> bool:
    variables = f.variables
    fourier = value_tensor(noise_operator(f, spec), spec.dist, variables)
    direct = noise_operator_pointwise(f, spec, variables)
    return bool(np.all(fourier == direct))


# ---------------------------------------------------------------------------
# hypercontractivity


def hypercontractive_bound(q, d: int, lam, norm2_sq):
    """``(sqrt(q-1) lam^(1/q - 1/2))^(dq) ||f||_2^q`` as a float."""
    q = float(q)
    return (q - 1) ** (d * q / 2) * float(lam) ** (d - d * q / 2) * float(norm2_sq) ** (q / 2)


def _bound_check(lhs, q: int, d: int, lam, norm_sq) -> dict:
    # compare lhs^2 with (q-1)^(dq) lam^(2d - dq) ||f||^(2q), all rational
    rhs_sq = Fraction(q - 1) ** (d * q) * Fraction(lam) ** (2 * d - d * q) * Fraction(norm_sq) ** q
    return {
        "lhs": lhs,
        "rhs": math.sqrt(rhs_sq) if rhs_sq < 2**1000 else float("inf"),
        "rhs_squared": rhs_sq,
        "holds": lhs * lhs <= rhs_sq,
    }


def hypercontractive_check(f: MultilinearPolynomial, q, dist: FiniteDistribution, d: int | None = None) -> dict:
    """``E|f|^q`` against ``(sqrt(q-1) lambda^(1/q - 1/2))^(dq) ||f||_2^q``.

    Exact for integer ``q`` and rational ``f``; otherwise evaluated in floats.
    """
    if q <= 2:
        raise ValueError("q must exceed 2")
    d = f.degree if d is None else d
    rv = output_distribution(f, dist)
    norm_sq = coeff_norm(f).squared
    if isinstance(q, int) and f.is_exact:
        return _bound_check(abs_moment(rv, q), q, d, dist.lam, norm_sq)
    lhs = sum(float(a) * abs(float(v)) ** float(q) for v, a in rv.atoms)
    rhs = hypercontractive_bound(q, d, dist.lam, norm_sq)
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs * (1 + 1e-12)}


def noiseless_moment_check(p: MultilinearPolynomial, ell: int, dist: FiniteDistribution, K=None) -> dict:
    """``E|p|^ell <= (ell-1)^(d ell/2) lambda^(d - d ell/2) K^ell`` with ``K = ||p||`` by default.

    Only meaningful for ``ell >= 2``: at ``ell = 1`` the right side is 0.
    """
    if not p.is_exact:
        raise ValueError("exact polynomial required")
    K_sq = coeff_norm(p).squared if K is None else Fraction(K) ** 2
    rv = output_distribution(p, dist)
    return _bound_check(abs_moment(rv, ell), ell, p.degree, dist.lam, K_sq)


def cumulant_bound_check(rv: DiscreteRV, ell: int) -> dict:
    """``|kappa_ell(Y)| <= E|Y|^ell e^ell ell!`` for mean-zero exact ``Y``.

    A rational lower bound for ``e`` keeps the comparison exact and only
    makes the right side smaller.
    """
    kappa = moments_to_cumulants(moment_vector(rv, ell))[ell - 1]
    rhs = abs_moment(rv, ell) * E_LOWER**ell * math.factorial(ell)
    return {"lhs": abs(kappa), "rhs": rhs, "holds": abs(kappa) <= rhs}


# ---------------------------------------------------------------------------
# Chebyshev extrema


def chebyshev_extrema(d: int) -> list:
    """The ``d + 1`` points ``cos(j pi / d)`` where ``|T_d| = 1``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return [math.cos(j * math.pi / d) for j in range(d + 1)]


def chebyshev_check(coeffs: Sequence[float]) -> dict:
    """For ``p(x) = sum_i a_i x^i`` of degree ``d``: ``max_j |p(eta_j)| >= |a_1| / d``."""
    d = len(coeffs) - 1
    vals = [abs(sum(a * x**i for i, a in enumerate(coeffs))) for x in chebyshev_extrema(d)]
    lhs, rhs = max(vals), abs(coeffs[1]) / d if d >= 1 else 0.0
    return {"lhs": lhs, "rhs": rhs, "holds": lhs >= rhs * (1 - 1e-12)}


# ---------------------------------------------------------------------------
# tail theorems


def tail_hypotheses(f: MultilinearPolynomial, J: Iterable[int], delta, t, C) -> dict:
    """The two hypotheses of the low-influence tail theorem, evaluated exactly when possible.

    ``cond1``: coefficient mass outside ``J`` is at least ``delta``.
    ``cond2``: ``t >= sqrt(delta)`` and every ``i`` outside ``J`` has
    ``Inf_i <= delta^2 t^-2 C^-d``.
    """
    J = set(J)
    d = max(f.degree, 1)
    zero = Fraction(0) if f.is_exact else 0.0
    mass_out = sum((c * c for m, c in f.items() if not set(m) <= J), zero)
    infl_cap = delta**2 / (t * t * C**d) if C > 0 else math.inf
    worst = max((influence(f, i) for i in f.variables if i not in J), default=zero)
    return {
        "mass_outside_J": mass_out,
        "max_influence_outside_J": worst,
        "influence_cap": infl_cap,
        "cond1": mass_out >= delta,
        "cond2": t * t >= delta and worst <= infl_cap,
    }


def _tail(rv: DiscreteRV, t) -> Fraction:
    return sum((a for v, a in rv.atoms if abs(v) >= t), Fraction(0))


def verify_tail_theorem(
    f: MultilinearPolynomial,
    J: Iterable[int],
    delta,
    t,
    C,
    dist: FiniteDistribution,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> dict:
    """Check hypotheses and conclusion ``Pr[|f| >= t] >= exp(-C t^2 d^2 log d / delta)``.

    ``log d`` is replaced by ``log 2`` at ``d = 1``.  ``consistent`` is the
    implication: false only when both hypotheses hold and the tail is too
    small.
    """
    d = max(f.degree, 1)
    hyp = tail_hypotheses(f, J, delta, t, C)
    rv = output_distribution(f, dist, budget)
    tail = _tail(rv, t)
    log_bound = -float(C) * float(t) ** 2 * d * d * _log_d(d) / float(delta)
    concl = tail > 0 and math.log(tail) >= log_bound - 1e-12
    holds_hyp = bool(hyp["cond1"] and hyp["cond2"])
    return {
        **hyp,
        "tail": tail,
        "bound": math.exp(log_bound),
        "log_bound": log_bound,
        "conclusion": concl,
        "hypotheses": holds_hyp,
        "consistent": (not holds_hyp) or concl,
    }


def calibrate_tail_theorem(instances: Sequence[tuple], dist: FiniteDistribution, hi: float = 1.0) -> float:
    """Smallest ``C`` making the tail theorem consistent on every ``(f, J, delta, t)``.

    Larger ``C`` tightens the influence hypothesis and weakens the
    conclusion, so consistency is upward closed in ``C``; the boundary is
    located by bisection.
    """
    prepared = []
    for f, J, delta, t in instances:
        prepared.append((f, tuple(J), delta, t, output_distribution(f, dist)))

    def ok(C):
        for f, J, delta, t, rv in prepared:
            hyp = tail_hypotheses(f, J, delta, t, C)
            if not (hyp["cond1"] and hyp["cond2"]):
                continue
            d = max(f.degree, 1)
            tail = _tail(rv, t)
            if tail == 0 or math.log(tail) < -C * float(t) ** 2 * d * d * _log_d(d) / float(delta):
                return False
        return True

    lo = 0.0
    if ok(lo):
        return 0.0
    while not ok(hi):
        hi *= 2
        if hi > 1e12:
            raise ValueError("no feasible constant found")
    for _ in range(100):
        mid = (lo + hi) / 2
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


def gumbo_set(p: MultilinearPolynomial, T, K) -> dict:
    """Heavy-influence set ``J = {i : Inf_i > kappa}`` with ``kappa = e K^2 / T^(1/d)``.

    Reports ``|J|`` against the counting bound ``d K^2 / kappa`` and the
    number of monomials inside ``J`` against ``(e K^2 / kappa)^d = T``.
    """
    d = max(p.degree, 1)
    kappa = math.e * float(K) ** 2 / float(T) ** (1 / d)
    J = tuple(i for i in p.variables if float(influence(p, i)) > kappa)
    size_bound = d * float(K) ** 2 / kappa
    inside = sum(math.comb(len(J), j) for j in range(d + 1))
    return {
        "kappa": kappa,
        "J": J,
        "size_bound": size_bound,
        "size_ok": len(J) <= size_bound * (1 + 1e-12),
        "monomials_inside_J": inside,
        "monomials_bound": (math.e * float(K) ** 2 / kappa) ** d,
    }


def far_sparse_tail_check(
    p: MultilinearPolynomial,
    s: int,
    T: int,
    eps,
    K,
    C,
    dist: FiniteDistribution,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> dict:
    """Exact ``Pr[|p| >= 2 K M^d sqrt(s)]`` against ``q`` for a polynomial that may be far from T-sparse.

    Also evaluates the heavy-influence set construction and the two
    conditions it is meant to deliver with ``delta = eps / K`` and
    ``t = 2 K M^d sqrt(s)``.
    """
    d = max(p.degree, 1)
    dist_sq = distance_to_sparsity(p, T).squared
    far = dist_sq >= Fraction(eps) ** 2 if p.is_exact else dist_sq >= float(eps) ** 2
    t = sparse_value_bound(s, K, dist.M, d)
    t_sq = 4 * t.squared
    rv = output_distribution(p, dist, budget)
    if rv.is_exact and isinstance(t_sq, Fraction):
        tail = sum((a for v, a in rv.atoms if v * v >= t_sq), Fraction(0))
    else:
        tail = sum((a for v, a in rv.atoms if float(v) ** 2 >= float(t_sq)), Fraction(0))
    q = tail_prob_bound(K, dist.M, s, d, eps, C)
    gumbo = gumbo_set(p, T, K)
    delta = Fraction(eps) / Fraction(K) if p.is_exact else float(eps) / float(K)
    hyp = tail_hypotheses(p, gumbo["J"], delta, 2 * t.value, C)
    return {
        "far": far,
        "distance_squared": dist_sq,
        "threshold": 2 * t.value,
        "tail": tail,
        "q": q,
        "tail_ok": float(tail) >= q,
        "gumbo": gumbo,
        "cond1": hyp["cond1"],
        "cond2": hyp["cond2"],
    }


# ---------------------------------------------------------------------------
# anti-concentration and tail decay


def median_sign_check(f: MultilinearPolynomial, dist: FiniteDistribution, d: int | None = None) -> dict:
    """``Pr[f >= E f] >= (lambda / 15)^d``, exactly."""
    d = f.degree if d is None else d
    rv = output_distribution(f, dist)
    mean = f.coefficient(())
    lhs = sum((a for v, a in rv.atoms if v >= mean), Fraction(0))
    rhs = (Fraction(dist.lam) / 15) ** d
    return {"lhs": lhs, "rhs": rhs, "holds": lhs >= rhs}


def tail_decay_check(f: MultilinearPolynomial, t: float, dist: FiniteDistribution, d: int | None = None) -> dict:
    """``Pr[|f| >= t ||f||_2] <= lambda^d exp(-(d / 2e) lambda t^(2/d))`` for ``t >= (2e/lambda)^(d/2)``."""
    d = f.degree if d is None else d
    lam = float(dist.lam)
    if t < (2 * math.e / lam) ** (d / 2):
        raise ValueError("t below the admissible range")
    rv = output_distribution(f, dist)
    cut = float(t) * coeff_norm(f).value
    lhs = sum((a for v, a in rv.atoms if abs(float(v)) >= cut), Fraction(0))
    rhs = lam**d * math.exp(-(d / (2 * math.e)) * lam * t ** (2 / d))
    return {"lhs": lhs, "rhs": rhs, "holds": float(lhs) <= rhs}


def truncated_second_moment_check(f: MultilinearPolynomial, dist: FiniteDistribution, d: int | None = None) -> dict:
    """``E[f^2 1{|f| > t0}] <= 0.52`` with ``t0 = (2e/lambda)^d`` for ``||f||_2 = 1``."""
    d = f.degree if d is None else d
    norm = coeff_norm(f)
    if abs(float(norm.squared) - 1) > 1e-12:
        raise ValueError("f must have unit norm")
    t0 = (2 * math.e / float(dist.lam)) ** d
    rv = output_distribution(f, dist)
    lhs = sum(float(a) * float(v) ** 2 for v, a in rv.atoms if abs(float(v)) > t0)
    return {"lhs": lhs, "rhs": 0.52, "t0": t0, "holds": lhs <= 0.52}
