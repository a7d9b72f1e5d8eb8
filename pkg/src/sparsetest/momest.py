"""Labeled-sample oracles and moment estimation under additive noise.

The clean-moment pipeline is

1. empirical raw moments of the noisy labels ``y = p(x) + eta``,
2. noisy cumulants through incomplete Bell polynomials,
3. subtraction of the known noise cumulants (cumulants add over
   independent sums),
4. clean moments through the inverse Bell-polynomial map.

Two sample-planning modes exist.  ``"explicit"`` uses the worst-case
Chebyshev cascade (astronomically large even for tiny instances).
``"practical"`` is an empirical shortcut: a pilot batch
estimates the variance of the (algebraically equivalent) linear
deconvolution statistic and Chebyshev's inequality is applied to it.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np

from .core import (
    BudgetExceeded,
    FiniteDistribution,
    MultilinearPolynomial,
    Number,
    format_number,
    parse_number,
)
from .exactdist import DiscreteRV, moment_vector, output_distribution

__all__ = [
    "NoiseSpec",
    "LabeledSampleBatch",
    "MomentEstimate",
    "SampleOracle",
    "BatchOracle",
    "ExactMomentOracle",
    "ScaledOracle",
    "draw_labeled_samples",
    "bell_table",
    "bell_polynomial_partitions",
    "moments_to_cumulants",
    "cumulants_to_moments",
    "deconvolution_weights",
    "sample_size_for",
    "log2_sample_size_for",
    "empirical_raw_moment",
    "empirical_raw_moments",
    "estimate_clean_moments",
    "DEFAULT_COUNT_BUDGET",
    "DEFAULT_MAX_SAMPLES",
]

# cap on the value returned by sample_size_for; the formula is a theoretical count
DEFAULT_COUNT_BUDGET = 2**256
# cap on samples actually drawn by estimate_clean_moments
DEFAULT_MAX_SAMPLES = 5 * 10**7


# ---------------------------------------------------------------------------
# Bell polynomials and the moment/cumulant maps


def bell_table(x: Sequence, n: int) -> list:
    """Incomplete Bell polynomials ``B[i][k] = B_{i,k}(x_1, ..., x_{i-k+1})`` for ``i, k <= n``.

    Uses the recursion ``B_{i,k} = sum_j C(i-1, j-1) x_j B_{i-j,k-1}``.
    ``x[0]`` holds ``x_1``.
    """
    one = x[0] * 0 + 1 if len(x) else 1
    zero = one * 0
    B = [[zero] * (n + 1) for _ in range(n + 1)]
    B[0][0] = one
    for i in range(1, n + 1):
        for k in range(1, i + 1):
            acc = zero
            for j in range(1, i - k + 2):
                acc += math.comb(i - 1, j - 1) * x[j - 1] * B[i - j][k - 1]
            B[i][k] = acc
    return B


def _partitions_into(n: int, k: int):
    """Multiplicity vectors (j_1..j_{n-k+1}) with sum j = k and sum i j_i = n."""
    top = n - k + 1
    for parts in combinations_with_replacement(range(1, top + 1), k):
        if sum(parts) == n:
            j = [0] * top
            for part in parts:
                j[part - 1] += 1
            yield j


def bell_polynomial_partitions(n: int, k: int, x: Sequence):
    """``B_{n,k}`` by explicit partition enumeration (slow; used for cross-checks)."""
    total = x[0] * 0 if len(x) else 0
    if n == 0 and k == 0:
        return total + 1
    if n == 0 or k == 0:
        return total
    for j in _partitions_into(n, k):
        coef = math.factorial(n)
        term = 1
        for i, ji in enumerate(j, start=1):
            coef //= math.factorial(ji) * math.factorial(i) ** ji
            term = term * x[i - 1] ** ji
        total += coef * term
    return total


def _cumulants_recursive(m: Sequence) -> list:
    # kappa_l = m_l - sum_{j<l} C(l-1, j-1) kappa_j m_{l-j}
    kappa = []
    for ell in range(1, len(m) + 1):
        acc = m[ell - 1]
        for j in range(1, ell):
            acc -= math.comb(ell - 1, j - 1) * kappa[j - 1] * m[ell - j - 1]
        kappa.append(acc)
    return kappa


def _exactify(values: Sequence) -> tuple[list, bool]:
    # floats are converted exactly; the maps are evaluated in rationals and
    # rounded once at the end, avoiding the heavy cancellation of the Bell sums
    is_float = any(isinstance(v, float) for v in values)
    return [Fraction(v) for v in values], is_float


def moments_to_cumulants(m: Sequence) -> list:
    """Cumulants ``kappa_1..kappa_l`` from raw moments ``m_1..m_l``.

    ``kappa_l = sum_k (-1)^{k-1} (k-1)! B_{l,k}(m_1, ..., m_{l-k+1})``.  When
    ``m_1 == 0`` the result is cross-checked against the recursion
    ``kappa_l = m_l - sum_j C(l-1, j-1) kappa_j m_{l-j}``.  Float inputs are
    evaluated exactly and rounded once.
    """
    m, is_float = _exactify(m)
    if not m:
        raise ValueError("need at least one moment")
    n = len(m)
    B = bell_table(m, n)
    kappa = []
    for ell in range(1, n + 1):
        acc = B[ell][1] * 0
        for k in range(1, ell + 1):
            acc += (-1) ** (k - 1) * math.factorial(k - 1) * B[ell][k]
        kappa.append(acc)
    if m[0] == 0 and kappa != _cumulants_recursive(m):
        raise ArithmeticError("Bell-polynomial and recursive cumulant routes disagree")
    return [float(v) for v in kappa] if is_float else kappa


def cumulants_to_moments(kappa: Sequence) -> list:
    """Raw moments ``m_l = sum_k B_{l,k}(kappa_1, ..., kappa_{l-k+1})``."""
    kappa, is_float = _exactify(kappa)
    if not kappa:
        raise ValueError("need at least one cumulant")
    n = len(kappa)
    B = bell_table(kappa, n)
    out = [sum(B[ell][1 : ell + 1], Fraction(0)) for ell in range(1, n + 1)]
    return [float(v) for v in out] if is_float else out


# ---------------------------------------------------------------------------
# noise


@dataclass(frozen=True)
class NoiseSpec:
    """Additive label noise with known moments.

    kind ``"none"``, ``"finite"`` (atoms, any mean), ``"gaussian"`` (mu,
    sigma) or ``"moments"`` (a user-supplied raw-moment table; accepted but
    unvalidated, and cannot be sampled).
    """

    kind: str = "none"
    atoms: tuple = ()
    mu: Number = Fraction(0)
    sigma: Number = Fraction(0)
    table: tuple = ()

    @classmethod
    def none(cls) -> "NoiseSpec":
        return cls("none")

    @classmethod
    def finite(cls, atoms) -> "NoiseSpec":
        rv = DiscreteRV([(parse_number(v), parse_number(a)) for v, a in atoms])
        return cls("finite", atoms=rv.atoms)

    @classmethod
    def point(cls, c: Number) -> "NoiseSpec":
        return cls.finite([(c, 1)])

    @classmethod
    def gaussian(cls, mu: Number = 0, sigma: Number = 1) -> "NoiseSpec":
        conv = (lambda v: v) if isinstance(mu, float) or isinstance(sigma, float) else Fraction
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        return cls("gaussian", mu=conv(mu), sigma=conv(sigma))

    @classmethod
    def from_moments(cls, table: Sequence) -> "NoiseSpec":
        return cls("moments", table=tuple(parse_number(t) for t in table))

    @property
    def max_order(self) -> int | None:
        return len(self.table) if self.kind == "moments" else None

    def _check_order(self, n: int) -> None:
        if self.max_order is not None and n > self.max_order:
            raise ValueError(f"noise moment table has order {self.max_order}, order {n} requested")

    def raw_moments(self, n: int) -> list:
        """``m_1(eta) .. m_n(eta)``."""
        self._check_order(n)
        if n == 0:
            return []
        if self.kind == "none":
            return [Fraction(0)] * n
        if self.kind == "finite":
            return moment_vector(DiscreteRV(self.atoms), n)
        if self.kind == "gaussian":
            kappa = [self.mu, self.sigma**2] + [self.mu * 0] * max(0, n - 2)
            return cumulants_to_moments(kappa[:n])
        return list(self.table[:n])

    def cumulants(self, n: int) -> list:
        self._check_order(n)
        if n == 0:
            return []
        if self.kind == "none":
            return [Fraction(0)] * n
        if self.kind == "gaussian":
            return ([self.mu, self.sigma**2] + [self.mu * 0] * max(0, n - 2))[:n]
        return moments_to_cumulants(self.raw_moments(n))

    def max_abs_moment(self, a: int, b: int) -> float:
        """``max_{a<=k<=b} |m_k(eta)|`` as a float (used by the sample-count bounds)."""
        ms = self.raw_moments(b)
        return max(abs(float(v)) for v in ms[a - 1 : b])

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(m)
        if self.kind == "finite":
            vals = np.array([float(v) for v, _ in self.atoms])
            probs = np.array([float(a) for _, a in self.atoms])
            return vals[rng.choice(len(vals), size=m, p=probs / probs.sum())]
        if self.kind == "gaussian":
            return float(self.mu) + float(self.sigma) * rng.standard_normal(m)
        raise ValueError("a moment-table noise spec cannot be sampled")

    def scaled(self, c: Number) -> "NoiseSpec":
        """Spec of ``eta / c``."""
        if self.kind == "none":
            return self
        if self.kind == "finite":
            return NoiseSpec("finite", atoms=DiscreteRV([(v / c, a) for v, a in self.atoms]).atoms)
        if self.kind == "gaussian":
            return NoiseSpec("gaussian", mu=self.mu / c, sigma=self.sigma / abs(c))
        return NoiseSpec("moments", table=tuple(t / c**k for k, t in enumerate(self.table, start=1)))

    def to_dict(self) -> dict:
        if self.kind == "finite":
            return {"kind": "finite", "atoms": [[format_number(v), format_number(a)] for v, a in self.atoms]}
        if self.kind == "gaussian":
            return {"kind": "gaussian", "mu": format_number(self.mu), "sigma": format_number(self.sigma)}
        if self.kind == "moments":
            return {"kind": "moments", "table": [format_number(t) for t in self.table]}
        return {"kind": "none"}

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseSpec":
        kind = data.get("kind", "none")
        if kind == "none":
            return cls.none()
        if kind == "finite":
            return cls.finite(data["atoms"])
        if kind == "gaussian":
            return cls.gaussian(parse_number(data.get("mu", 0)), parse_number(data.get("sigma", 1)))
        if kind == "moments":
            return cls.from_moments(data["table"])
        raise ValueError(f"unknown noise kind {kind!r}")


# ---------------------------------------------------------------------------
# samples and oracles


@dataclass
class LabeledSampleBatch:
    """``m`` labeled examples restricted to the active variables."""

    xs: np.ndarray  # m x k
    ys: np.ndarray  # m
    variables: tuple
    seed: int | None = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    dist_label: str = ""

    @property
    def m(self) -> int:
        return int(self.ys.shape[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x_{v}" for v in self.variables] + ["y"])
        for row, y in zip(self.xs.tolist(), self.ys.tolist()):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(y))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int | None = None) -> "LabeledSampleBatch":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty CSV")
        header = rows[0]
        if not header or header[-1] != "y" or not all(h.startswith("x_") for h in header[:-1]):
            raise ValueError("CSV header must be 'x_1,...,x_k,y'")
        variables = tuple(int(h[2:]) for h in header[:-1])
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(header))
        return cls(data[:, :-1], data[:, -1], variables, seed)


def _draw_x(dist: FiniteDistribution, rng: np.random.Generator, m: int, k: int) -> np.ndarray:
    vals = np.array([float(v) for v in dist.values])
    probs = np.array([float(a) for a in dist.probs])
    return vals[rng.choice(len(vals), size=(m, k), p=probs / probs.sum())]


def draw_labeled_samples(
    p: MultilinearPolynomial,
    dist: FiniteDistribution,
    noise: NoiseSpec,
    m: int,
    seed: int,
) -> LabeledSampleBatch:
    """Draw ``m`` i.i.d. pairs ``(x, p(x) + eta)``; deterministic given ``seed``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    return _draw_with(p, dist, noise, m, rng, seed)


def _draw_with(p, dist, noise, m, rng, seed) -> LabeledSampleBatch:
    variables = p.variables
    xs = _draw_x(dist, rng, m, len(variables))
    ys = p.evaluate_array(xs, variables) + noise.sample(rng, m)
    return LabeledSampleBatch(xs, ys, variables, seed, noise, dist.label())


class SampleOracle:
    """Simulated labeled-example oracle for ``p`` under ``dist`` with ``noise``.

    Successive :meth:`draw` calls continue one seeded random stream.
    """

    exact = False

    def __init__(self, p: MultilinearPolynomial, dist: FiniteDistribution, noise: NoiseSpec, seed: int):
        self.p, self.dist, self.noise, self.seed = p, dist, noise, seed
        self._rng = np.random.default_rng(seed)
        self.samples_drawn = 0

    def draw(self, m: int) -> LabeledSampleBatch:
        self.samples_drawn += m
        return _draw_with(self.p, self.dist, self.noise, m, self._rng, self.seed)


class BatchOracle:
    """Serves a fixed batch sequentially, without replacement."""

    exact = False

    def __init__(self, batch: LabeledSampleBatch, dist: FiniteDistribution | None = None):
        self.batch, self.dist = batch, dist
        self.seed = batch.seed
        self._pos = 0
        self.samples_drawn = 0

    @property
    def remaining(self) -> int:
        return self.batch.m - self._pos

    def draw(self, m: int) -> LabeledSampleBatch:
        if m > self.remaining:
            raise BudgetExceeded(
                f"batch has {self.remaining} unused samples, {m} requested", required=m, owner="momest"
            )
        sl = slice(self._pos, self._pos + m)
        self._pos += m
        self.samples_drawn += m
        b = self.batch
        return LabeledSampleBatch(b.xs[sl], b.ys[sl], b.variables, b.seed, b.noise, b.dist_label)


class ExactMomentOracle:
    """Serves exact clean moments of ``p(X^{tensor n})`` instead of samples."""

    exact = True
    seed = None
    samples_drawn = 0

    def __init__(self, p: MultilinearPolynomial, dist: FiniteDistribution, rv: DiscreteRV | None = None):
        # ``rv`` lets callers supply a law computed by convolution when
        # enumerating support^k would be too large
        self.p, self.dist = p, dist
        self._rv = output_distribution(p, dist) if rv is None else rv

    @property
    def rv(self) -> DiscreteRV:
        return self._rv

    def moments(self, k: int) -> list:
        return moment_vector(self._rv, k)


class ScaledOracle:
    """Wraps an oracle so that every label is divided by ``c``."""

    def __init__(self, inner, c: Number):
        self.inner, self.c = inner, c
        self.exact = inner.exact
        self.dist = getattr(inner, "dist", None)
        self.seed = getattr(inner, "seed", None)

    @property
    def samples_drawn(self) -> int:
        return self.inner.samples_drawn

    def draw(self, m: int) -> LabeledSampleBatch:
        b = self.inner.draw(m)
        return LabeledSampleBatch(b.xs, b.ys / float(self.c), b.variables, b.seed, b.noise, b.dist_label)

    def moments(self, k: int) -> list:
        c = self.c
        return [v / c**j for j, v in enumerate(self.inner.moments(k), start=1)]


# ---------------------------------------------------------------------------
# estimation


@dataclass
class MomentEstimate:
    """Output of :func:`estimate_clean_moments`.

    ``value`` estimates ``m_order(p(X))``; the intermediate vectors have
    length ``order``.
    """

    order: int
    value: Number
    tau: float
    delta: float
    samples: int
    mode: str
    noisy_moments: list
    noisy_cumulants: list
    clean_cumulants: list
    clean_moments: list
    planned_samples: int = 0

    def to_dict(self) -> dict:
        def enc(v):
            return format_number(v) if isinstance(v, Fraction) else float(v)

        return {
            "order": self.order,
            "value": enc(self.value),
            "tau": float(self.tau),
            "delta": float(self.delta),
            "samples": int(self.samples),
            "planned_samples": int(self.planned_samples),
            "mode": self.mode,
            "noisy_moments": [enc(v) for v in self.noisy_moments],
            "noisy_cumulants": [enc(v) for v in self.noisy_cumulants],
            "clean_cumulants": [enc(v) for v in self.clean_cumulants],
            "clean_moments": [enc(v) for v in self.clean_moments],
        }


def empirical_raw_moment(batch: LabeledSampleBatch, ell: int) -> float:
    """Mean of ``y^ell`` over the batch (numpy pairwise summation, fixed order)."""
    return empirical_raw_moments(batch, ell)[-1]


def empirical_raw_moments(batch: LabeledSampleBatch, ell: int) -> list:
    """Empirical raw moments of orders ``1..ell`` in one pass over the powers."""
    if batch.m == 0:
        raise ValueError("empty batch")
    out, power = [], np.ones_like(batch.ys)
    for _ in range(ell):
        power = power * batch.ys
        out.append(float(np.mean(power)))
    return out


def deconvolution_weights(noise: NoiseSpec, ell: int) -> list:
    """Weights ``w_0..w_ell`` with ``m_ell(p) = sum_j w_j m_j(p + eta)`` (``m_0 = 1``).

    The cumulant pipeline is algebraically this linear map: the clean
    moment generating function is the noisy one divided by that of the
    noise.
    """
    eta = [Fraction(1) if not isinstance(noise.mu, float) else 1.0] + noise.raw_moments(ell)
    inv = [eta[0]]  # moments of the formal series 1 / mgf_eta
    for n in range(1, ell + 1):
        inv.append(-sum(math.comb(n, i) * inv[i] * eta[n - i] for i in range(n)))
    return [math.comb(ell, j) * inv[ell - j] for j in range(ell + 1)]


def _log2(x: float) -> float:
    return math.log2(x) if x > 0 else float("-inf")


def log2_sample_size_for(ell, tau, delta, K, d, lam, noise: NoiseSpec, constant: float = 1.0) -> float:
    """``log2`` of the composed sample count (see :func:`sample_size_for`)."""
    ell, d = int(ell), int(d)
    lam, K = float(lam), float(K)
    lg_l, lg_lam, lg_K, lg_e = math.log2(ell), math.log2(lam), math.log2(K), math.log2(math.e)
    # clean-moment step: accuracy demanded of every clean cumulant
    lg_eps_kappa = _log2(tau) - (d * ell**2 * lg_l - d * ell**2 * lg_lam + 2 * ell**2 * lg_K + 2 * ell**2 * lg_e + 3 * ell**2 * lg_l)
    # noisy-cumulant step: accuracy demanded of every noisy moment
    m_eta = noise.max_abs_moment(1, ell + 1)
    inner = ell ** (d * ell / 2) * lam ** (d * (1 - ell) / 2) * K**ell + m_eta + 1
    lg_ml = ell + _log2(inner)
    lg_eps_m = lg_eps_kappa - (2 * math.log2(math.factorial(ell)) + 2 * ell**2 + 2 * ell + 2 * ell * lg_ml)
    # noisy-moment step: Chebyshev count for the highest order, failure delta / ell^2 per moment
    m2 = noise.max_abs_moment(2 * ell, 2 * ell + 2)
    var_bound = 2 ** (2 * ell) * ((2 * ell) ** (d * ell) * lam ** (d * (1 - 2 * ell) / 2) * K ** (2 * ell) + m2 + 1)
    lg_delta = _log2(delta) - 2 * lg_l
    return math.log2(constant) + _log2(var_bound) - lg_delta - 2 * lg_eps_m


def sample_size_for(
    ell: int,
    tau: float,
    delta: float,
    K: float,
    d: int,
    lam,
    noise: NoiseSpec,
    *,
    constant: float = 1.0,
    budget: int = DEFAULT_COUNT_BUDGET,
) -> int:
    """Sample count from the explicit Chebyshev cascade through the noisy moments.

    The clean-moment step asks for cumulant accuracy
    ``tau / (l^{dl^2} lambda^{-dl^2} K^{2l^2} e^{2l^2} l^{3l^2})``; the
    noisy-cumulant step turns that into a noisy-moment accuracy by dividing
    by ``(l!)^2 2^{2l^2+2l} (2^l (l^{dl/2} lambda^{d(1-l)/2} K^l + m_[1..l+1](eta) + 1))^{2l}``;
    the noisy-moment step then needs
    ``(1 / (delta' eps^2)) 2^{2l} ((2l)^{dl} lambda^{d(1-2l)/2} K^{2l} + m_[2l..2l+2](eta) + 1)``
    samples with per-moment failure ``delta' = delta / l^2``.  The unspecified
    absolute constant is ``constant``.

    Raises
    ------
    BudgetExceeded
        When the count exceeds ``budget``; ``log2_required`` is reported.
    """
    lg = log2_sample_size_for(ell, tau, delta, K, d, lam, noise, constant)
    if lg > math.log2(budget):
        raise BudgetExceeded(
            f"explicit sample count 2^{lg:.1f} exceeds budget 2^{math.log2(budget):.1f}",
            log2_required=lg,
            owner="momest",
        )
    return int(math.ceil(2.0**lg))


def _pipeline(noisy: list, noise: NoiseSpec) -> tuple[list, list, list]:
    noisy_k = moments_to_cumulants(noisy)
    eta_k = noise.cumulants(len(noisy))
    clean_k = [a - float(b) if isinstance(a, float) else a - b for a, b in zip(noisy_k, eta_k)]
    return noisy_k, clean_k, cumulants_to_moments(clean_k)


def _practical_plan(batch: LabeledSampleBatch, noise: NoiseSpec, orders, tau, delta, safety) -> int:
    ys = batch.ys
    need = 1
    for ell in orders:
        w = [float(v) for v in deconvolution_weights(noise, ell)]
        stat = np.zeros_like(ys)
        power = np.ones_like(ys)
        for j in range(1, ell + 1):
            power = power * ys
            stat += w[j] * power
        var = float(np.var(stat, ddof=1)) if ys.size > 1 else 0.0
        need = max(need, math.ceil(safety * var / (delta * tau**2)))
    return need


def estimate_clean_moments(
    oracle,
    ell: int,
    tau: float,
    delta: float,
    noise: NoiseSpec,
    K: float = 1.0,
    *,
    mode: str = "practical",
    d: int | None = None,
    lam=None,
    samples: int | None = None,
    cover_all_orders: bool = False,
    max_samples: int = DEFAULT_MAX_SAMPLES,
    pilot: int = 2000,
    safety: float = 2.0,
    min_samples: int = 200,
    constant: float = 1.0,
) -> MomentEstimate:
    """Estimate ``m_ell(p(X))`` from noisy labels within ``tau`` w.p. ``>= 1 - delta``.

    Parameters
    ----------
    oracle
        :class:`SampleOracle`, :class:`BatchOracle`, :class:`ScaledOracle` or
        :class:`ExactMomentOracle`.  The exact oracle short-circuits to exact
        clean moments (noise is ignored there).
    mode : {"practical", "explicit", "all"}
        Sample planning.  ``"explicit"`` needs ``d`` (and ``lam`` unless the
        oracle knows its distribution); ``"all"`` consumes every remaining
        sample of a :class:`BatchOracle`.
    samples : int, optional
        Explicit sample count, overriding the plan.
    cover_all_orders : bool
        Plan the count so that every order ``1..ell`` meets ``tau`` (used
        when all clean moments are consumed, as in the sharp tester).

    Raises
    ------
    BudgetExceeded
        If the planned count exceeds ``max_samples``.
    ValueError
        If ``ell`` exceeds the noise-moment table.
    """
    noise._check_order(ell)
    if getattr(oracle, "exact", False):
        clean = oracle.moments(ell)
        clean_k = moments_to_cumulants(clean)
        noisy = cumulants_to_moments([a + b for a, b in zip(clean_k, noise.cumulants(ell))]) if noise.kind != "moments" else clean
        return MomentEstimate(
            ell, clean[-1], tau, delta, 0, "exact", noisy, moments_to_cumulants(noisy), clean_k, clean
        )

    used = 0
    if samples is not None:
        m = int(samples)
    elif mode == "all":
        m = oracle.remaining
    elif mode == "explicit":
        if d is None:
            raise ValueError("explicit mode needs the degree bound d")
        if lam is None:
            lam = oracle.dist.lam
        m = sample_size_for(ell, tau, delta, K, d, lam, noise)
    elif mode == "practical":
        pilot_batch = oracle.draw(pilot)
        used += pilot_batch.m
        orders = range(1, ell + 1) if cover_all_orders else [ell]
        m = max(min_samples, _practical_plan(pilot_batch, noise, orders, tau, delta, safety))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if m > max_samples:
        raise BudgetExceeded(
            f"moment estimation needs {m} samples (max {max_samples})", required=m, owner="momest"
        )
    batch = oracle.draw(m)
    used += batch.m
    noisy = empirical_raw_moments(batch, ell)
    noisy_k, clean_k, clean = _pipeline(noisy, noise)
    return MomentEstimate(ell, clean[-1], tau, delta, used, mode, noisy, noisy_k, clean_k, clean, m)
