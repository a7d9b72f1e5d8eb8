"""Exact output distributions, moments and 1-D Wasserstein distances.

``output_distribution`` enumerates ``support^k`` over the active
variables of a polynomial.  For rational inputs the enumeration is done
in scaled integer arithmetic (vectorised with numpy) and the result is an
exact :class:`DiscreteRV` with rational values and probabilities.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterable, Mapping

import numpy as np

from .core import (
    BudgetExceeded,
    FiniteDistribution,
    MultilinearPolynomial,
    Number,
    RootValue,
    format_number,
    parse_number,
)

__all__ = [
    "DEFAULT_ENUMERATION_BUDGET",
    "DiscreteRV",
    "output_distribution",
    "raw_moment",
    "abs_moment",
    "moment_vector",
    "wasserstein1",
    "moment_distance",
    "identical_by_moments",
    "sum_independent",
]

DEFAULT_ENUMERATION_BUDGET = 2 * 10**7
_CHUNK = 1 << 18
_INT64_SAFE = 2**62


@dataclass(frozen=True)
class DiscreteRV:
    """Finitely supported real random variable with sorted distinct values."""

    atoms: tuple  # ((value, prob), ...)

    def __init__(self, atoms: Mapping | Iterable):
        items = atoms.items() if isinstance(atoms, Mapping) else atoms
        acc: dict = defaultdict(lambda: Fraction(0))
        for v, a in items:
            acc[v] += a
        pairs = tuple(sorted((v, a) for v, a in acc.items() if a != 0))
        if not pairs:
            raise ValueError("empty random variable")
        if any(a < 0 for _, a in pairs):
            raise ValueError("negative probability")
        if sum(a for _, a in pairs) != 1:
            raise ValueError("probabilities must sum to 1")
        object.__setattr__(self, "atoms", pairs)

    @classmethod
    def point(cls, v: Number) -> "DiscreteRV":
        return cls({v: Fraction(1)})

    @property
    def values(self) -> tuple:
        return tuple(v for v, _ in self.atoms)

    @property
    def probs(self) -> tuple:
        return tuple(a for _, a in self.atoms)

    @property
    def support_size(self) -> int:
        return len(self.atoms)

    @property
    def is_exact(self) -> bool:
        return all(isinstance(v, (int, Fraction)) and not isinstance(v, bool) for v in self.values)

    def as_dict(self) -> dict:
        return dict(self.atoms)

    def map(self, fn) -> "DiscreteRV":
        return DiscreteRV([(fn(v), a) for v, a in self.atoms])

    def scale(self, c: Number) -> "DiscreteRV":
        return self.map(lambda v: v * c)

    def cdf(self, x: Number) -> Fraction:
        return sum((a for v, a in self.atoms if v <= x), Fraction(0))

    def to_text(self) -> str:
        return "".join(f"{format_number(v)} {format_number(a)}\n" for v, a in self.atoms)

    @classmethod
    def from_text(cls, text: str) -> "DiscreteRV":
        atoms = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            v, a = line.split()
            atoms.append((parse_number(v), parse_number(a)))
        return cls(atoms)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([float(v) for v in self.values]), np.array([float(a) for a in self.probs]))


# ---------------------------------------------------------------------------
# enumeration


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def _scaled_terms(p: MultilinearPolynomial, dist: FiniteDistribution, variables: tuple):
    """Integer form: p(x) = (sum_S n_S L^{d-|S|} prod a_i) / (Q L^d) with v = a / L."""
    L = reduce(_lcm, (v.denominator for v in dist.values), 1)
    Q = reduce(_lcm, (c.denominator for _, c in p.items()), 1)
    d = max((len(m) for m in p), default=0)
    col = {v: j for j, v in enumerate(variables)}
    terms = []
    for mono, c in p.items():
        n = c.numerator * (Q // c.denominator) * L ** (d - len(mono))
        terms.append((n, tuple(col[i] for i in mono)))
    scaled = [int(v * L) for v in dist.values]
    return terms, scaled, Fraction(1, Q * L**d)


def _index_block(ell: int, k: int, start: int, stop: int) -> np.ndarray:
    """Mixed-radix digits (k x n) of the flat indices start..stop-1."""
    flat = np.arange(start, stop, dtype=np.int64)
    digits = np.empty((k, flat.size), dtype=np.int64)
    for j in range(k - 1, -1, -1):
        digits[j] = flat % ell
        flat //= ell
    return digits


def output_distribution(
    p: MultilinearPolynomial,
    dist: FiniteDistribution,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> DiscreteRV:
    """Exact law of ``p(X^{tensor k})`` over the active variables of ``p``.

    Parameters
    ----------
    p : MultilinearPolynomial
        Exact or float coefficients.  Float polynomials yield float values
        with exact rational probabilities.
    dist : FiniteDistribution
    budget : int
        Maximum number of support points ``ell^k`` to enumerate.

    Raises
    ------
    BudgetExceeded
        If ``ell^k`` exceeds ``budget``.
    """
    variables = p.variables
    k, ell = len(variables), dist.ell
    total = ell**k
    if total > budget:
        raise BudgetExceeded(
            f"enumeration needs {ell}^{k} = {total} points (budget {budget})",
            required=total,
            owner="exactdist",
        )
    if p.sparsity == 0:
        return DiscreteRV.point(Fraction(0) if p.is_exact else 0.0)

    # probability of a point depends only on how many coordinates hit each atom
    prob_den = reduce(_lcm, (a.denominator for a in dist.probs), 1)
    prob_num = [int(a * prob_den) for a in dist.probs]
    exact = p.is_exact
    if exact:
        terms, scaled, unit = _scaled_terms(p, dist, variables)
        bound = sum(abs(n) for n, _ in terms) * max(abs(a) for a in scaled) ** p.degree
        dtype = np.int64 if bound < _INT64_SAFE else object
        atom_vals = np.array(scaled, dtype=dtype)
    else:
        col = {v: j for j, v in enumerate(variables)}
        terms = [(float(c), tuple(col[i] for i in m)) for m, c in p.items()]
        atom_vals = np.array([float(v) for v in dist.values])

    weights: dict = defaultdict(int)
    for start in range(0, total, _CHUNK):
        stop = min(total, start + _CHUNK)
        digits = _index_block(ell, k, start, stop)
        xs = atom_vals[digits]  # k x n
        vals = np.zeros(stop - start, dtype=xs.dtype)
        for n, cols in terms:
            term = np.full(stop - start, n, dtype=xs.dtype)
            for j in cols:
                term = term * xs[j]
            vals = vals + term
        counts = np.stack([(digits == a).sum(axis=0) for a in range(ell)])
        if vals.dtype == object:
            keys = zip(vals.tolist(), map(tuple, counts.T.tolist()))
            for key in keys:
                weights[key] += 1
        else:
            stacked = np.vstack([vals.astype(np.float64) if not exact else vals, counts.astype(vals.dtype)]).T
            uniq, mult = np.unique(stacked, axis=0, return_counts=True)
            for row, c in zip(uniq.tolist(), mult.tolist()):
                key = (row[0], tuple(int(t) for t in row[1:]))
                weights[key] += c

    den = prob_den**k
    acc: dict = defaultdict(int)
    for (v, cnt), mult in weights.items():
        w = mult
        for a, c in zip(prob_num, cnt):
            w *= a**c
        acc[v] += w
    if exact:
        return DiscreteRV([(int(v) * unit, Fraction(w, den)) for v, w in acc.items()])
    return DiscreteRV([(float(v), Fraction(w, den)) for v, w in acc.items()])


# ---------------------------------------------------------------------------
# moments and distances


def raw_moment(rv: DiscreteRV, ell: int) -> Number:
    """``E[Y^ell]`` (exact for rational values)."""
    zero = Fraction(0) if rv.is_exact else 0.0
    return sum((a * v**ell for v, a in rv.atoms), zero)


def abs_moment(rv: DiscreteRV, ell: int) -> Number:
    """``E[|Y|^ell]``."""
    zero = Fraction(0) if rv.is_exact else 0.0
    return sum((a * abs(v) ** ell for v, a in rv.atoms), zero)


def moment_vector(rv: DiscreteRV, k: int) -> list:
    """Raw moments of orders ``1..k``."""
    out, powers = [], [Fraction(1) if rv.is_exact else 1.0 for _ in rv.atoms]
    for _ in range(k):
        powers = [pw * v for pw, v in zip(powers, rv.values)]
        out.append(sum((a * pw for pw, a in zip(powers, rv.probs)), Fraction(0) if rv.is_exact else 0.0))
    return out


def wasserstein1(a: DiscreteRV, b: DiscreteRV) -> Number:
    """``integral_0^1 |F^{-1}(t) - G^{-1}(t)| dt`` by merging the two quantile breakpoint lists.

    Exact when both random variables have rational values.
    """
    ia = ib = 0
    ra, rb = a.atoms[0][1], b.atoms[0][1]
    total = Fraction(0) if (a.is_exact and b.is_exact) else 0.0
    while True:
        step = min(ra, rb)
        total += step * abs(a.atoms[ia][0] - b.atoms[ib][0])
        ra -= step
        rb -= step
        if ra == 0:
            ia += 1
            if ia == len(a.atoms):
                break
            ra = a.atoms[ia][1]
        if rb == 0:
            ib += 1
            if ib == len(b.atoms):
                break
            rb = b.atoms[ib][1]
    return total


def moment_distance(a: DiscreteRV, b: DiscreteRV, k: int) -> RootValue:
    """``Mom_k(a, b)``: Euclidean norm of the first-``k`` raw-moment differences."""
    ma, mb = moment_vector(a, k), moment_vector(b, k)
    return RootValue.of(sum((x - y) ** 2 for x, y in zip(ma, mb)))


def identical_by_moments(a: DiscreteRV, b: DiscreteRV) -> bool:
    """Distribution identity via the first ``2k-1`` raw moments, ``k`` the larger support size.

    Two random variables on at most ``k`` points each are equal in law iff
    these moments agree (the transposed Vandermonde system is invertible).
    """
    k = max(a.support_size, b.support_size)
    return moment_vector(a, 2 * k - 1) == moment_vector(b, 2 * k - 1)


def sum_independent(a: DiscreteRV, b: DiscreteRV) -> DiscreteRV:
    """Law of ``A + B`` for independent ``A`` and ``B``."""
    acc: dict = defaultdict(lambda: Fraction(0))
    for va, pa in a.atoms:
        for vb, pb in b.atoms:
            acc[va + vb] += pa * pb
    return DiscreteRV(acc)
