"""Base distributions and sparse multilinear polynomials.

A polynomial is stored as a mapping from monomials (strictly increasing
tuples of variable indices) to nonzero coefficients.  Coefficients are
either all :class:`fractions.Fraction` (the exact, authoritative form) or
all ``float`` (the sampling form).  Variables are global 1-based indices;
polynomials never carry an ambient dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence, Union

__all__ = [
    "BudgetExceeded",
    "Number",
    "Monomial",
    "RootValue",
    "parse_number",
    "format_number",
    "monomial",
    "FiniteDistribution",
    "validate_distribution",
    "rademacher",
    "MultilinearPolynomial",
    "coeff_norm",
    "coeff_distance",
    "distance_to_sparsity",
    "best_sparse_approximant",
    "influence",
    "total_influence",
]

Number = Union[Fraction, float, int]
Monomial = tuple


class BudgetExceeded(RuntimeError):
    """A computation needs more work than its configured budget allows.

    ``required`` is the requested amount when it is representable, and
    ``log2_required`` is always set so callers can report astronomically
    large requirements.
    """

    def __init__(self, message: str, *, required=None, log2_required=None, owner: str = ""):
        super().__init__(message)
        self.required = required
        if log2_required is None and required is not None and required > 0:
            log2_required = math.log2(required)
        self.log2_required = log2_required
        self.owner = owner


class RootValue(NamedTuple):
    """A nonnegative real known through its exact square.

    ``squared`` is exact whenever the inputs were exact; ``value`` is the
    float square root.
    """

    squared: Number
    value: float

    def __float__(self) -> float:
        return self.value

    @classmethod
    def of(cls, squared: Number) -> "RootValue":
        return cls(squared, math.sqrt(squared))


def parse_number(text, *, exact: bool = True) -> Number:
    """Parse ``"a/b"``, an integer, or a decimal string.

    Decimal strings become the exact rational they denote unless
    ``exact`` is false.
    """
    if isinstance(text, (Fraction, int)) and not isinstance(text, bool):
        return Fraction(text)
    if isinstance(text, float):
        return Fraction(text) if exact else text
    s = str(text).strip()
    if not s:
        raise ValueError("empty number")
    if not exact:
        if "/" in s:
            return float(Fraction(s))
        return float(s)
    return Fraction(s)


def format_number(x: Number) -> str:
    """Inverse of :func:`parse_number`; exact for rationals, shortest repr for floats."""
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def monomial(indices: Iterable[int]) -> Monomial:
    """Return the canonical (sorted, duplicate-free) monomial for ``indices``."""
    idx = tuple(sorted(int(i) for i in indices))
    if len(set(idx)) != len(idx):
        raise ValueError(f"repeated variable in multilinear monomial {idx}")
    if idx and idx[0] < 0:
        raise ValueError("variable indices must be nonnegative")
    return idx


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class FiniteDistribution:
    """A finitely supported, mean-0, variance-1 real random variable.

    Use :func:`validate_distribution` to build one; the constructor only
    stores sorted atoms.
    """

    atoms: tuple  # ((value, prob), ...) sorted by value, exact rationals
    name: str = ""

    @property
    def values(self) -> tuple:
        return tuple(v for v, _ in self.atoms)

    @property
    def probs(self) -> tuple:
        return tuple(a for _, a in self.atoms)

    @property
    def lam(self) -> Fraction:
        """Minimum atom probability."""
        return min(self.probs)

    @property
    def M(self) -> Fraction:
        """Maximum absolute support value."""
        return max(abs(v) for v in self.values)

    @property
    def ell(self) -> int:
        """Number of atoms."""
        return len(self.atoms)

    def moment(self, k: int) -> Fraction:
        return sum((a * v**k for v, a in self.atoms), Fraction(0))

    def to_text(self) -> str:
        return "".join(f"{format_number(v)} {format_number(a)}\n" for v, a in self.atoms)

    @classmethod
    def from_text(cls, text: str, name: str = "") -> "FiniteDistribution":
        atoms = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"expected 'value prob', got {line!r}")
            atoms.append((parse_number(parts[0]), parse_number(parts[1])))
        return validate_distribution(atoms, name=name)

    def label(self) -> str:
        return self.name or ",".join(f"{format_number(v)}:{format_number(a)}" for v, a in self.atoms)


def validate_distribution(atoms: Iterable, name: str = "") -> FiniteDistribution:
    """Check and build a :class:`FiniteDistribution`.

    Parameters
    ----------
    atoms : iterable of (value, prob)
        Exact rationals (ints, Fractions or "a/b" strings).

    Raises
    ------
    ValueError
        On duplicate values, nonpositive probabilities, probabilities not
        summing to one, nonzero mean, or variance other than one.
    """
    pairs = [(parse_number(v), parse_number(a)) for v, a in atoms]
    if not pairs:
        raise ValueError("empty distribution")
    values = [v for v, _ in pairs]
    if len(set(values)) != len(values):
        raise ValueError("duplicate values")
    if any(a <= 0 or a > 1 for _, a in pairs):
        raise ValueError("probabilities must lie in (0, 1]")
    if sum(a for _, a in pairs) != 1:
        raise ValueError("probabilities not summing to 1")
    if sum(a * v for v, a in pairs) != 0:
        raise ValueError("nonzero mean")
    if sum(a * v * v for v, a in pairs) != 1:
        raise ValueError("variance != 1")
    dist = FiniteDistribution(tuple(sorted(pairs)), name)
    assert dist.M >= 1
    return dist


def rademacher() -> FiniteDistribution:
    return validate_distribution([(-1, Fraction(1, 2)), (1, Fraction(1, 2))], name="rademacher")


# ---------------------------------------------------------------------------
# polynomials


def _coerce_coeffs(values: Sequence) -> tuple[list, bool]:
    if all(isinstance(c, (Fraction, int)) and not isinstance(c, bool) for c in values):
        return [Fraction(c) for c in values], True
    return [float(c) for c in values], False


class MultilinearPolynomial:
    """Sparse multilinear polynomial ``sum_S c_S prod_{i in S} x_i``.

    Parameters
    ----------
    terms : mapping
        Monomial (any iterable of variable indices) to coefficient.  Zero
        coefficients are dropped and repeated monomials are summed.
    degree : int, optional
        Degree bound d.  Defaults to the largest monomial size.
    """

    __slots__ = ("_terms", "_degree", "_exact", "_hash")

    def __init__(self, terms: Mapping | Iterable = (), degree: int | None = None):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict = {}
        for mono, c in items:
            key = monomial(mono)
            acc[key] = acc.get(key, 0) + c
        keys = list(acc)
        coeffs, exact = _coerce_coeffs([acc[k] for k in keys])
        self._terms = {k: c for k, c in sorted(zip(keys, coeffs)) if c != 0}
        self._exact = exact
        top = max((len(k) for k in self._terms), default=0)
        if degree is None:
            degree = top
        if top > degree:
            raise ValueError(f"monomial of size {top} exceeds degree bound {degree}")
        self._degree = int(degree)
        self._hash = None

    # -- basic views -------------------------------------------------------
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    @property
    def degree(self) -> int:
        return self._degree

    @property
    def is_exact(self) -> bool:
        """True when the exact rational coefficients are authoritative."""
        return self._exact

    @property
    def sparsity(self) -> int:
        return len(self._terms)

    @property
    def variables(self) -> tuple:
        return tuple(sorted({i for m in self._terms for i in m}))

    def coefficient(self, mono: Iterable[int]) -> Number:
        return self._terms.get(monomial(mono), Fraction(0) if self._exact else 0.0)

    def items(self):
        return self._terms.items()

    def __iter__(self) -> Iterator:
        return iter(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __repr__(self) -> str:
        return f"MultilinearPolynomial({self.to_expression()!r}, degree={self._degree})"

    def to_expression(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for mono, c in self._terms.items():
            name = "*".join(f"x{i}" for i in mono)
            parts.append(f"{format_number(c)}" + (f"*{name}" if name else ""))
        return " + ".join(parts)

    # -- arithmetic --------------------------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, MultilinearPolynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(tuple(self._terms.items()))
        return self._hash

    def __add__(self, other: "MultilinearPolynomial") -> "MultilinearPolynomial":
        acc = dict(self._terms)
        for m, c in other._terms.items():
            acc[m] = acc.get(m, 0) + c
        return MultilinearPolynomial(acc, max(self._degree, other._degree))

    def __neg__(self) -> "MultilinearPolynomial":
        return self.scale(-1)

    def __sub__(self, other: "MultilinearPolynomial") -> "MultilinearPolynomial":
        return self + (-other)

    def __mul__(self, c) -> "MultilinearPolynomial":
        if isinstance(c, MultilinearPolynomial):
            return self.product(c)
        return self.scale(c)

    __rmul__ = __mul__

    def __truediv__(self, c) -> "MultilinearPolynomial":
        if isinstance(c, (int, Fraction)) and self._exact:
            return self.scale(Fraction(1) / Fraction(c))
        return self.scale(1.0 / float(c))

    def scale(self, c) -> "MultilinearPolynomial":
        if isinstance(c, float) and self._exact:
            return MultilinearPolynomial({m: float(v) * c for m, v in self._terms.items()}, self._degree)
        return MultilinearPolynomial({m: v * c for m, v in self._terms.items()}, self._degree)

    def product(self, other: "MultilinearPolynomial") -> "MultilinearPolynomial":
        """Product of polynomials on disjoint variable sets."""
        if set(self.variables) & set(other.variables):
            raise ValueError("product would not be multilinear (shared variables)")
        acc = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                acc[m1 + m2] = c1 * c2
        return MultilinearPolynomial(acc, self._degree + other._degree)

    def to_float(self) -> "MultilinearPolynomial":
        return MultilinearPolynomial({m: float(c) for m, c in self._terms.items()}, self._degree)

    def with_degree(self, d: int) -> "MultilinearPolynomial":
        return MultilinearPolynomial(self._terms, d)

    def rename(self, mapping: Mapping[int, int] | None = None, *, offset: int = 0) -> "MultilinearPolynomial":
        """Rename variables by ``mapping`` (missing keys map to themselves) then shift by ``offset``."""
        mapping = mapping or {}
        return MultilinearPolynomial(
            {tuple(mapping.get(i, i) + offset for i in m): c for m, c in self._terms.items()},
            self._degree,
        )

    def compact(self) -> "MultilinearPolynomial":
        """Relabel the active variables as 1..k preserving their order."""
        return self.rename({v: j + 1 for j, v in enumerate(self.variables)})

    # -- evaluation --------------------------------------------------------
    def evaluate(self, x: Mapping[int, Number]) -> Number:
        total = Fraction(0) if self._exact else 0.0
        for m, c in self._terms.items():
            term = c
            for i in m:
                term = term * x[i]
            total += term
        return total

    def evaluate_array(self, xs, variables: Sequence[int] | None = None):
        """Evaluate on the rows of a float array whose columns are ``variables``."""
        import numpy as np

        xs = np.asarray(xs, dtype=float)
        variables = tuple(self.variables if variables is None else variables)
        col = {v: j for j, v in enumerate(variables)}
        out = np.zeros(xs.shape[0])
        for m, c in self._terms.items():
            term = np.full(xs.shape[0], float(c))
            for i in m:
                term = term * xs[:, col[i]]
            out += term
        return out

    # -- text format -------------------------------------------------------
    def to_text(self) -> str:
        """One term per line, ``coeff: i1 i2 ...``; empty index list is the constant."""
        head = "" if self._exact else "#! float\n"
        lines = [f"# degree {self._degree}\n"]
        for m, c in self._terms.items():
            idx = " ".join(str(i) for i in m)
            lines.append(f"{format_number(c)}:{(' ' + idx) if idx else ''}\n")
        return head + "".join(lines)

    @classmethod
    def from_text(cls, text: str, degree: int | None = None) -> "MultilinearPolynomial":
        exact = True
        declared = None
        terms = []
        for raw in text.splitlines():
            stripped = raw.strip()
            if stripped.startswith("#!") and "float" in stripped:
                exact = False
                continue
            if stripped.startswith("# degree"):
                declared = int(stripped.split()[2])
                continue
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise ValueError(f"expected 'coeff: i1 i2 ...', got {line!r}")
            head, tail = line.split(":", 1)
            c = parse_number(head, exact=exact)
            idx = [int(t) for t in tail.split()]
            terms.append((idx, c))
        if degree is None:
            degree = declared
        return cls(terms, degree)


def _sq(c: Number) -> Number:
    return c * c


def coeff_norm(p: MultilinearPolynomial) -> RootValue:
    """Coefficient norm ``(sum_S p(S)^2)^(1/2)`` with its exact square."""
    sq = sum((_sq(c) for c in p._terms.values()), Fraction(0) if p.is_exact else 0.0)
    return RootValue.of(sq)


def coeff_distance(p: MultilinearPolynomial, q: MultilinearPolynomial) -> RootValue:
    """``||p - q||`` (absolute; it is the relative distance whenever ``||p|| = 1``)."""
    return coeff_norm(p - q)


def _largest_squares(p: MultilinearPolynomial, s: int) -> list:
    # ties broken lexicographically on monomials; the sum is tie-independent
    ranked = sorted(p._terms.items(), key=lambda mc: (-abs(mc[1]), mc[0]))
    return ranked[:s]


def distance_to_sparsity(p: MultilinearPolynomial, s: int) -> RootValue:
    """Relative coefficient distance from ``p`` to the nearest ``s``-sparse polynomial.

    Returns ``(1 - top_s / ||p||^2)^(1/2)`` where ``top_s`` is the sum of the
    ``s`` largest squared coefficients.
    """
    if p.sparsity == 0:
        raise ValueError("undefined distance for the zero polynomial")
    if s < 0:
        raise ValueError("s must be nonnegative")
    total = coeff_norm(p).squared
    top = sum((_sq(c) for _, c in _largest_squares(p, s)), Fraction(0) if p.is_exact else 0.0)
    sq = 1 - top / total
    if not p.is_exact:
        sq = max(sq, 0.0)
    return RootValue.of(sq)


def best_sparse_approximant(p: MultilinearPolynomial, s: int) -> MultilinearPolynomial:
    return MultilinearPolynomial(dict(_largest_squares(p, s)), p.degree)


def influence(p: MultilinearPolynomial, i: int) -> Number:
    """``Inf_i[p] = sum_{S containing i} p(S)^2``."""
    zero = Fraction(0) if p.is_exact else 0.0
    return sum((_sq(c) for m, c in p._terms.items() if i in m), zero)


def total_influence(p: MultilinearPolynomial) -> Number:
    zero = Fraction(0) if p.is_exact else 0.0
    return sum((len(m) * _sq(c) for m, c in p._terms.items()), zero)
