"""Max-Sparsity-Gap search.

Two polynomials of different sparsity can induce exactly the same output
distribution; the largest such sparsity for a given ``s`` is the sharp
threshold for constant-sample testing.  Deciding it in general needs a
first-order-theory oracle, which is not implemented.  Instead:

* a structured shortlist (``q = p`` and sums of variable-disjoint decision
  trees against sums of plain variables), then
* an exhaustive search over sparsity patterns with coefficients on a
  finite rational grid.

Grid candidates are matched by hashing their output moments modulo two
primes (equal laws always collide), and every hit is certified with exact
rational moments before it is returned.  Found witnesses are therefore
sound; a miss only means nothing exists on the searched grid.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache, reduce

import numpy as np

from .core import BudgetExceeded, FiniteDistribution, MultilinearPolynomial, format_number
from .exactdist import identical_by_moments, moment_vector, output_distribution

__all__ = [
    "phi_bound",
    "output_count_bounds",
    "enumerate_sparsity_patterns",
    "count_sparsity_patterns",
    "canonical_pattern",
    "decision_tree_polynomial",
    "disjoint_sum",
    "GridSpec",
    "MsgWitness",
    "certify_witness",
    "find_msg_witness",
    "compute_msg",
]


def phi_bound(d: int, s: int, ell: int) -> int:
    """``2^(2 d^2 (ell^(ds) + 3))``, exact."""
    if min(d, s, ell) < 1:
        raise ValueError("arguments must be >= 1")
    return 1 << (2 * d * d * (ell ** (d * s) + 3))


def output_count_bounds(d: int, sparsity: int, ell: int) -> tuple:
    """``(ell^(d * sparsity), log2(sparsity) / (2 d^2) - 3)``.

    The first entry caps the number of distinct values of a polynomial with
    that many terms; the second is the lower bound on the number of values
    of a polynomial that is far from being that sparse.
    """
    return ell ** (d * sparsity), math.log2(sparsity) / (2 * d * d) - 3


# ---------------------------------------------------------------------------
# sparsity patterns


def _monomials(d: int, nvars: int) -> list:
    out = []
    for j in range(d + 1):
        out.extend(itertools.combinations(range(1, nvars + 1), j))
    return out


def count_sparsity_patterns(d: int, r: int) -> int:
    """Raw number of ``(d, r)`` patterns: ``C(N, r)`` with ``N`` monomials of degree ``<= d`` in ``dr`` variables."""
    n = sum(math.comb(d * r, j) for j in range(d + 1))
    return math.comb(n, r)


_PERM_CAP = 5040


def canonical_pattern(pattern) -> tuple:
    """A representative of the pattern's class under variable renaming.

    Variables are split by an iterated signature refinement and permuted
    only within classes; the lexicographically least relabelled form wins.
    When the classes admit more than a few thousand permutations only the
    first ones are tried, so the result is always a valid relabelling but
    may fail to merge some equivalent patterns.
    """
    pattern = [tuple(m) for m in pattern]
    variables = sorted({i for m in pattern for i in m})
    sig = {v: () for v in variables}
    for _ in range(3):
        sig = {
            v: (sig[v], tuple(sorted(tuple(sorted(sig[u] for u in m if u != v)) for m in pattern if v in m)))
            for v in variables
        }
    ranks = {s: j for j, s in enumerate(sorted(set(sig.values())))}
    classes: dict = {}
    for v in variables:
        classes.setdefault(ranks[sig[v]], []).append(v)
    groups = [classes[k] for k in sorted(classes)]
    best = None
    for perm in itertools.islice(_lazy_product(groups), _PERM_CAP):
        order = [v for g in perm for v in g]
        rename = {v: j + 1 for j, v in enumerate(order)}
        form = tuple(sorted(tuple(sorted(rename[i] for i in m)) for m in pattern))
        if best is None or form < best:
            best = form
    return best if best is not None else tuple(sorted(pattern))


def _lazy_product(groups):
    # itertools.product would materialise every permutation of each group
    if not groups:
        yield ()
        return
    for head in itertools.permutations(groups[0]):
        for tail in _lazy_product(groups[1:]):
            yield (head,) + tail


@lru_cache(maxsize=64)
def _canonical_patterns(d: int, r: int) -> tuple:
    seen = set()
    out = []
    for combo in itertools.combinations(_monomials(d, d * r), r):
        active = {i for m in combo for i in m}
        if active != set(range(1, len(active) + 1)):
            continue  # some renaming of it has active variables 1..k
        form = canonical_pattern(combo)
        if form not in seen:
            seen.add(form)
            out.append(form)
    return tuple(sorted(out))


def enumerate_sparsity_patterns(d: int, r: int, cap: int = 10**6, canonical: bool = True):
    """Iterate over ``(d, r)`` sparsity patterns (tuples of ``r`` distinct monomials).

    Raises
    ------
    BudgetExceeded
        If the raw pattern count exceeds ``cap``; the count is attached.
    """
    total = count_sparsity_patterns(d, r)
    if total > cap:
        raise BudgetExceeded(
            f"{total} raw ({d},{r}) sparsity patterns exceed the cap {cap}", required=total, owner="msg"
        )
    if canonical:
        yield from _canonical_patterns(d, r)
    else:
        yield from itertools.combinations(_monomials(d, d * r), r)


# ---------------------------------------------------------------------------
# structured families


def decision_tree_polynomial(d: int, leaf_values=None) -> MultilinearPolynomial:
    """Multilinear expansion of a complete depth-``d`` decision tree over +-1 inputs.

    Internal nodes are numbered in heap order (root 1); node ``v`` queries
    ``x_v`` and moves to ``2v`` on ``+1`` and to ``2v+1`` on ``-1``.  Leaves
    are listed left to right in that order; the default alternates
    ``+1, -1`` so every bottom node simply outputs its own variable.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    n_leaves = 2**d
    if leaf_values is None:
        leaf_values = [1, -1] * (n_leaves // 2)
    if len(leaf_values) != n_leaves:
        raise ValueError(f"expected {n_leaves} leaf values, got {len(leaf_values)}")
    half = Fraction(1, 2)

    def build(v: int, depth: int) -> dict:
        if depth == d:
            return {(): Fraction(leaf_values[v - n_leaves])}
        plus, minus = build(2 * v, depth + 1), build(2 * v + 1, depth + 1)
        out: dict = {}
        for mono, c in plus.items():  # (1 + x_v)/2 * plus
            out[mono] = out.get(mono, 0) + half * c
            out[(v,) + mono] = out.get((v,) + mono, 0) + half * c
        for mono, c in minus.items():  # (1 - x_v)/2 * minus
            out[mono] = out.get(mono, 0) + half * c
            out[(v,) + mono] = out.get((v,) + mono, 0) - half * c
        return out

    return MultilinearPolynomial(build(1, 0), d)


def disjoint_sum(polys, d: int | None = None) -> MultilinearPolynomial:
    """Sum of the given polynomials after shifting them onto disjoint variables."""
    total, offset = {}, 0
    deg = 0
    for p in polys:
        c = p.compact()
        for m, v in c.rename(offset=offset).items():
            total[m] = v
        offset += len(c.variables)
        deg = max(deg, p.degree)
    return MultilinearPolynomial(total, deg if d is None else d)


# ---------------------------------------------------------------------------
# witnesses


@dataclass(frozen=True)
class GridSpec:
    """Coefficients ``+-k / denominator`` for ``k = 1..max_numerator``."""

    denominator: int = 4
    max_numerator: int = 8

    def numerators(self) -> np.ndarray:
        ks = np.arange(1, self.max_numerator + 1, dtype=np.int64)
        return np.concatenate([-ks[::-1], ks])

    def to_dict(self) -> dict:
        return {"denominator": self.denominator, "max_numerator": self.max_numerator}


@dataclass
class MsgWitness:
    """``p`` (sparsity s) and ``q`` (sparsity t) with identical exact output laws."""

    p: MultilinearPolynomial
    q: MultilinearPolynomial
    dist: FiniteDistribution
    certificate: list = field(default_factory=list)
    source: str = ""

    @property
    def s(self) -> int:
        return self.p.sparsity

    @property
    def t(self) -> int:
        return self.q.sparsity

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "t": self.t,
            "p": self.p.to_text(),
            "q": self.q.to_text(),
            "distribution": self.dist.to_text(),
            "matched_moments": [format_number(m) for m in self.certificate],
            "source": self.source,
        }


def certify_witness(p: MultilinearPolynomial, q: MultilinearPolynomial, dist: FiniteDistribution, source=""):
    """Return a certified :class:`MsgWitness`, or ``None`` if the laws differ."""
    a, b = output_distribution(p, dist), output_distribution(q, dist)
    if not identical_by_moments(a, b):
        return None
    k = max(a.support_size, b.support_size)
    return MsgWitness(p, q, dist, moment_vector(a, 2 * k - 1), source)


def _shortlist(dist: FiniteDistribution, d: int, s: int, t: int):
    """Structured candidates in a fixed order."""
    plain = disjoint_sum([MultilinearPolynomial({(1,): Fraction(1)})] * s, d)
    if t == s:
        yield plain, plain, "shortlist:identity"
    trees = {e: decision_tree_polynomial(e) for e in range(1, d + 1)}
    for depths in itertools.combinations_with_replacement(range(d, 0, -1), s):
        if sum(4 ** (e - 1) for e in depths) == t and any(e > 1 for e in depths):
            yield plain, disjoint_sum([trees[e] for e in depths], d), f"shortlist:tree-sum{list(depths)}"


_PRIMES = (2147483647, 1000000007)
_HASH_POWERS = 6


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


class _PatternEvaluator:
    """Integer monomial table of one pattern over ``support^k`` plus point weights."""

    def __init__(self, pattern, dist: FiniteDistribution, d: int):
        self.pattern = pattern
        variables = sorted({i for m in pattern for i in m})
        self.k = len(variables)
        col = {v: j for j, v in enumerate(variables)}
        L = reduce(_lcm, (v.denominator for v in dist.values), 1)
        scaled = np.array([int(v * L) for v in dist.values], dtype=np.int64)
        ell = dist.ell
        idx = np.array(list(itertools.product(range(ell), repeat=self.k)), dtype=np.int64).reshape(ell**self.k, self.k)
        xs = scaled[idx]
        table = np.empty((idx.shape[0], len(pattern)), dtype=np.int64)
        for j, m in enumerate(pattern):
            term = np.full(idx.shape[0], L ** (d - len(m)), dtype=np.int64)
            for i in m:
                term = term * xs[:, col[i]]
            table[:, j] = term
        self.table = table
        pden = reduce(_lcm, (a.denominator for a in dist.probs), 1)
        pnum = np.array([int(a * pden) for a in dist.probs], dtype=object)
        w = np.ones(idx.shape[0], dtype=object)
        for j in range(self.k):
            w = w * pnum[idx[:, j]]
        self.weights = [np.array([int(x) % P for x in w], dtype=np.int64) for P in _PRIMES]
        self.inv_den = [pow(pden**self.k, -1, P) for P in _PRIMES]

    @property
    def points(self) -> int:
        return self.table.shape[0]

    def hashes(self, coeffs: np.ndarray) -> np.ndarray:
        """64-bit keys of the output laws of ``coeffs @ monomials`` (one row per coefficient vector)."""
        ys = coeffs @ self.table.T
        keys = []
        for P, w, inv in zip(_PRIMES, self.weights, self.inv_den):
            base = ys % P
            pw = np.ones_like(base)
            acc = np.zeros(coeffs.shape[0], dtype=np.int64)
            for j in range(_HASH_POWERS):
                pw = (pw * base) % P
                mom = ((pw * w) % P).sum(axis=1) % P
                mom = (mom * inv) % P
                acc = (acc * 1000003 + mom) % P
            keys.append(acc)
        return (keys[0] << 32) | keys[1]


def _grid(r: int, grid: GridSpec) -> np.ndarray:
    vals = grid.numerators()
    return np.array(list(itertools.product(vals, repeat=r)), dtype=np.int64).reshape(-1, r)


def _grid_cost(d: int, r: int, dist: FiniteDistribution, grid: GridSpec, pattern_cap: int, budget: float) -> tuple:
    g = len(grid.numerators()) ** r
    if g > budget:
        return None, g
    patterns = list(enumerate_sparsity_patterns(d, r, pattern_cap))
    cost = sum(g * dist.ell ** len({i for m in pat for i in m}) for pat in patterns)
    return patterns, cost


def _poly(pattern, coeffs, grid: GridSpec, d: int) -> MultilinearPolynomial:
    return MultilinearPolynomial({m: Fraction(int(c), grid.denominator) for m, c in zip(pattern, coeffs)}, d)


def find_msg_witness(
    dist: FiniteDistribution,
    d: int,
    s: int,
    t: int,
    grid: GridSpec | None = None,
    *,
    budget: float = 5e7,
    pattern_cap: int = 10**6,
    chunk: int = 8192,
    shortlist: bool = True,
):
    """Search for ``p`` (sparsity ``s``) and ``q`` (sparsity ``t``) with identical output laws.

    The shortlist is tried first, then every canonical pattern pair with
    grid coefficients.  Returns a certified :class:`MsgWitness`, or ``None``
    when the whole declared search space was covered without a hit.

    Raises
    ------
    BudgetExceeded
        If the grid search would evaluate more than ``budget`` support
        points; the outcome is then inconclusive, not a non-existence proof.
    """
    if min(d, s, t) < 1:
        raise ValueError("d, s, t must be >= 1")
    for p, q, src in _shortlist(dist, d, s, t) if shortlist else ():
        w = certify_witness(p, q, dist, src)
        if w is not None:
            return w

    grid = grid or GridSpec()
    p_patterns, p_cost = _grid_cost(d, s, dist, grid, pattern_cap, budget)
    q_patterns, q_cost = _grid_cost(d, t, dist, grid, pattern_cap, budget)
    if p_cost + q_cost > budget:
        raise BudgetExceeded(
            f"grid search for s={s}, t={t} needs at least {p_cost + q_cost} point evaluations (budget {int(budget)})",
            required=p_cost + q_cost,
            owner="msg",
        )

    p_index: dict = {}
    p_grid = _grid(s, grid)
    for pat in p_patterns:
        ev = _PatternEvaluator(pat, dist, d)
        for start in range(0, len(p_grid), chunk):
            block = p_grid[start : start + chunk]
            for key, row in zip(ev.hashes(block).tolist(), block):
                p_index.setdefault(key, []).append((pat, row))
    p_keys = np.fromiter(p_index.keys(), dtype=np.int64, count=len(p_index))

    q_grid = _grid(t, grid)
    for pat in q_patterns:
        ev = _PatternEvaluator(pat, dist, d)
        for start in range(0, len(q_grid), chunk):
            block = q_grid[start : start + chunk]
            keys = ev.hashes(block)
            for j in np.nonzero(np.isin(keys, p_keys))[0]:
                q = _poly(pat, block[j], grid, d)
                for p_pat, p_row in p_index[int(keys[j])]:
                    w = certify_witness(_poly(p_pat, p_row, grid, d), q, dist, "grid")
                    if w is not None:
                        return w
    return None


def compute_msg(
    dist: FiniteDistribution,
    d: int,
    s: int,
    budget: float = 5e7,
    *,
    t_cap: int = 16,
    grid: GridSpec | None = None,
) -> dict:
    """Descend ``t`` from ``min(Phi, t_cap)`` to ``s`` and stop at the first witness.

    ``certified`` is true only when the descent started at ``Phi`` and
    every larger ``t`` was ruled out by an exhaustive search, which never
    happens at practical caps: a grid miss is not a proof.
    """
    t0 = time.perf_counter()
    phi = phi_bound(d, s, dist.ell)
    top = min(phi, max(t_cap, s))
    trace, witness, best = [], None, None
    all_exhaustive = top == phi
    for t in range(top, s - 1, -1):
        try:
            w = find_msg_witness(dist, d, s, t, grid, budget=budget)
            outcome = "witness" if w is not None else "none-on-grid"
        except BudgetExceeded as exc:
            w, outcome = None, f"inconclusive: {exc}"
            all_exhaustive = False
        trace.append({"t": t, "outcome": outcome})
        if w is not None:
            witness, best = w, t
            break
        # a grid miss is never a proof of non-existence
        all_exhaustive = False
    return {
        "best_t_with_witness": best,
        "phi_bound": phi,
        "t_start": top,
        "certified": bool(all_exhaustive and best is not None),
        "witness": witness.to_dict() if witness else None,
        "trace": trace,
        "wall_time": time.perf_counter() - t0,
    }
