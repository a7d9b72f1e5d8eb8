"""Coefficient nets of sparse unit-norm polynomials, moment nets of their
output laws, and the Wasserstein-gap estimator.

Net construction
----------------
For a sparsity pattern with ``r`` monomials the unit-norm coefficient
vectors form the sphere ``S^{r-1}``.  It is covered by projecting a grid on
the surface of the cube ``[-1, 1]^r`` radially onto the sphere: the grid
points are the integer vectors ``g`` in ``[-n, n]^r`` with ``max |g_i| = n``
and all entries nonzero (vectors with zero entries belong to smaller
patterns).  Projection onto the unit ball is 1-Lipschitz outside the ball,
so the covering radius is at most ``sqrt(r - 1) / (2n)``.  A member is
``g / ||g||``; its direction ``g`` and ``||g||^2`` are kept exactly.

``P`` uses every pattern with at most ``s`` monomials.  ``P(eps)`` would
range over ``Upsilon``-sparse polynomials in ``d * Upsilon`` variables,
which is out of reach; it is truncated to patterns with ``T < r <= r_cap``
monomials over at most ``var_cap`` variables.  A grid point that is not
``eps``-far from ``T``-sparse is repaired by rescaling its ``T`` largest
coefficients to squared mass ``1 - eps^2`` and the rest to ``eps^2``; the
repaired point is kept only if it moved by at most ``zeta / 2``.

The moment-net constant
-----------------------
``xi_constant`` assembles an explicit constant from the chain: the first
two moments contribute ``1`` and ``3``; for ``3 <= l <= k`` the ``l``-th
moment difference is at most ``eta * B_l`` with

    B_l^2 = sum_{i,j < l} sqrt(G(2l - 2 - i - j) * G(i + j)),
    G(0) = 1, G(1) = 4, G(c) = (2c - 1)^{dc} lambda^{d - dc} 4^c,

``G(c)`` bounding ``E[q^{2c}]`` by hypercontractivity with ``E[q^2] <= 4``.
Then ``xi = sqrt(1 + 9 + sum_l B_l^2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .coarse import upsilon
from .core import (
    BudgetExceeded,
    FiniteDistribution,
    MultilinearPolynomial,
    coeff_norm,
    distance_to_sparsity,
)
from .exactdist import DiscreteRV, moment_distance, moment_vector, output_distribution, wasserstein1
from .msg import _canonical_patterns, count_sparsity_patterns

__all__ = [
    "DEFAULT_NET_BUDGET",
    "GapNotFound",
    "sphere_grid",
    "grid_resolution",
    "NetMember",
    "NetBlock",
    "PolyNet",
    "RvMember",
    "RvNet",
    "construct_poly_nets",
    "xi_constant",
    "construct_rv_nets",
    "w1_to_rv",
    "GapEstimate",
    "estimate_wasserstein_gap",
    "wasserstein_gap_upper_bound",
    "kong_valiant_check",
    "keep_and_rescale",
    "perturbation_check",
    "save_net",
    "load_poly_net",
]

DEFAULT_NET_BUDGET = 10**6


class GapNotFound(RuntimeError):
    """The doubling loop hit its cap; the gap is probably zero (``T`` below the sparsity gap)."""

    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


# ---------------------------------------------------------------------------
# sphere grids


def grid_resolution(r: int, radius: float) -> int:
    """Smallest ``n`` whose projected cube-surface grid covers ``S^{r-1}`` within ``radius``."""
    if r <= 1:
        return 1
    return max(1, math.ceil(math.sqrt(r - 1) / (2 * radius)))


def sphere_grid_size(r: int, n: int) -> int:
    return (2 * n) ** r - (2 * n - 2) ** r


def sphere_grid(r: int, n: int) -> np.ndarray:
    """Integer vectors in ``[-n, n]^r`` with no zero entry and ``max |g_i| = n``."""
    vals = np.concatenate([np.arange(-n, 0), np.arange(1, n + 1)]).astype(np.int64)
    if r == 0:
        return np.zeros((1, 0), dtype=np.int64)
    mesh = np.stack(np.meshgrid(*([vals] * r), indexing="ij"), axis=-1).reshape(-1, r)
    return mesh[np.abs(mesh).max(axis=1) == n]


# ---------------------------------------------------------------------------
# polynomial nets


def _is_square(x: int) -> int | None:
    root = math.isqrt(x)
    return root if root * root == x else None


@dataclass
class NetMember:
    """A unit-norm net polynomial.

    ``direction`` is the exact rational vector ``g / n`` before
    normalisation and ``norm_sq`` its squared norm.  ``poly`` is exact when
    the normalisation is rational, otherwise a float polynomial; repaired
    members have no exact direction.
    """

    poly: MultilinearPolynomial
    direction: MultilinearPolynomial | None
    norm_sq: Fraction | None
    repaired: bool = False

    def unit_norm_exact(self) -> bool:
        if self.direction is None:
            return False
        return coeff_norm(self.direction).squared / self.norm_sq == 1


@dataclass
class NetBlock:
    """All members of one pattern, as rows of coefficient matrices."""

    pattern: tuple
    n: int
    directions: np.ndarray  # int rows g; meaningless for repaired rows
    coeffs: np.ndarray  # float unit rows
    repaired: np.ndarray  # bool

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    def member(self, i: int, d: int) -> NetMember:
        if self.repaired[i]:
            poly = MultilinearPolynomial({m: float(c) for m, c in zip(self.pattern, self.coeffs[i])}, d)
            return NetMember(poly, None, None, True)
        g = [int(v) for v in self.directions[i]]
        sq = sum(v * v for v in g)
        direction = MultilinearPolynomial({m: Fraction(v, self.n) for m, v in zip(self.pattern, g)}, d)
        norm_sq = Fraction(sq, self.n**2)
        root = _is_square(sq)
        if root is not None:
            poly = MultilinearPolynomial({m: Fraction(v, root) for m, v in zip(self.pattern, g)}, d)
        else:
            poly = MultilinearPolynomial({m: float(c) for m, c in zip(self.pattern, self.coeffs[i])}, d)
        return NetMember(poly, direction, norm_sq, False)


@dataclass
class PolyNet:
    zeta: float
    space: str  # "P" or "P(eps)"
    d: int
    blocks: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return sum(b.size for b in self.blocks)

    def members(self) -> list:
        return [b.member(i, self.d) for b in self.blocks for i in range(b.size)]


def _far_mask(g: np.ndarray, T: int, eps_sq: Fraction) -> np.ndarray:
    """Exact test ``top_T(g^2) <= (1 - eps^2) ||g||^2`` on integer rows."""
    sq = np.sort(g.astype(object) ** 2, axis=1)[:, ::-1]
    top = sq[:, :T].sum(axis=1)
    total = sq.sum(axis=1)
    a, b = eps_sq.numerator, eps_sq.denominator
    return np.array([b * t <= (b - a) * s for t, s in zip(top.tolist(), total.tolist())], dtype=bool)


def _repair(z: np.ndarray, T: int, eps_sq: float) -> tuple[np.ndarray, np.ndarray]:
    """Rescale the top-``T`` block to mass ``1 - eps^2``; returns repaired rows and distances moved."""
    order = np.argsort(-np.abs(z), axis=1, kind="stable")
    top = np.zeros_like(z, dtype=bool)
    np.put_along_axis(top, order[:, :T], True, axis=1)
    share = np.where(top, z * z, 0.0).sum(axis=1)
    alpha = np.sqrt((1 - eps_sq) / share)
    beta = np.sqrt(eps_sq / np.maximum(1 - share, 1e-300))
    fixed = np.where(top, z * alpha[:, None], z * beta[:, None])
    return fixed, np.linalg.norm(fixed - z, axis=1)


def _patterns(d: int, r: int, var_cap: int | None, pattern_cap: int) -> list:
    if count_sparsity_patterns(d, r) > pattern_cap:
        raise BudgetExceeded(
            f"{count_sparsity_patterns(d, r)} raw ({d},{r}) patterns exceed the cap {pattern_cap}",
            required=count_sparsity_patterns(d, r),
            owner="nets",
        )
    pats = _canonical_patterns(d, r)
    if var_cap is not None:
        pats = tuple(p for p in pats if len({i for m in p for i in m}) <= var_cap)
    return list(pats)


def net_sizes(d, s, T, zeta, *, r_cap=None, var_cap=None, pattern_cap=10**6) -> dict:
    """Member counts of both grids before repair, without building them."""
    r_cap = T + 1 if r_cap is None else r_cap
    p_count = sum(
        len(_patterns(d, r, None, pattern_cap)) * sphere_grid_size(r, grid_resolution(r, zeta / 3))
        for r in range(1, s + 1)
    )
    e_count = sum(
        len(_patterns(d, r, var_cap, pattern_cap)) * sphere_grid_size(r, grid_resolution(r, zeta / 5))
        for r in range(T + 1, r_cap + 1)
    )
    return {"P": p_count, "P(eps)": e_count}


def construct_poly_nets(
    dist: FiniteDistribution,
    d: int,
    s: int,
    T: int,
    eps,
    zeta: float,
    *,
    K=1,
    C=1,
    r_cap: int | None = None,
    var_cap: int | None = None,
    budget: int = DEFAULT_NET_BUDGET,
    pattern_cap: int = 10**6,
    spaces=("P", "P(eps)"),
) -> tuple:
    """Coefficient-distance ``zeta``-nets of ``P`` and of the truncated ``P(eps)``.

    Returns ``(net_P, net_Peps)``; an entry is ``None`` when its space is not
    requested.  ``r_cap`` defaults to ``T + 1`` and is further capped by
    ``Upsilon``.

    Raises
    ------
    BudgetExceeded
        If the grids would hold more than ``budget`` points.
    """
    r_cap = T + 1 if r_cap is None else r_cap
    try:
        ups = upsilon(K, s, d, eps, C, dist.M)
        r_cap = min(r_cap, ups)
    except OverflowError:
        ups = None
    sizes = net_sizes(d, s if "P" in spaces else 0, T, zeta, r_cap=r_cap if "P(eps)" in spaces else T,
                      var_cap=var_cap, pattern_cap=pattern_cap)
    total = sizes["P"] + sizes["P(eps)"]
    if total > budget:
        raise BudgetExceeded(f"nets need {total} grid points (budget {budget})", required=total, owner="nets")

    params = {"T": T, "eps": float(eps), "r_cap": r_cap, "var_cap": var_cap, "upsilon": ups}
    net_p = net_e = None
    if "P" in spaces:
        net_p = PolyNet(zeta, "P", d, params={**params, "sizes": sizes})
        for r in range(1, s + 1):
            n = grid_resolution(r, zeta / 3)
            g = sphere_grid(r, n)
            coeffs = g / np.linalg.norm(g, axis=1, keepdims=True)
            for pat in _patterns(d, r, None, pattern_cap):
                net_p.blocks.append(NetBlock(pat, n, g, coeffs, np.zeros(len(g), dtype=bool)))
    if "P(eps)" in spaces:
        net_e = PolyNet(zeta, "P(eps)", d, params={**params, "sizes": sizes})
        eps_sq = Fraction(eps) ** 2
        for r in range(T + 1, r_cap + 1):
            n = grid_resolution(r, zeta / 5)
            g = sphere_grid(r, n)
            z = g / np.linalg.norm(g, axis=1, keepdims=True)
            far = _far_mask(g, T, eps_sq)
            fixed, moved = _repair(z[~far], T, float(eps_sq))
            keep = moved <= zeta / 2
            rows = np.concatenate([z[far], fixed[keep]])
            dirs = np.concatenate([g[far], g[~far][keep]])
            rep = np.concatenate([np.zeros(int(far.sum()), dtype=bool), np.ones(int(keep.sum()), dtype=bool)])
            for pat in _patterns(d, r, var_cap, pattern_cap):
                net_e.blocks.append(NetBlock(pat, n, dirs, rows, rep))
    return net_p, net_e


# ---------------------------------------------------------------------------
# moment nets


def _G(c: int, d: int, lam: float) -> float:
    if c == 0:
        return 1.0
    if c == 1:
        return 4.0
    return (2 * c - 1) ** (d * c) * lam ** (d - d * c) * 4.0**c


def xi_constant(k: int, d: int, dist: FiniteDistribution) -> float:
    """Explicit ``xi_{k,d,X}`` with ``Mom_k(q1, q2) <= xi * ||q1 - q2||`` (see module notes)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    lam = float(dist.lam)
    total = 1.0
    if k >= 2:
        total += 9.0
    for ell in range(3, k + 1):
        b_sq = sum(
            math.sqrt(_G(2 * ell - 2 - i - j, d, lam) * _G(i + j, d, lam)) for i in range(ell) for j in range(ell)
        )
        total += b_sq
    return math.sqrt(total)


@dataclass
class RvMember:
    rv: DiscreteRV
    source: NetMember
    moments: tuple


@dataclass
class RvNet:
    zeta_mom: float
    k: int
    space: str
    members: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.members)

    def moment_matrix(self) -> np.ndarray:
        return np.array([[float(v) for v in m.moments] for m in self.members]).reshape(-1, self.k)


def member_moments(member: NetMember, dist: FiniteDistribution, k: int) -> tuple:
    """``(rv, moments)``: exact when the member is exact, else from the float law."""
    if member.direction is not None:
        rv_u = output_distribution(member.direction, dist)
        mu = moment_vector(rv_u, k)
        if member.poly.is_exact:
            rv = output_distribution(member.poly, dist)
            return rv, tuple(moment_vector(rv, k))
        root = math.sqrt(member.norm_sq)
        return rv_u.map(lambda v: float(v) / root), tuple(float(m) / root**j for j, m in enumerate(mu, start=1))
    rv = output_distribution(member.poly, dist)
    return rv, tuple(moment_vector(rv, k))


def rv_net_from(poly_net: PolyNet, dist: FiniteDistribution, k: int, zeta_mom: float, dedupe: bool = True) -> RvNet:
    net = RvNet(zeta_mom, k, poly_net.space, params={"zeta_coeff": poly_net.zeta, **poly_net.params})
    seen = set()
    for mem in poly_net.members():
        rv, mom = member_moments(mem, dist, k)
        key = rv.atoms
        if dedupe and key in seen:
            continue
        seen.add(key)
        net.members.append(RvMember(rv, mem, mom))
    return net


def construct_rv_nets(
    dist: FiniteDistribution, d: int, s: int, T: int, eps, zeta_mom: float, k: int, **kw
) -> tuple:
    """Moment-distance ``zeta_mom``-nets: polynomial nets at ``zeta_mom / xi`` pushed through the law map.

    Members with identical output laws are merged.  Keyword arguments go
    to :func:`construct_poly_nets`.
    """
    xi = xi_constant(k, d, dist)
    net_p, net_e = construct_poly_nets(dist, d, s, T, eps, zeta_mom / xi, **kw)
    out = []
    for net in (net_p, net_e):
        out.append(None if net is None else rv_net_from(net, dist, k, zeta_mom))
    for net in out:
        if net is not None:
            net.params["xi"] = xi
    return tuple(out)


# ---------------------------------------------------------------------------
# Wasserstein gap


def w1_to_rv(values: np.ndarray, weights: np.ndarray, atoms: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Row-wise ``W1`` between laws ``(values[i], weights)`` and one fixed law ``(atoms, probs)``.

    Uses ``W1 = integral |F - G|``: both laws are merged with opposite-signed
    weights, sorted per row and the running signed mass is integrated.
    """
    m = values.shape[0]
    allv = np.concatenate([values, np.broadcast_to(atoms, (m, atoms.size))], axis=1)
    allw = np.concatenate([np.broadcast_to(weights, values.shape), np.broadcast_to(-probs, (m, probs.size))], axis=1)
    order = np.argsort(allv, axis=1, kind="stable")
    sv = np.take_along_axis(allv, order, axis=1)
    sw = np.take_along_axis(allw, order, axis=1)
    cum = np.cumsum(sw, axis=1)[:, :-1]
    return np.abs(cum * np.diff(sv, axis=1)).sum(axis=1)


def _block_values(block: NetBlock, dist: FiniteDistribution) -> tuple[np.ndarray, np.ndarray]:
    variables = sorted({i for m in block.pattern for i in m})
    col = {v: j for j, v in enumerate(variables)}
    k = len(variables)
    grids = np.meshgrid(*([np.arange(dist.ell)] * k), indexing="ij") if k else []
    idx = np.stack([g.ravel() for g in grids], axis=1) if k else np.zeros((1, 0), dtype=int)
    vals = np.array([float(v) for v in dist.values])[idx]
    probs = np.array([float(a) for a in dist.probs])[idx].prod(axis=1) if k else np.ones(1)
    table = np.ones((idx.shape[0], len(block.pattern)))
    for j, m in enumerate(block.pattern):
        for i in m:
            table[:, j] *= vals[:, col[i]]
    return block.coeffs @ table.T, probs


@dataclass
class GapEstimate:
    c: float
    zeta: float
    iterations: int
    witness_pair: tuple  # (P member, P(eps) member)
    trace: list

    def to_dict(self) -> dict:
        p, q = self.witness_pair
        return {
            "c": self.c,
            "zeta": self.zeta,
            "iterations": self.iterations,
            "p_member": p.poly.to_expression(),
            "eps_member": q.poly.to_expression(),
            "trace": self.trace,
        }


def _min_w1(net_p: PolyNet, net_e: PolyNet, dist: FiniteDistribution) -> tuple:
    p_members = net_p.members()
    p_laws = {}
    for mem in p_members:
        rv = output_distribution(mem.poly.to_float(), dist)
        p_laws.setdefault(rv.atoms, (rv, mem))
    best = (math.inf, None, None)
    for block in net_e.blocks:
        if block.size == 0:
            continue
        vals, w = _block_values(block, dist)
        for rv, mem in p_laws.values():
            a, p = rv.as_arrays()
            dists = w1_to_rv(vals, w, a, p)
            i = int(np.argmin(dists))
            if dists[i] < best[0]:
                best = (float(dists[i]), mem, block.member(i, net_e.d))
    return best


def estimate_wasserstein_gap(
    dist: FiniteDistribution,
    d: int,
    s: int,
    T: int,
    eps,
    *,
    t_max: int = 6,
    **kw,
) -> GapEstimate:
    """Doubling search ``zeta = 2^-t`` until ``4 zeta <= c = min W1`` over the two nets.

    Raises
    ------
    GapNotFound
        When ``t_max`` iterations pass without the exit condition.
    """
    trace = []
    for t in range(1, t_max + 1):
        zeta = 2.0**-t
        net_p, net_e = construct_poly_nets(dist, d, s, T, eps, zeta, **kw)
        c, pm, em = _min_w1(net_p, net_e, dist)
        trace.append({"t": t, "zeta": zeta, "c": c, "sizes": [net_p.size, net_e.size]})
        if pm is not None and 4 * zeta <= c:
            # re-evaluate the winning pair on the exact merge route
            exact_c = float(wasserstein1(output_distribution(pm.poly.to_float(), dist),
                                         output_distribution(em.poly.to_float(), dist)))
            return GapEstimate(exact_c, zeta, t, (pm, em), trace)
    raise GapNotFound(f"no gap certified after {t_max} halvings (min W1 {trace[-1]['c']:.3g})", trace)


def wasserstein_gap_upper_bound(
    dist: FiniteDistribution, d: int, s: int, T: int, eps, candidates, zeta: float = 0.125
) -> float:
    """``min W1`` between the ``P``-net and explicit members of ``P(eps)``.

    Every candidate must have unit norm and be ``eps``-far from ``T``-sparse;
    the result then bounds the true gap from above.
    """
    net_p, _ = construct_poly_nets(dist, d, s, T, eps, zeta, spaces=("P",))
    laws = {output_distribution(m.poly.to_float(), dist).atoms for m in net_p.members()}
    best = math.inf
    for q in candidates:
        if abs(float(coeff_norm(q).squared) - 1) > 1e-12:
            raise ValueError("candidate must have unit coefficient norm")
        if float(distance_to_sparsity(q, T).squared) < float(eps) ** 2 - 1e-12:
            raise ValueError("candidate is not eps-far from T-sparse")
        rq = output_distribution(q.to_float(), dist)
        for atoms in laws:
            best = min(best, float(wasserstein1(DiscreteRV(atoms), rq)))
    return best


# ---------------------------------------------------------------------------
# calibration and perturbation checks


def kong_valiant_check(a: DiscreteRV, b: DiscreteRV, k: int, C: float = 1.0, C_prime: float = 1.0) -> dict:
    """``W1 <= C/k + C' 3^k Mom_k`` after rescaling both laws into ``[-1, 1]``."""
    L = max(1.0, max(abs(float(v)) for v in a.values + b.values))
    ra = a.map(lambda v: float(v) / L)
    rb = b.map(lambda v: float(v) / L)
    lhs = float(wasserstein1(ra, rb))
    rhs = C / k + C_prime * 3**k * moment_distance(ra, rb, k).value
    return {"lhs": lhs, "rhs": rhs, "L": L, "holds": lhs <= rhs}


def keep_and_rescale(q: MultilinearPolynomial, keep: int) -> tuple:
    """Top-``keep`` part ``u`` of ``q`` and ``||u||^2``; the rescaled polynomial is ``u / ||u||``."""
    ranked = sorted(q.items(), key=lambda mc: (-abs(mc[1]), mc[0]))[:keep]
    u = MultilinearPolynomial(dict(ranked), q.degree)
    return u, coeff_norm(u).squared


def perturbation_check(q: MultilinearPolynomial, T: int, keep: int, eps, eps_prime) -> dict:
    """Exact check that ``q' = u / ||u||`` is ``2 eps'``-close to ``q`` and ``eps/2``-far from ``T``-sparse.

    ``q`` must be exact with unit norm.  ``||q - q'||^2 = rest + (1 - sqrt(A))^2``
    with ``A = ||u||^2`` and ``rest = 1 - A``; the square root is removed by
    squaring.
    """
    if not q.is_exact or coeff_norm(q).squared != 1:
        raise ValueError("q must be exact with unit norm")
    u, A = keep_and_rescale(q, keep)
    eps_p = Fraction(eps_prime)
    # ||q - q'||^2 = 2 - 2 sqrt(A) <= 4 eps'^2  <=>  2 sqrt(A) >= 2 - 4 eps'^2
    x = 2 - 4 * eps_p**2
    close = x <= 0 or x * x <= 4 * A
    top_t = sum(sorted((c * c for c in u.terms.values()), reverse=True)[:T])
    member = top_t <= (1 - Fraction(eps) ** 2 / 4) * A
    return {"distance_squared": 2 - 2 * math.sqrt(A), "close": close, "in_P_half_eps": member}


# ---------------------------------------------------------------------------
# serialisation


def save_net(net, directory) -> Path:
    """Write a :class:`PolyNet` or :class:`RvNet` as polynomial files plus ``manifest.json``."""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    if isinstance(net, RvNet):
        members = [m.source for m in net.members]
        manifest = {
            "kind": "rv",
            "granularity": net.zeta_mom,
            "k": net.k,
            "space": net.space,
            "count": net.size,
            "moments": [[float(v) for v in m.moments] for m in net.members],
        }
    else:
        members = net.members()
        manifest = {"kind": "poly", "granularity": net.zeta, "space": net.space, "count": len(members)}
    manifest["params"] = {k: v for k, v in net.params.items() if isinstance(v, (int, float, str, type(None)))}
    files = []
    for i, mem in enumerate(members):
        name = f"member_{i:06d}.poly"
        (path / name).write_text(mem.poly.to_text())
        files.append(name)
    manifest["files"] = files
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_poly_net(directory) -> tuple[dict, list]:
    """Read back ``(manifest, polynomials)`` written by :func:`save_net`."""
    path = Path(directory)
    manifest = json.loads((path / "manifest.json").read_text())
    polys = [MultilinearPolynomial.from_text((path / f).read_text()) for f in manifest["files"]]
    return manifest, polys
