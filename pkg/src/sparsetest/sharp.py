"""Four-phase sharp tester: s-sparse versus eps-far from T-sparse for any
``T`` above the sparsity gap, plus the label-normalisation reduction."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .coarse import CoarseConfig, coarse_test, log2_upsilon, upsilon
from .core import BudgetExceeded, FiniteDistribution, MultilinearPolynomial, rademacher
from .momest import DEFAULT_MAX_SAMPLES, NoiseSpec, ScaledOracle, estimate_clean_moments
from .msg import decision_tree_polynomial
from .nets import GapNotFound, construct_rv_nets, estimate_wasserstein_gap, xi_constant
from .report import FAR, INCONCLUSIVE, SPARSE, TesterReport

__all__ = [
    "PromiseViolation",
    "SharpConfig",
    "derived_parameters",
    "normalize_labels",
    "nearest_member",
    "test_sparsity",
    "desk_config",
    "desk_far_witness",
]

DEFAULT_ORDER_CAP = 12


class PromiseViolation(ValueError):
    """The estimated norm of ``p`` contradicts the ``1/K <= ||p|| <= K`` promise."""


@dataclass
class SharpConfig:
    """Everything the sharp tester needs.

    ``C_kv`` and ``C_kv_prime`` are the constants of the moment/Wasserstein
    comparison; ``wasserstein_gap`` skips the gap search when set.
    ``coarse_order`` fixes the moment order of the embedded coarse test
    (its derived order is astronomically large at ``eps'``).
    Phase 4 estimates each clean moment to ``zeta_Mom / (moment_tau_divisor
    sqrt(k))`` with failure probability ``moment_delta`` (default
    ``1 / (100 k)``).
    """

    dist: FiniteDistribution
    d: int
    s: int
    T: int
    eps: Fraction | float
    K: float = 1
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    C_dfko: float = 1
    C_kv: float = 1
    C_kv_prime: float = 1
    wasserstein_gap: float | None = None
    gap_t_max: int = 6
    coarse_order: int | None = None
    order_cap: int = DEFAULT_ORDER_CAP
    net_budget: int = 10**6
    mode: str = "practical"
    max_samples: int = DEFAULT_MAX_SAMPLES
    delta: float = 0.1
    moment_tau_divisor: float = 10.0
    moment_delta: float | None = None

    def __post_init__(self):
        if self.T < self.s:
            raise ValueError("T must be >= s")
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if self.K < 1:
            raise ValueError("K must be >= 1")

    def snapshot(self) -> dict:
        return {
            "dist": self.dist.label(),
            "d": self.d,
            "s": self.s,
            "T": self.T,
            "eps": self.eps,
            "K": self.K,
            "noise": self.noise.to_dict(),
            "C_dfko": self.C_dfko,
            "C_kv": self.C_kv,
            "C_kv_prime": self.C_kv_prime,
            "wasserstein_gap": self.wasserstein_gap,
            "coarse_order": self.coarse_order,
            "order_cap": self.order_cap,
            "net_budget": self.net_budget,
            "mode": self.mode,
            "max_samples": self.max_samples,
            "delta": self.delta,
            "moment_tau_divisor": self.moment_tau_divisor,
            "moment_delta": self.moment_delta,
        }


def derived_parameters(c: float, d: int, upsilon_value, M, xi_fn, C: float = 1, C_prime: float = 1,
                       order_cap: int = DEFAULT_ORDER_CAP) -> dict:
    """``L``, ``k``, ``eps'`` and ``zeta_Mom`` from the half-gap ``c``.

    ``xi_fn(k)`` supplies the moment-net constant.  ``L = M^d sqrt(d Upsilon)``.

    Raises
    ------
    ValueError
        If ``c <= 0`` or ``k`` exceeds ``order_cap``.
    """
    if c <= 0:
        raise ValueError("the half-gap c must be positive")
    L = float(M) ** d * math.sqrt(d * upsilon_value)
    k = math.ceil(2 * L * C / c)
    if k > order_cap:
        raise ValueError(f"moment order k={k} exceeds the cap {order_cap}; increase c or recalibrate C")
    xi = xi_fn(k)
    zeta_mom = c / (4 * C_prime * 3**k)
    eps_prime = c / (16 * C_prime * 3**k * xi)
    return {"L": L, "k": k, "xi": xi, "eps_prime": eps_prime, "zeta_mom": zeta_mom}


def normalize_labels(oracle, K, tau0: float, noise: NoiseSpec, *, delta: float = 0.1, mode: str = "practical",
                     max_samples: int = DEFAULT_MAX_SAMPLES):
    """Rescale labels by an estimate of ``||p||``.

    Returns ``(scaled oracle, scaled noise spec, p_tilde)``.
    """
    est = estimate_clean_moments(oracle, 2, tau0, delta, noise, K, mode=mode, max_samples=max_samples)
    m2 = est.value
    lo, hi = Fraction(1, 2) / Fraction(K) ** 2, 2 * Fraction(K) ** 2
    if not lo <= m2 <= hi:
        raise PromiseViolation(f"estimated squared norm {float(m2):.4g} outside [{float(lo)}, {float(hi)}]")
    p_tilde = math.sqrt(m2)
    return ScaledOracle(oracle, p_tilde), noise.scaled(p_tilde), p_tilde


def nearest_member(moments, rv_net) -> tuple[float, int]:
    """Euclidean moment distance from ``moments`` to the closest net member, and its index."""
    target = np.array([float(v) for v in moments])
    dists = np.linalg.norm(rv_net.moment_matrix() - target, axis=1)
    i = int(np.argmin(dists))
    return float(dists[i]), i


def _upsilon_or_none(cfg: SharpConfig):
    try:
        return upsilon(cfg.K, cfg.s, cfg.d, cfg.eps, cfg.C_dfko, cfg.dist.M)
    except OverflowError:
        return None


def test_sparsity(oracle, cfg: SharpConfig) -> TesterReport:
    """Run the sharp tester on ``oracle`` and return its full report.

    Phase 0 hands over to the coarse tester when ``T >= Upsilon``; its
    report is returned unchanged.  Otherwise the half-gap ``c`` fixes the
    moment order and granularity, a coarse test at ``eps'`` may reject, and
    the clean-moment vector is matched against a moment net of ``P``.
    """
    t0 = time.perf_counter()
    ups = _upsilon_or_none(cfg)
    coarse_cfg = CoarseConfig(
        cfg.s, cfg.d, cfg.eps, cfg.K, cfg.C_dfko, delta=cfg.delta, noise=cfg.noise, mode=cfg.mode,
        max_samples=cfg.max_samples,
    )
    if ups is not None and cfg.T >= ups:
        return coarse_test(oracle, coarse_cfg, cfg.dist)

    params = cfg.snapshot()
    params["upsilon"] = ups
    params["upsilon_log2"] = log2_upsilon(cfg.K, cfg.s, cfg.d, cfg.eps, cfg.C_dfko, cfg.dist.M)
    phases = []
    seed = getattr(oracle, "seed", None)

    def done(verdict, diag=""):
        return TesterReport("sharp", verdict, params, phases, getattr(oracle, "samples_drawn", 0), seed,
                            time.perf_counter() - t0, diag)

    if ups is None:
        return done(INCONCLUSIVE, "phase 1: Upsilon is too large to form L")

    # phase 1: gap and derived parameters
    if cfg.wasserstein_gap is not None:
        gap, source = float(cfg.wasserstein_gap), "configured"
    else:
        try:
            est = estimate_wasserstein_gap(
                cfg.dist, cfg.d, cfg.s, cfg.T, Fraction(cfg.eps) / 2, K=cfg.K, C=cfg.C_dfko,
                t_max=cfg.gap_t_max, budget=cfg.net_budget,
            )
        except (BudgetExceeded, GapNotFound) as exc:
            phases.append({"phase": "gap", "error": str(exc)})
            return done(INCONCLUSIVE, f"phase 1 (gap): {exc}")
        gap, source = est.c, "estimated"
    c = gap / 2
    try:
        derived = derived_parameters(
            c, cfg.d, ups, cfg.dist.M, lambda k: xi_constant(k, cfg.d, cfg.dist), cfg.C_kv, cfg.C_kv_prime,
            cfg.order_cap,
        )
    except ValueError as exc:
        phases.append({"phase": "gap", "gap": gap, "source": source, "c": c, "error": str(exc)})
        return done(INCONCLUSIVE, f"phase 1 (parameters): {exc}")
    phases.append({"phase": "gap", "gap": gap, "source": source, "c": c, **derived})
    k, zeta_mom = derived["k"], derived["zeta_mom"]

    # phase 2: coarse test at eps'
    sub_cfg = replace(coarse_cfg, eps=derived["eps_prime"], order=cfg.coarse_order)
    sub = coarse_test(oracle, sub_cfg, cfg.dist)
    phases.append({"phase": "coarse", "report": sub.to_dict()})
    if sub.verdict == INCONCLUSIVE:
        return done(INCONCLUSIVE, f"phase 2 (coarse): {sub.diagnostics}")
    if sub.verdict == FAR:
        return done(FAR)

    # phase 3: moment net of P
    try:
        net_p, _ = construct_rv_nets(
            cfg.dist, cfg.d, cfg.s, cfg.T, cfg.eps, zeta_mom / 10, k, K=cfg.K, C=cfg.C_dfko,
            budget=cfg.net_budget, spaces=("P",),
        )
    except BudgetExceeded as exc:
        phases.append({"phase": "net", "error": str(exc)})
        return done(INCONCLUSIVE, f"phase 3 (net): {exc}")
    phases.append({"phase": "net", "granularity": zeta_mom / 10, "size": net_p.size})

    # phase 4: clean moments against the net
    tau = zeta_mom / (cfg.moment_tau_divisor * math.sqrt(k))
    m_delta = cfg.moment_delta if cfg.moment_delta is not None else 1 / (100 * k)
    try:
        est = estimate_clean_moments(
            oracle, k, tau, m_delta, cfg.noise, cfg.K, mode=cfg.mode, d=cfg.d, cover_all_orders=True,
            max_samples=cfg.max_samples,
        )
    except BudgetExceeded as exc:
        phases.append({"phase": "moments", "error": str(exc)})
        return done(INCONCLUSIVE, f"phase 4 (moments): {exc}")
    dist_min, idx = nearest_member(est.clean_moments, net_p)
    accept = dist_min < zeta_mom / 2
    phases.append({
        "phase": "moments",
        "tau": tau,
        "delta": m_delta,
        "estimate": est.to_dict(),
        "nearest_distance": dist_min,
        "nearest_member": net_p.members[idx].source.poly.to_expression(),
        "threshold": zeta_mom / 2,
    })
    return done(SPARSE if accept else FAR)


test_sparsity.__test__ = False  # keep pytest from collecting it


# ---------------------------------------------------------------------------
# desk configuration


def desk_far_witness() -> MultilinearPolynomial:
    """Unit-norm 5-sparse ``(4/5) tree + (3/5) x4``; its squared distance to 4-sparse is ``4/25``."""
    tree = decision_tree_polynomial(2)
    terms = {m: c * Fraction(4, 5) for m, c in tree.items()}
    terms[(4,)] = Fraction(3, 5)
    return MultilinearPolynomial(terms, 2)


def desk_config(**overrides) -> SharpConfig:
    """Rademacher, ``d=2, s=1, T=4, eps=2/5``, calibrated so that ``k = 4``.

    The gap ``0.6`` is the ``W1`` distance from the witness above to the
    ``P``-net (an upper bound on the true gap, see
    :func:`sparsetest.nets.wasserstein_gap_upper_bound`).
    """
    base = dict(
        dist=rademacher(), d=2, s=1, T=4, eps=Fraction(2, 5), K=1,
        C_kv=0.006, C_kv_prime=0.001, wasserstein_gap=0.6, coarse_order=4,
    )
    base.update(overrides)
    return SharpConfig(**base)
