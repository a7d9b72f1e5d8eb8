"""The coarse sparsity tester: one high even moment against the sparse ceiling.

An s-sparse polynomial with coefficient norm at most K never exceeds
``K M^d sqrt(s)`` in absolute value, so its even moments sit below
``(K M^d sqrt(s))^l``.  A polynomial far from ``Upsilon``-sparse takes
values of at least twice that size with probability at least ``q``, which
pushes its ``l``-th moment above the ceiling once ``l > log2(1 / (2q))``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from .core import BudgetExceeded, FiniteDistribution, RootValue
from .momest import DEFAULT_MAX_SAMPLES, NoiseSpec, estimate_clean_moments
from .report import FAR, INCONCLUSIVE, SPARSE, TesterReport

__all__ = [
    "UPSILON_LOG2_CAP",
    "upsilon",
    "log2_upsilon",
    "sparse_value_bound",
    "sparse_ceiling",
    "tail_prob_bound",
    "log_tail_prob_bound",
    "moment_order_for",
    "CoarseConfig",
    "coarse_test",
    "calibrate_tail_constant",
]

UPSILON_LOG2_CAP = 4096


def _log_d(d: int) -> float:
    # log(d) vanishes at d = 1; log 2 is substituted there
    return math.log(d) if d >= 2 else math.log(2)


def log2_upsilon(K, s, d, eps, C=1, M=1) -> float:
    base = 4 * math.e * float(K) ** 6 * float(M) ** (2 * d) * float(C) ** d * s / float(eps) ** 2
    return d * math.log2(base)


def upsilon(K, s, d, eps, C=1, M=1) -> int:
    """``ceil((4 e K^6 M^{2d} C^d s / eps^2)^d)``.

    Raises
    ------
    OverflowError
        If the value exceeds ``2**UPSILON_LOG2_CAP``; the message carries log2.
    """
    if min(float(K), s, d, float(eps), float(C), float(M)) <= 0:
        raise ValueError("all arguments must be positive")
    lg = log2_upsilon(K, s, d, eps, C, M)
    if lg > UPSILON_LOG2_CAP:
        raise OverflowError(f"Upsilon = 2^{lg:.1f} is too large")
    with mpmath.workdps(int(lg * 0.31) + 40):
        def mp(x):
            return mpmath.mpf(x.numerator) / x.denominator if isinstance(x, Fraction) else mpmath.mpf(x)

        base = 4 * mpmath.e * mp(K) ** 6 * mp(M) ** (2 * d) * mp(C) ** d * s / mp(eps) ** 2
        return int(mpmath.ceil(base**d))


def sparse_value_bound(s: int, K, M, d: int) -> RootValue:
    """``K M^d sqrt(s)``, the largest absolute value of an s-sparse ``||p|| <= K`` polynomial."""
    sq = (K * K) * (M * M) ** d * s
    return RootValue.of(Fraction(sq) if isinstance(sq, (int, Fraction)) else sq)


def sparse_ceiling(s: int, K, M, d: int, ell: int):
    """``(K M^d sqrt(s))^ell``; exact for even ``ell`` and rational ``K, M``."""
    bound = sparse_value_bound(s, K, M, d)
    if ell % 2 == 0:
        return bound.squared ** (ell // 2)
    return bound.value**ell


def log_tail_prob_bound(K, M, s, d, eps, C) -> float:
    """Natural log of ``q``; ``log d`` is replaced by ``log 2`` when ``d = 1``."""
    return -4 * float(C) * float(K) ** 3 * float(M) ** (2 * d) * s * d**2 * _log_d(d) / float(eps)


def tail_prob_bound(K, M, s, d, eps, C) -> float:
    """``q = exp(-4 C K^3 M^{2d} s d^2 log(d) / eps)``."""
    return math.exp(log_tail_prob_bound(K, M, s, d, eps, C))


def moment_order_for(log_q: float) -> int:
    """Smallest even integer strictly above ``log2(1 / (2q))`` (at least 2)."""
    target = -log_q / math.log(2) - 1
    ell = 2 * (math.floor(target / 2) + 1)
    return max(2, ell)


@dataclass
class CoarseConfig:
    """Parameters of the coarse tester.

    ``order`` fixes the moment order manually; otherwise it is derived from
    the tail bound and refused beyond ``order_cap``.  ``tau`` defaults to a
    tenth of the ceiling.  ``mode``/``max_samples`` configure moment
    estimation.
    """

    s: int
    d: int
    eps: float
    K: float = 1
    C_dfko: float = 1
    order: int | None = None
    tau: float | None = None
    delta: float = 0.1
    order_cap: int = 12
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    mode: str = "practical"
    max_samples: int = DEFAULT_MAX_SAMPLES

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.order is not None and (self.order < 2 or self.order % 2):
            raise ValueError("manual moment order must be even and >= 2")

    def snapshot(self) -> dict:
        return {
            "s": self.s,
            "d": self.d,
            "eps": self.eps,
            "K": self.K,
            "C_dfko": self.C_dfko,
            "order": self.order,
            "tau": self.tau,
            "delta": self.delta,
            "order_cap": self.order_cap,
            "noise": self.noise.to_dict(),
            "mode": self.mode,
            "max_samples": self.max_samples,
        }


def coarse_test(oracle, cfg: CoarseConfig, dist: FiniteDistribution) -> TesterReport:
    """Decide s-sparse versus far from ``Upsilon``-sparse with one moment estimate.

    The estimate of ``m_l`` is compared with ``1.5 (K M^d sqrt(s))^l``.  The
    report carries ``l``, ``q``, the threshold, the estimate and the sample
    count.  Budget failures yield an inconclusive verdict.
    """
    t0 = time.perf_counter()
    M = dist.M
    log_q = log_tail_prob_bound(cfg.K, M, cfg.s, cfg.d, cfg.eps, cfg.C_dfko)
    ell = cfg.order if cfg.order is not None else moment_order_for(log_q)
    params = cfg.snapshot()
    params.update(
        M=M,
        lam=dist.lam,
        log_q=log_q,
        q=math.exp(log_q),
        ell=ell,
        upsilon_log2=log2_upsilon(cfg.K, cfg.s, cfg.d, cfg.eps, cfg.C_dfko, M),
    )
    seed = getattr(oracle, "seed", None)

    def done(verdict, phases, samples=0, diag=""):
        return TesterReport(
            "coarse", verdict, params, phases, samples, seed, time.perf_counter() - t0, diag
        )

    if ell > cfg.order_cap:
        return done(INCONCLUSIVE, [], 0, f"moment order {ell} required, cap is {cfg.order_cap}")
    ceiling = sparse_ceiling(cfg.s, cfg.K, M, cfg.d, ell)
    threshold = Fraction(3, 2) * ceiling if isinstance(ceiling, Fraction) else 1.5 * ceiling
    tau = cfg.tau if cfg.tau is not None else 0.1 * float(ceiling)
    params.update(ceiling=ceiling, threshold=threshold, tau_used=tau)
    try:
        est = estimate_clean_moments(
            oracle, ell, tau, cfg.delta, cfg.noise, cfg.K, mode=cfg.mode, d=cfg.d, max_samples=cfg.max_samples
        )
    except BudgetExceeded as exc:
        return done(INCONCLUSIVE, [], getattr(oracle, "samples_drawn", 0), f"moment estimation: {exc}")
    verdict = SPARSE if est.value <= threshold else FAR
    phase = {"phase": "estimate", "estimate": est.to_dict(), "threshold": threshold}
    return done(verdict, [phase], est.samples)


def calibrate_tail_constant(tails, K, M, s, d, eps) -> float:
    """Boundary constant ``C*`` for the tail bound ``q`` on a family of exact tails.

    ``tails`` are exact probabilities ``Pr[|p| >= 2 K M^d sqrt(s)]`` of far
    instances.  Because ``q`` decreases in ``C``, the bound holds for every
    instance exactly when ``C >= C*``; ``C*`` is found by bisection on the
    predicate and returned (0 when every tail is 1).
    """
    tails = [float(t) for t in tails]
    if any(t <= 0 for t in tails):
        raise ValueError("a zero tail cannot satisfy any finite calibration")

    def ok(C):
        return all(t >= tail_prob_bound(K, M, s, d, eps, C) for t in tails)

    lo, hi = 0.0, 1.0
    if ok(lo):
        return 0.0
    while not ok(hi):
        hi *= 2
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi
