"""Block-structured YES/NO ensembles built from a sparsity-gap witness.

A target draws one block ``i`` of ``k`` coordinates out of ``n`` and labels
``x`` by ``p(x_block_i)`` (YES) or ``q(x_block_i)`` (NO).  Because ``p`` and
``q`` have the same output law, single labels carry no information about
the case; only the joint behaviour across samples does.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import FiniteDistribution, MultilinearPolynomial
from .exactdist import DiscreteRV, identical_by_moments, output_distribution
from .momest import LabeledSampleBatch, NoiseSpec, _draw_x
from .msg import MsgWitness

__all__ = [
    "YES",
    "NO",
    "HardInstanceEnsemble",
    "HardOracle",
    "make_hard_instance",
    "label_marginal",
    "consistent_blocks",
    "distinguish",
    "AdvantageCurve",
    "transcript_experiment",
]

YES, NO = "YES", "NO"
_TOL = 1e-9


@dataclass
class HardInstanceEnsemble:
    """Uniform mixture over ``n/k`` block placements of ``p`` (YES) or ``q`` (NO)."""

    p: MultilinearPolynomial
    q: MultilinearPolynomial
    dist: FiniteDistribution
    n: int
    case: str

    def __post_init__(self):
        if self.case not in (YES, NO):
            raise ValueError("case must be 'YES' or 'NO'")
        self.p, self.q = self.p.compact(), self.q.compact()
        if self.n % self.k:
            raise ValueError(f"block size {self.k} does not divide n={self.n}")
        if not identical_by_moments(output_distribution(self.p, self.dist), output_distribution(self.q, self.dist)):
            raise ValueError("p and q do not have identical output laws")

    @classmethod
    def from_witness(cls, witness: MsgWitness, n: int, case: str) -> "HardInstanceEnsemble":
        return cls(witness.p, witness.q, witness.dist, n, case)

    @property
    def k(self) -> int:
        return max(len(self.p.variables), len(self.q.variables), 1)

    @property
    def blocks(self) -> int:
        return self.n // self.k

    @property
    def target(self) -> MultilinearPolynomial:
        return self.p if self.case == YES else self.q

    def placed(self, block: int, which: str | None = None) -> MultilinearPolynomial:
        """The target (or ``p``/``q`` when ``which`` is given) on the coordinates of ``block``."""
        poly = self.target if which is None else (self.p if which == YES else self.q)
        return poly.rename(offset=block * self.k)


class HardOracle:
    """One target from an ensemble; the block is fixed at construction."""

    exact = False

    def __init__(self, ensemble: HardInstanceEnsemble, seed: int, noise: NoiseSpec | None = None):
        self.ensemble, self.seed = ensemble, seed
        self.noise = noise or NoiseSpec()
        self.dist = ensemble.dist
        self._rng = np.random.default_rng(seed)
        self.block = int(self._rng.integers(ensemble.blocks))
        self._poly = ensemble.placed(self.block)
        self.samples_drawn = 0

    def draw(self, m: int) -> LabeledSampleBatch:
        ens = self.ensemble
        xs = _draw_x(ens.dist, self._rng, m, ens.n)
        ys = self._poly.evaluate_array(xs, tuple(range(1, ens.n + 1))) + self.noise.sample(self._rng, m)
        self.samples_drawn += m
        return LabeledSampleBatch(xs, ys, tuple(range(1, ens.n + 1)), self.seed, self.noise, ens.dist.label())


def make_hard_instance(witness: MsgWitness, n: int, case: str, seed: int, noise: NoiseSpec | None = None):
    """Sampling oracle for one target drawn from the YES or NO ensemble."""
    return HardOracle(HardInstanceEnsemble.from_witness(witness, n, case), seed, noise)


def label_marginal(ensemble: HardInstanceEnsemble) -> DiscreteRV:
    """Exact law of one label, averaged over the block choice and the inputs."""
    acc: dict = {}
    w = Fraction(1, ensemble.blocks)
    for b in range(ensemble.blocks):
        for v, a in output_distribution(ensemble.placed(b), ensemble.dist).atoms:
            acc[v] = acc.get(v, 0) + w * a
    return DiscreteRV(acc)


# ---------------------------------------------------------------------------
# distinguishing experiment


def consistent_blocks(ensemble: HardInstanceEnsemble, xs: np.ndarray, ys: np.ndarray, which: str) -> int:
    """Number of blocks whose ``p`` (``which=YES``) or ``q`` placement explains every label."""
    k = ensemble.k
    poly = ensemble.p if which == YES else ensemble.q
    local = tuple(range(1, k + 1))
    count = 0
    for b in range(ensemble.blocks):
        if xs.shape[0] == 0:
            count += 1
            continue
        pred = poly.evaluate_array(xs[:, b * k:(b + 1) * k], local)
        count += bool(np.all(np.abs(pred - ys) <= _TOL))
    return count


def distinguish(ensemble: HardInstanceEnsemble, xs: np.ndarray, ys: np.ndarray) -> str:
    """Answer YES iff at least as many blocks fit ``p`` as fit ``q`` (ties answer YES)."""
    yes = consistent_blocks(ensemble, xs, ys, YES)
    no = consistent_blocks(ensemble, xs, ys, NO)
    return YES if yes >= no else NO


@dataclass
class AdvantageCurve:
    n: int
    trials: int
    seed: int
    rows: list = field(default_factory=list)  # (m, advantage, yes_rate_on_yes, yes_rate_on_no)

    @property
    def advantages(self) -> list:
        return [r[1] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "m", "advantage", "yes_rate_yes", "yes_rate_no", "trials"])
        for m, adv, a, b in self.rows:
            w.writerow([self.n, m, repr(adv), repr(a), repr(b), self.trials])
        return buf.getvalue()


def transcript_experiment(
    ensemble_yes: HardInstanceEnsemble,
    ensemble_no: HardInstanceEnsemble,
    ms,
    trials: int,
    seed: int,
) -> AdvantageCurve:
    """Empirical advantage ``Pr[YES | YES] - Pr[YES | NO]`` of :func:`distinguish` for each ``m``.

    Both cases of trial ``j`` share one child seed, so they see the same
    block and the same inputs, and every ``m`` uses a prefix of one
    transcript.  This is a qualitative illustration only; no bound on the
    transcript distance is computed.
    """
    if ensemble_yes.case != YES or ensemble_no.case != NO:
        raise ValueError("expected a YES ensemble and a NO ensemble")
    ms = sorted(set(int(m) for m in ms))
    m_max = max(ms) if ms else 0
    hits = {YES: np.zeros(len(ms)), NO: np.zeros(len(ms))}
    children = np.random.SeedSequence(seed).spawn(trials)
    for child in children:
        trial_seed = int(child.generate_state(1, dtype=np.uint64)[0])
        for ens in (ensemble_yes, ensemble_no):
            oracle = HardOracle(ens, trial_seed)
            batch = oracle.draw(m_max) if m_max else None
            for j, m in enumerate(ms):
                xs = batch.xs[:m] if batch is not None else np.zeros((0, ens.n))
                ys = batch.ys[:m] if batch is not None else np.zeros(0)
                hits[ens.case][j] += distinguish(ens, xs, ys) == YES
    curve = AdvantageCurve(ensemble_yes.n, trials, seed)
    for j, m in enumerate(ms):
        a, b = hits[YES][j] / trials, hits[NO][j] / trials
        curve.rows.append((m, float(a - b), float(a), float(b)))
    return curve
