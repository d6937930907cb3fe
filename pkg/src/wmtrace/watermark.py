"""Watermark construction: noised frequency targets, reweight tables, KL strength.

The embedding pipeline is: take a base frequency profile, perturb it with
secret seeded Gaussian noise into a target profile, then reweight a model's
per-step distribution by the ratio target / model-frequency and renormalize.
The KL divergence between the noised target and the model's frequency is the
per-token watermark strength that drives every detector sample-size estimate.

Determinism contract: all noise comes from numpy's PCG64 bit generator seeded
with the key's 64-bit seed, drawn through ``standard_normal`` (ziggurat
transform). The same (base table, key) pair always regenerates the identical
noised vector, so only the compact key needs to be stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import FrequencyTable, Vocabulary, require_same_vocabulary
from .errors import (
    AbsoluteContinuityViolation,
    AllZeroMass,
    DegenerateNoise,
)

DEFAULT_FLOOR_EPSILON = 1e-8

_STEP_SUM_TOL = 1e-6


@dataclass(frozen=True)
class WatermarkKey:
    """Secret seed and noise scale that fully determine a watermark.

    ``sigma`` is the standard deviation of the Gaussian perturbation applied
    to each frequency entry, in probability units.
    """

    seed: int
    sigma: float

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")

    def to_json_obj(self) -> dict:
        return {"version": 1, "seed": str(int(self.seed)), "sigma": float(self.sigma)}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "WatermarkKey":
        if obj.get("version") != 1:
            raise ValueError(f"unsupported key version: {obj.get('version')!r}")
        return cls(seed=int(obj["seed"]), sigma=float(obj["sigma"]))


@dataclass(frozen=True)
class NoisedFrequencyTable:
    """A base frequency table plus its noised counterpart.

    ``noised`` is a proper probability vector (clipped below at
    ``floor_epsilon`` before renormalization) and is exactly regenerable
    from (base, key, floor_epsilon).
    """

    base: FrequencyTable
    noised: np.ndarray
    key: WatermarkKey
    floor_epsilon: float

    def __post_init__(self) -> None:
        noised = np.asarray(self.noised, dtype=np.float64).copy()
        noised.setflags(write=False)
        object.__setattr__(self, "noised", noised)

    @property
    def vocabulary(self) -> Vocabulary:
        return self.base.vocabulary

    def as_table(self) -> FrequencyTable:
        """The noised vector as a standalone frequency table."""
        return FrequencyTable(self.vocabulary, self.noised)


def noise_frequency(
    base: FrequencyTable,
    key: WatermarkKey,
    floor_epsilon: float = DEFAULT_FLOOR_EPSILON,
) -> NoisedFrequencyTable:
    """Perturb ``base`` with seeded Gaussian noise into a watermark target.

    Each entry receives an independent N(0, sigma^2) draw, is clipped below
    at ``floor_epsilon``, and the vector is renormalized to sum 1. The draw
    order is the vocabulary order, so the result is a pure function of
    (base, key, floor_epsilon).

    Raises:
        DegenerateNoise: if every entry was clipped before renormalization,
            which means sigma dwarfs the probabilities themselves.
    """
    if not floor_epsilon > 0.0:
        raise ValueError("floor_epsilon must be positive")
    rng = np.random.Generator(np.random.PCG64(key.seed))
    raw = base.freq + key.sigma * rng.standard_normal(base.freq.shape[0])
    clipped = raw < floor_epsilon
    if bool(clipped.all()):
        raise DegenerateNoise(
            f"sigma={key.sigma} clipped all {raw.shape[0]} entries to the floor"
        )
    noised = np.maximum(raw, floor_epsilon)
    noised /= noised.sum()
    return NoisedFrequencyTable(base=base, noised=noised, key=key, floor_epsilon=floor_epsilon)


@dataclass(frozen=True)
class ReweightTable:
    """Per-token multipliers applied to a model's step distribution.

    ``ratio[i]`` is noised-target[i] / model-frequency[i], with both sides
    floored at ``floor_epsilon`` so every ratio is finite and positive.
    """

    vocabulary: Vocabulary
    ratio: np.ndarray
    floor_epsilon: float

    def __post_init__(self) -> None:
        ratio = np.asarray(self.ratio, dtype=np.float64).copy()
        if ratio.shape != (self.vocabulary.size,):
            raise ValueError("ratio vector does not match the vocabulary size")
        if not np.all(np.isfinite(ratio)) or np.any(ratio <= 0.0):
            raise ValueError("reweight ratios must be finite and positive")
        ratio.setflags(write=False)
        object.__setattr__(self, "ratio", ratio)

    @classmethod
    def identity(cls, vocabulary: Vocabulary) -> "ReweightTable":
        """All-ones table; applying it is a no-op."""
        return cls(vocabulary, np.ones(vocabulary.size), DEFAULT_FLOOR_EPSILON)


def build_reweight_table(
    noised: NoisedFrequencyTable,
    model_freq: FrequencyTable,
    floor_epsilon: float = DEFAULT_FLOOR_EPSILON,
) -> ReweightTable:
    """Build the multiplier table ratio = noised / model-frequency.

    Both numerator and denominator are floored at ``floor_epsilon`` so a
    zero model frequency cannot produce an infinite ratio.

    Raises:
        VocabularyMismatch: if the two tables are over different vocabularies.
    """
    if not floor_epsilon > 0.0:
        raise ValueError("floor_epsilon must be positive")
    require_same_vocabulary(noised.vocabulary, model_freq.vocabulary, "build_reweight_table")
    ratio = np.maximum(noised.noised, floor_epsilon) / np.maximum(model_freq.freq, floor_epsilon)
    return ReweightTable(noised.vocabulary, ratio, floor_epsilon)


def apply_watermark(step_distribution: np.ndarray, table: ReweightTable) -> np.ndarray:
    """Reweight one per-step distribution and renormalize.

    Output is proportional to ``step_distribution * table.ratio`` and sums
    to 1. Support is preserved: an output entry is zero exactly where the
    input entry is zero, because every ratio is strictly positive.
    """
    dist = np.asarray(step_distribution, dtype=np.float64)
    if dist.shape != table.ratio.shape:
        raise ValueError("step distribution does not match the reweight table size")
    total_in = float(dist.sum())
    if abs(total_in - 1.0) > _STEP_SUM_TOL:
        raise ValueError(f"step distribution sums to {total_in!r}, expected 1 within {_STEP_SUM_TOL}")
    out = dist * table.ratio
    total = float(out.sum())
    if not total > 0.0:
        raise AllZeroMass("reweighted distribution has zero total mass")
    return out / total


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats: sum over p's support of p * ln(p / q).

    Zero-probability entries of ``p`` contribute nothing (0 ln 0 := 0).
    Non-negative by Gibbs' inequality, zero exactly when p equals q on p's
    support; tiny negative rounding residue is clamped to 0.

    Raises:
        AbsoluteContinuityViolation: if q vanishes where p does not, where
            the divergence is infinite.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    if np.any(p < 0.0) or np.any(q < 0.0):
        raise ValueError("probability vectors must be non-negative")
    for name, vec in (("p", p), ("q", q)):
        total = float(vec.sum())
        if abs(total - 1.0) > _STEP_SUM_TOL:
            raise ValueError(f"{name} sums to {total!r}, expected 1 within {_STEP_SUM_TOL}")
    support = p > 0.0
    if np.any(q[support] <= 0.0):
        raise AbsoluteContinuityViolation("q has zero mass on p's support; KL is infinite")
    ps = p[support]
    total = float(np.sum(ps * np.log(ps / q[support])))
    return max(total, 0.0)


def watermark_strength(noised: NoisedFrequencyTable, model_freq: FrequencyTable) -> float:
    """Per-token watermark strength in nats: KL(noised target || model frequency).

    This unigram-level divergence is the planning quantity consumed by the
    detector's expected-token-count formulas. Zero entries of the model
    frequency are floored at the noised table's floor_epsilon and the
    vector renormalized, the same treatment the reweight ratio applies, so
    the strength of a fully supported noised target is always finite. The
    adjustment perturbs the value by at most ~|V| * floor_epsilon nats.
    """
    require_same_vocabulary(noised.vocabulary, model_freq.vocabulary, "watermark_strength")
    q = np.maximum(model_freq.freq, noised.floor_epsilon)
    q = q / q.sum()
    return kl_divergence(noised.noised, q)
