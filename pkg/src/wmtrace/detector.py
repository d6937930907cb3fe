"""Sequential detection of watermarked token streams.

The detector runs a sequential probability ratio test between two fully
specified generators: H0 says the text came from the watermarked model,
H1 says it came from an alternative model. Each observed token contributes
the increment -ln(p_h0 / p_h1) to a running statistic, which drifts
downward under H0 (by the per-token KL gap) and upward under H1. The
statistic is compared against closed-form bounds derived from the target
error rates; crossing the lower bound declares the text watermarked,
crossing the upper bound declares it not watermarked, and exhausting the
sequence first leaves the verdict undecided.

With bounds b1 = -ln(alpha/(1-alpha)) and b2 = ln((1-beta)/beta), the
classical sequential-test argument gives the guarantees
P[declare watermarked | H1] <= alpha/(1-alpha) and
P[declare not watermarked | H0] <= beta/(1-beta), and per-token drift KL
makes ceil(bound/KL) the expected decision length on each side.

All statistics are in nats. Probabilities are floored at 1e-300 before
logs so malformed models degrade into counted diagnostics instead of
infinities.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .corpus import require_same_vocabulary
from .errors import (
    AlreadyDecided,
    EmptySequence,
    InvalidProbability,
    InvalidRates,
    ZeroDivergence,
)

PROB_FLOOR = 1e-300


class Decision(enum.Enum):
    UNDECIDED = "undecided"
    WATERMARKED = "watermarked"
    NOT_WATERMARKED = "not_watermarked"


@dataclass(frozen=True)
class DetectorConfig:
    """Target error ceilings: alpha for false watermark claims, beta for misses."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 0.5 or not 0.0 < self.beta < 0.5:
            raise InvalidRates(
                f"alpha and beta must lie in (0, 0.5); got alpha={self.alpha}, beta={self.beta}"
            )


def bounds_from_rates(config: DetectorConfig) -> tuple[float, float]:
    """Decision bounds (b1, b2) in nats, both positive.

    b1 = -ln(alpha/(1-alpha)) guards the watermarked verdict, b2 =
    ln((1-beta)/beta) the not-watermarked verdict; these are the tightest
    thresholds compatible with the target error rates.
    """
    b1 = -math.log(config.alpha / (1.0 - config.alpha))
    b2 = math.log((1.0 - config.beta) / config.beta)
    return b1, b2


def expected_tokens(config: DetectorConfig, kl_h0_h1: float) -> tuple[int, int]:
    """Predicted decision lengths (n1, n2) = ceil(b1/KL), ceil(b2/KL).

    ``kl_h0_h1`` is the per-token divergence between the two hypotheses,
    i.e. the watermark strength in nats per token.

    Raises:
        ZeroDivergence: if the divergence is not positive; identical
            hypotheses can never be told apart.
    """
    if not kl_h0_h1 > 0.0:
        raise ZeroDivergence(f"per-token KL must be positive, got {kl_h0_h1}")
    b1, b2 = bounds_from_rates(config)
    return math.ceil(b1 / kl_h0_h1), math.ceil(b2 / kl_h0_h1)


@dataclass(frozen=True)
class SprtState:
    """Immutable snapshot of the running test; update() returns a new state."""

    statistic: float
    tokens_seen: int
    b1: float
    b2: float
    decision: Decision

    @classmethod
    def initial(cls, config: DetectorConfig) -> "SprtState":
        b1, b2 = bounds_from_rates(config)
        return cls(statistic=0.0, tokens_seen=0, b1=b1, b2=b2, decision=Decision.UNDECIDED)

    def update(self, p_h0: float, p_h1: float) -> "SprtState":
        """Consume one token's probabilities under each hypothesis.

        Adds -ln(p_h0/p_h1) to the statistic and decides when a bound is
        strictly crossed: watermarked below -b1, not watermarked above b2.

        Raises:
            AlreadyDecided: if this state has already reached a verdict.
            InvalidProbability: if either probability is outside (0, 1].
        """
        if self.decision is not Decision.UNDECIDED:
            raise AlreadyDecided(f"test already decided: {self.decision.value}")
        for name, p in (("p_h0", p_h0), ("p_h1", p_h1)):
            if not 0.0 < p <= 1.0:
                raise InvalidProbability(f"{name}={p!r} outside (0, 1]")
        # np.log on both sides keeps increments bit-identical to the
        # vectorized path in detect_sequence.
        statistic = float(self.statistic + (np.log(p_h1) - np.log(p_h0)))
        decision = Decision.UNDECIDED
        if statistic < -self.b1:
            decision = Decision.WATERMARKED
        elif statistic > self.b2:
            decision = Decision.NOT_WATERMARKED
        return SprtState(
            statistic=statistic,
            tokens_seen=self.tokens_seen + 1,
            b1=self.b1,
            b2=self.b2,
            decision=decision,
        )


@dataclass(frozen=True)
class DetectionReport:
    """Outcome of one sequence detection.

    ``floored_events`` and ``state`` are diagnostics and do not serialize;
    the JSON schema is fixed to the eight keys in to_json_obj. The carried
    ``state`` allows resuming the test on a continuation of the sequence.
    """

    decision: Decision
    tokens_used: int
    statistic_nats: float
    b1: float
    b2: float
    n1_expected: int | None
    n2_expected: int | None
    mean_information_nats: float | None
    floored_events: int
    state: SprtState

    def to_json_obj(self) -> dict:
        return {
            "decision": self.decision.value,
            "tokens_used": self.tokens_used,
            "statistic_nats": self.statistic_nats,
            "b1": self.b1,
            "b2": self.b2,
            "n1_expected": self.n1_expected,
            "n2_expected": self.n2_expected,
            "mean_information_nats": self.mean_information_nats,
        }


def _report(
    state: SprtState,
    info_sum: float,
    floored: int,
    n1: int | None,
    n2: int | None,
) -> DetectionReport:
    mean_info = info_sum / state.tokens_seen if state.tokens_seen > 0 else None
    return DetectionReport(
        decision=state.decision,
        tokens_used=state.tokens_seen,
        statistic_nats=state.statistic,
        b1=state.b1,
        b2=state.b2,
        n1_expected=n1,
        n2_expected=n2,
        mean_information_nats=mean_info,
        floored_events=floored,
        state=state,
    )


def _detect_loop(tokens, h0_model, h1_model, config, n1, n2) -> DetectionReport:
    state = SprtState.initial(config)
    info_sum = 0.0
    floored = 0
    for t in range(len(tokens)):
        tok = int(tokens[t])
        ctx = tokens[:t]
        p0 = float(h0_model.next_distribution(ctx)[tok])
        p1 = float(h1_model.next_distribution(ctx)[tok])
        if p0 < PROB_FLOOR:
            p0 = PROB_FLOOR
            floored += 1
        if p1 < PROB_FLOOR:
            p1 = PROB_FLOOR
            floored += 1
        state = state.update(p0, p1)
        info_sum = float(info_sum + -np.log(p0))
        if state.decision is not Decision.UNDECIDED:
            break
    return _report(state, info_sum, floored, n1, n2)


def _detect_fast(tokens, h0_model, h1_model, config, n1, n2) -> DetectionReport:
    """Vectorized path for a pair of context-free models.

    Produces bit-identical results to _detect_loop: the per-token log
    ratios come from the same np.log evaluations and both the statistic
    and the information sum accumulate sequentially (cumsum).
    """
    initial = SprtState.initial(config)
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.size == 0:
        return _report(initial, 0.0, 0, n1, n2)
    dense0 = h0_model.next_distribution(())
    dense1 = h1_model.next_distribution(())
    floored0 = dense0 < PROB_FLOOR
    floored1 = dense1 < PROB_FLOOR
    logs0 = np.log(np.maximum(dense0, PROB_FLOOR))
    logs1 = np.log(np.maximum(dense1, PROB_FLOOR))
    increments = logs1[ids] - logs0[ids]
    cum = np.cumsum(increments)
    info_cum = np.cumsum(-logs0[ids])
    crossings = (cum < -initial.b1) | (cum > initial.b2)
    hits = np.flatnonzero(crossings)
    last = int(hits[0]) if hits.size else ids.size - 1
    statistic = float(cum[last])
    if hits.size and statistic < -initial.b1:
        decision = Decision.WATERMARKED
    elif hits.size:
        decision = Decision.NOT_WATERMARKED
    else:
        decision = Decision.UNDECIDED
    used = ids[: last + 1]
    floored = int(floored0[used].sum() + floored1[used].sum())
    state = SprtState(
        statistic=statistic,
        tokens_seen=last + 1,
        b1=initial.b1,
        b2=initial.b2,
        decision=decision,
    )
    return _report(state, float(info_cum[last]), floored, n1, n2)


def detect_sequence(
    tokens,
    h0_model,
    h1_model,
    config: DetectorConfig,
    strength_nats: float | None = None,
) -> DetectionReport:
    """Run the sequential test over one token-id sequence.

    Walks the sequence once; at each position both models are queried for
    the conditional probability of the observed token given the preceding
    tokens, and the test stops at the first bound crossing. An exhausted
    sequence yields an undecided report. When ``strength_nats`` is given
    (and positive) the report carries the predicted decision lengths
    n1/n2; otherwise they are None.

    Raises:
        VocabularyMismatch: if the two models disagree on the vocabulary.
        ZeroDivergence: if strength_nats is given but not positive.
    """
    require_same_vocabulary(h0_model.vocabulary, h1_model.vocabulary, "detect_sequence")
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= h0_model.vocabulary.size):
        raise ValueError("sequence contains token ids outside the vocabulary")
    n1 = n2 = None
    if strength_nats is not None:
        n1, n2 = expected_tokens(config, strength_nats)
    if getattr(h0_model, "context_free", False) and getattr(h1_model, "context_free", False):
        return _detect_fast(ids, h0_model, h1_model, config, n1, n2)
    return _detect_loop(ids, h0_model, h1_model, config, n1, n2)


def resume_detection(
    tokens,
    h0_model,
    h1_model,
    state: SprtState,
) -> SprtState:
    """Feed more tokens into a saved state until it decides or they run out.

    The caller must pass the full preceding context via ``tokens`` only if
    the models are context-free or the continuation stands alone; for
    context models the sequence is treated as self-contained, mirroring
    detect_sequence.
    """
    for t in range(len(tokens)):
        if state.decision is not Decision.UNDECIDED:
            break
        tok = int(tokens[t])
        ctx = tokens[:t]
        p0 = max(float(h0_model.next_distribution(ctx)[tok]), PROB_FLOOR)
        p1 = max(float(h1_model.next_distribution(ctx)[tok]), PROB_FLOOR)
        state = state.update(p0, p1)
    return state


def mean_information(tokens, model) -> float:
    """Average surprisal of a sequence under a model, in nats per token.

    Computes (1/T) sum_t -ln p(w_t | w_<t). Watermarked text scores lower
    against the watermarked model than text from any other source does, in
    expectation, which makes this the quick screening statistic.

    Raises:
        EmptySequence: on an empty sequence.
    """
    if len(tokens) == 0:
        raise EmptySequence("mean information of an empty sequence is undefined")
    info_sum = 0.0
    for t in range(len(tokens)):
        tok = int(tokens[t])
        p = max(float(model.next_distribution(tokens[:t])[tok]), PROB_FLOOR)
        info_sum = float(info_sum + -np.log(p))
    return info_sum / len(tokens)
