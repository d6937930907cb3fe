import math

import numpy as np
import pytest

from wmtrace import (
    AlreadyDecided,
    Decision,
    DetectorConfig,
    EmptySequence,
    GenerationConfig,
    InvalidProbability,
    InvalidRates,
    SprtState,
    Vocabulary,
    ZeroDivergence,
    bounds_from_rates,
    detect_sequence,
    expected_tokens,
    generate,
    mean_information,
    resume_detection,
)
from wmtrace.detector import PROB_FLOOR, _detect_fast, _detect_loop

from test_ngram import watermarked_unigram


class FixedModel:
    """Context-free stub: every context yields the same distribution."""

    context_free = True
    order = 1

    def __init__(self, probs, vocabulary=None):
        self._dist = np.asarray(probs, dtype=np.float64)
        self.vocabulary = vocabulary or Vocabulary(tuple(f"w{i}" for i in range(len(self._dist))))

    def next_distribution(self, context=()):
        return self._dist


class TestBounds:
    def test_symmetric_quarter(self):
        b1, b2 = bounds_from_rates(DetectorConfig(alpha=0.25, beta=0.25))
        assert b1 == pytest.approx(math.log(3), abs=1e-12)
        assert b2 == pytest.approx(math.log(3), abs=1e-12)

    def test_five_percent(self):
        b1, _ = bounds_from_rates(DetectorConfig(alpha=0.05, beta=0.25))
        assert b1 == pytest.approx(math.log(19), abs=1e-12)

    def test_coin_flip_limit(self):
        b1, _ = bounds_from_rates(DetectorConfig(alpha=0.4999999, beta=0.25))
        assert 0 < b1 < 1e-6

    def test_positive_and_decreasing(self):
        rng = np.random.default_rng(40)
        for _ in range(200):
            lo, hi = sorted(rng.uniform(0.001, 0.499, size=2))
            if lo == hi:
                continue
            b1_lo, b2_lo = bounds_from_rates(DetectorConfig(alpha=lo, beta=lo))
            b1_hi, b2_hi = bounds_from_rates(DetectorConfig(alpha=hi, beta=hi))
            assert b1_lo > b1_hi > 0
            assert b2_lo > b2_hi > 0

    def test_invalid_rates_rejected(self):
        for bad in (0.0, 0.5, 0.7, -0.1):
            with pytest.raises(InvalidRates):
                DetectorConfig(alpha=bad, beta=0.1)
            with pytest.raises(InvalidRates):
                DetectorConfig(alpha=0.1, beta=bad)


class TestExpectedTokens:
    def test_hand_value(self):
        n1, _ = expected_tokens(DetectorConfig(alpha=0.01, beta=0.01), 0.01)
        assert n1 == math.ceil(math.log(99) / 0.01) == 460

    def test_doubling_kl_halves_count(self):
        config = DetectorConfig(alpha=0.03, beta=0.07)
        n1_a, n2_a = expected_tokens(config, 0.004)
        n1_b, n2_b = expected_tokens(config, 0.008)
        assert abs(n1_a - 2 * n1_b) <= 2  # ceiling slack
        assert abs(n2_a - 2 * n2_b) <= 2

    def test_zero_divergence(self):
        with pytest.raises(ZeroDivergence):
            expected_tokens(DetectorConfig(alpha=0.05, beta=0.05), 0.0)


class TestSprtUpdate:
    def test_equal_probabilities_only_count_token(self):
        state = SprtState.initial(DetectorConfig(alpha=0.1, beta=0.1))
        new = state.update(0.3, 0.3)
        assert new.statistic == 0.0
        assert new.tokens_seen == 1
        assert new.decision is Decision.UNDECIDED

    def test_increment_hand_value(self):
        state = SprtState.initial(DetectorConfig(alpha=0.1, beta=0.1))
        new = state.update(0.6, 0.4)
        assert new.statistic == pytest.approx(-math.log(1.5), abs=1e-12)

    def test_statistic_is_plain_sum(self):
        rng = np.random.default_rng(3)
        state = SprtState.initial(DetectorConfig(alpha=0.001, beta=0.001))
        expected = 0.0
        for _ in range(100):
            p0, p1 = rng.uniform(0.2, 1.0, size=2)
            state = state.update(p0, p1)
            expected += -(math.log(p0) - math.log(p1))
        assert state.statistic == pytest.approx(expected, abs=1e-9)
        assert state.tokens_seen == 100

    def test_rejects_after_decision(self):
        state = SprtState.initial(DetectorConfig(alpha=0.25, beta=0.25))
        while state.decision is Decision.UNDECIDED:
            state = state.update(0.9, 0.1)
        with pytest.raises(AlreadyDecided):
            state.update(0.5, 0.5)

    def test_rejects_bad_probabilities(self):
        state = SprtState.initial(DetectorConfig(alpha=0.1, beta=0.1))
        for bad in (0.0, -0.5, 1.5):
            with pytest.raises(InvalidProbability):
                state.update(bad, 0.5)
            with pytest.raises(InvalidProbability):
                state.update(0.5, bad)

    def test_iid_biased_stream_is_caught(self):
        # tokens from {0.6, 0.4} tested against {0.5, 0.5}: alpha=beta=0.01
        # must reach Watermarked within 10k tokens in >= 99% of trials
        p_hat = FixedModel([0.6, 0.4])
        p_a = FixedModel([0.5, 0.5], vocabulary=p_hat.vocabulary)
        config = DetectorConfig(alpha=0.01, beta=0.01)
        rng = np.random.default_rng(2718)
        hits = 0
        trials = 1000
        for _ in range(trials):
            tokens = rng.choice(2, size=10000, p=[0.6, 0.4])
            report = detect_sequence(tokens, p_hat, p_a, config)
            if report.decision is Decision.WATERMARKED:
                hits += 1
        assert hits / trials >= 0.99


class TestDetectSequence:
    def test_empty_sequence_undecided(self):
        wm, _ = watermarked_unigram()
        report = detect_sequence([], wm, wm.base, DetectorConfig(alpha=0.1, beta=0.1))
        assert report.decision is Decision.UNDECIDED
        assert report.tokens_used == 0
        assert report.statistic_nats == 0.0
        assert report.mean_information_nats is None

    def test_json_schema(self):
        wm, _ = watermarked_unigram()
        seq = generate(wm, GenerationConfig(max_tokens=50, rng_seed=1))
        report = detect_sequence(seq, wm, wm.base, DetectorConfig(alpha=0.1, beta=0.1), strength_nats=0.02)
        obj = report.to_json_obj()
        assert sorted(obj) == [
            "b1", "b2", "decision", "mean_information_nats",
            "n1_expected", "n2_expected", "statistic_nats", "tokens_used",
        ]
        assert obj["decision"] in ("watermarked", "not_watermarked", "undecided")

    def test_fast_path_matches_loop_exactly(self):
        wm, _ = watermarked_unigram()
        config = DetectorConfig(alpha=0.05, beta=0.05)
        rng = np.random.default_rng(55)
        for trial in range(20):
            seq = generate(wm, GenerationConfig(max_tokens=int(rng.integers(1, 800)), rng_seed=trial))
            fast = _detect_fast(seq, wm, wm.base, config, None, None)
            slow = _detect_loop(seq, wm, wm.base, config, None, None)
            assert fast.decision == slow.decision
            assert fast.tokens_used == slow.tokens_used
            assert fast.statistic_nats == slow.statistic_nats
            assert fast.mean_information_nats == slow.mean_information_nats
            assert fast.floored_events == slow.floored_events

    def test_watermarked_text_drifts_to_watermarked(self):
        # a single sequence can false-alarm by design, so check the rate
        wm, _ = watermarked_unigram(sigma=0.02)
        config = DetectorConfig(alpha=0.05, beta=0.05)
        hits = 0
        for seed in range(50):
            seq = generate(wm, GenerationConfig(max_tokens=5000, rng_seed=100 + seed))
            report = detect_sequence(seq, wm, wm.base, config)
            if report.decision is Decision.WATERMARKED:
                assert report.statistic_nats < -report.b1
                hits += 1
        assert hits >= 45

    def test_plain_text_drifts_to_not_watermarked(self):
        wm, _ = watermarked_unigram(sigma=0.02)
        config = DetectorConfig(alpha=0.05, beta=0.05)
        hits = 0
        for seed in range(50):
            seq = generate(wm.base, GenerationConfig(max_tokens=5000, rng_seed=200 + seed))
            report = detect_sequence(seq, wm, wm.base, config)
            if report.decision is Decision.NOT_WATERMARKED:
                assert report.statistic_nats > report.b2
                hits += 1
        assert hits >= 45

    def test_concatenation_equals_resumed_state(self):
        wm, _ = watermarked_unigram()
        config = DetectorConfig(alpha=0.01, beta=0.01)
        part_a = generate(wm, GenerationConfig(max_tokens=40, rng_seed=21))
        part_b = generate(wm, GenerationConfig(max_tokens=4000, rng_seed=22))
        whole = np.concatenate([part_a, part_b])
        full_report = detect_sequence(whole, wm, wm.base, config)
        first = detect_sequence(part_a, wm, wm.base, config)
        assert first.decision is Decision.UNDECIDED  # too short to decide
        resumed = resume_detection(part_b, wm, wm.base, first.state)
        assert resumed.decision == full_report.decision
        assert resumed.tokens_seen == full_report.tokens_used
        assert resumed.statistic == pytest.approx(full_report.statistic_nats, abs=1e-9)

    def test_probability_floor_counts_events(self):
        vocab = Vocabulary(("a", "b"))
        h0 = FixedModel([1.0, 0.0], vocabulary=vocab)
        h1 = FixedModel([0.5, 0.5], vocabulary=vocab)
        config = DetectorConfig(alpha=0.01, beta=0.01)
        report = detect_sequence([0, 0, 1], h0, h1, config)
        # token "b" has probability 0 under h0: floored once, huge increment
        assert report.floored_events == 1
        assert report.decision is Decision.NOT_WATERMARKED

    def test_strength_yields_predictions(self):
        wm, _ = watermarked_unigram()
        config = DetectorConfig(alpha=0.05, beta=0.05)
        report = detect_sequence([0, 1], wm, wm.base, config, strength_nats=0.02)
        assert report.n1_expected == math.ceil(report.b1 / 0.02)
        assert report.n2_expected == math.ceil(report.b2 / 0.02)
        bare = detect_sequence([0, 1], wm, wm.base, config)
        assert bare.n1_expected is None and bare.n2_expected is None


class TestMeanInformation:
    def test_certain_model_scores_zero(self):
        vocab = Vocabulary(("a", "b"))
        certain = FixedModel([1.0, 0.0], vocabulary=vocab)
        assert mean_information([0, 0, 0], certain) == 0.0

    def test_uniform_model_constant_surprise(self):
        uniform = FixedModel([0.25] * 4)
        value = mean_information([0, 3, 1, 2, 2], uniform)
        assert value == pytest.approx(math.log(4), abs=1e-12)

    def test_empty_sequence_rejected(self):
        uniform = FixedModel([0.25] * 4)
        with pytest.raises(EmptySequence):
            mean_information([], uniform)

    def test_watermarked_text_scores_lower_under_watermarked_model(self):
        # paired sample means: info of own text <= info of base-model text
        wm, _ = watermarked_unigram(sigma=0.02)
        own, other = [], []
        for seed in range(100):
            own_seq = generate(wm, GenerationConfig(max_tokens=800, rng_seed=3000 + seed))
            other_seq = generate(wm.base, GenerationConfig(max_tokens=800, rng_seed=6000 + seed))
            own.append(mean_information(own_seq, wm))
            other.append(mean_information(other_seq, wm))
        assert np.mean(own) < np.mean(other)
