import json
import math
import os

import numpy as np
import pytest

from wmtrace import (
    AbsoluteContinuityViolation,
    DegenerateNoise,
    FrequencyTable,
    ReweightTable,
    VocabularyMismatch,
    Vocabulary,
    WatermarkKey,
    apply_watermark,
    build_reweight_table,
    kl_divergence,
    noise_frequency,
    watermark_strength,
)

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def uniform_table(size):
    vocab = Vocabulary(tuple(f"w{i}" for i in range(size)))
    return FrequencyTable(vocab, np.full(size, 1.0 / size))


class TestWatermarkKey:
    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(ValueError):
            WatermarkKey(seed=1, sigma=0.0)

    def test_rejects_out_of_range_seed(self):
        with pytest.raises(ValueError):
            WatermarkKey(seed=2**64, sigma=0.1)

    def test_json_roundtrip_keeps_seed_as_string(self):
        key = WatermarkKey(seed=2**63 + 5, sigma=0.25)
        obj = key.to_json_obj()
        assert obj["seed"] == str(2**63 + 5)
        assert WatermarkKey.from_json_obj(obj) == key


class TestNoiseFrequency:
    def test_sigma_zero_limit_is_identity(self):
        vocab = Vocabulary(("a", "b"))
        base = FrequencyTable(vocab, np.array([0.6, 0.4]))
        noised = noise_frequency(base, WatermarkKey(seed=3, sigma=1e-12))
        assert np.abs(noised.noised - base.freq).max() < 1e-6

    def test_deterministic_given_base_and_key(self):
        base = uniform_table(50)
        key = WatermarkKey(seed=99, sigma=0.002)
        first = noise_frequency(base, key)
        second = noise_frequency(base, key)
        assert np.array_equal(first.noised, second.noised)

    def test_different_seeds_differ(self):
        base = uniform_table(50)
        one = noise_frequency(base, WatermarkKey(seed=1, sigma=0.002))
        two = noise_frequency(base, WatermarkKey(seed=2, sigma=0.002))
        assert not np.array_equal(one.noised, two.noised)

    def test_output_is_distribution(self):
        base = uniform_table(30)
        for seed in range(20):
            noised = noise_frequency(base, WatermarkKey(seed=seed, sigma=0.01))
            assert abs(noised.noised.sum() - 1.0) < 1e-9
            assert (noised.noised > 0).all()

    def test_golden_kl_value(self):
        with open(os.path.join(GOLDEN_DIR, "noise_kl.json")) as fh:
            golden = json.load(fh)
        base = uniform_table(golden["vocab_size"])
        key = WatermarkKey(seed=golden["seed"], sigma=golden["sigma"])
        noised = noise_frequency(base, key)
        kl = kl_divergence(noised.noised, base.freq)
        assert 0.0 < kl < 0.05
        assert kl == pytest.approx(golden["kl_nats"], abs=1e-15)

    def test_degenerate_noise_detected(self):
        # sigma so large the draw for this seed pushes everything negative
        vocab = Vocabulary(("a", "b"))
        base = FrequencyTable(vocab, np.array([0.5, 0.5]))
        hit = False
        for seed in range(200):
            try:
                noise_frequency(base, WatermarkKey(seed=seed, sigma=1e6))
            except DegenerateNoise:
                hit = True
                break
        assert hit


class TestReweightTable:
    def test_identity_when_equal(self):
        base = uniform_table(10)
        noised = noise_frequency(base, WatermarkKey(seed=5, sigma=1e-15))
        table = build_reweight_table(noised, base)
        assert np.abs(table.ratio - 1.0).max() < 1e-6

    def test_direct_division(self):
        vocab = Vocabulary(("a", "b"))
        base = FrequencyTable(vocab, np.array([0.5, 0.5]))
        noised = noise_frequency(base, WatermarkKey(seed=1, sigma=1e-15))
        # overwrite with the exact example values via a handmade table
        handmade = type(noised)(
            base=base, noised=np.array([0.6, 0.4]), key=noised.key, floor_epsilon=1e-8
        )
        table = build_reweight_table(handmade, base)
        assert np.allclose(table.ratio, [1.2, 0.8], atol=1e-12)

    def test_zero_model_freq_floored(self):
        vocab = Vocabulary(("a", "b"))
        base = FrequencyTable(vocab, np.array([1.0, 0.0]))
        noised = noise_frequency(base, WatermarkKey(seed=7, sigma=1e-12))
        table = build_reweight_table(noised, base, floor_epsilon=1e-8)
        assert np.isfinite(table.ratio).all()
        assert table.ratio[1] == pytest.approx(noised.noised[1] / 1e-8)

    def test_vocabulary_mismatch(self):
        base = uniform_table(4)
        other = uniform_table(5)
        noised = noise_frequency(base, WatermarkKey(seed=1, sigma=0.001))
        with pytest.raises(VocabularyMismatch):
            build_reweight_table(noised, other)


class TestApplyWatermark:
    def test_all_ones_is_identity(self):
        vocab = Vocabulary(tuple(f"w{i}" for i in range(12)))
        rng = np.random.default_rng(3)
        dist = rng.dirichlet(np.ones(12))
        out = apply_watermark(dist, ReweightTable.identity(vocab))
        assert np.abs(out - dist).max() < 1e-12

    def test_hand_example_balanced(self):
        vocab = Vocabulary(("a", "b"))
        table = ReweightTable(vocab, np.array([1.2, 0.8]), 1e-8)
        out = apply_watermark(np.array([0.5, 0.5]), table)
        assert np.allclose(out, [0.6, 0.4], atol=1e-12)

    def test_hand_example_renormalized(self):
        vocab = Vocabulary(("a", "b"))
        table = ReweightTable(vocab, np.array([1.2, 0.8]), 1e-8)
        out = apply_watermark(np.array([0.9, 0.1]), table)
        assert out[0] == pytest.approx(1.08 / 1.16, abs=1e-9)
        assert out[1] == pytest.approx(0.08 / 1.16, abs=1e-9)

    def test_support_preserved_and_normalized(self):
        vocab = Vocabulary(tuple(f"w{i}" for i in range(6)))
        rng = np.random.default_rng(8)
        for _ in range(100):
            dist = rng.dirichlet(np.ones(6))
            dist[rng.integers(0, 6)] = 0.0
            dist /= dist.sum()
            ratio = rng.uniform(0.5, 2.0, size=6)
            out = apply_watermark(dist, ReweightTable(vocab, ratio, 1e-8))
            assert abs(out.sum() - 1.0) < 1e-9
            assert np.array_equal(out == 0.0, dist == 0.0)

    def test_rejects_unnormalized_input(self):
        vocab = Vocabulary(("a", "b"))
        with pytest.raises(ValueError):
            apply_watermark(np.array([0.9, 0.3]), ReweightTable.identity(vocab))


class TestKlDivergence:
    def test_identical_is_zero(self):
        assert kl_divergence(np.array([0.5, 0.5]), np.array([0.5, 0.5])) == 0.0

    def test_point_mass_vs_uniform(self):
        kl = kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
        assert kl == pytest.approx(math.log(2), abs=1e-12)

    def test_absolute_continuity_violation(self):
        with pytest.raises(AbsoluteContinuityViolation):
            kl_divergence(np.array([0.5, 0.5]), np.array([1.0, 0.0]))

    def test_gibbs_nonnegative_randomized(self):
        rng = np.random.default_rng(17)
        for _ in range(500):
            size = int(rng.integers(2, 30))
            p = rng.dirichlet(np.ones(size))
            q = rng.dirichlet(np.ones(size))
            assert kl_divergence(p, q) >= 0.0

    def test_gibbs_equality_iff_equal(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            size = int(rng.integers(2, 30))
            p = rng.dirichlet(np.ones(size))
            assert kl_divergence(p, p.copy()) <= 1e-12
            q = rng.dirichlet(np.ones(size))
            if np.abs(p - q).max() > 1e-6:
                assert kl_divergence(p, q) > 0.0

    def test_expectation_identity(self):
        # sum_i p_i * (-ln(p_i/q_i)) must equal -KL(p, q) exactly
        rng = np.random.default_rng(31)
        for _ in range(100):
            size = int(rng.integers(2, 20))
            p = rng.dirichlet(np.ones(size))
            q = rng.dirichlet(np.ones(size))
            expect = float(np.sum(p * (-np.log(p / q))))
            assert expect == pytest.approx(-kl_divergence(p, q), abs=1e-12)

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            kl_divergence(np.array([1.0]), np.array([0.5, 0.5]))

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            kl_divergence(np.array([0.7, 0.7]), np.array([0.5, 0.5]))


class TestWatermarkStrength:
    def test_unwatermarked_limit_is_zero(self):
        base = uniform_table(20)
        noised = noise_frequency(base, WatermarkKey(seed=2, sigma=1e-15))
        assert watermark_strength(noised, base) < 1e-9

    def test_two_term_hand_value(self):
        vocab = Vocabulary(("a", "b"))
        base = FrequencyTable(vocab, np.array([0.5, 0.5]))
        noised = noise_frequency(base, WatermarkKey(seed=1, sigma=1e-15))
        handmade = type(noised)(
            base=base, noised=np.array([0.6, 0.4]), key=noised.key, floor_epsilon=1e-8
        )
        expected = 0.6 * math.log(1.2) + 0.4 * math.log(0.8)
        assert watermark_strength(handmade, base) == pytest.approx(expected, abs=1e-9)

    def test_mean_strength_increases_with_sigma(self):
        base = uniform_table(100)
        strengths = {sigma: [] for sigma in (0.001, 0.002)}
        for seed in range(100):
            for sigma in strengths:
                noised = noise_frequency(base, WatermarkKey(seed=seed, sigma=sigma))
                strengths[sigma].append(watermark_strength(noised, base))
        assert np.mean(strengths[0.002]) > np.mean(strengths[0.001])

    def test_finite_when_model_freq_has_zeros(self):
        # zero-count tokens must not blow the strength up to infinity
        vocab = Vocabulary(("a", "b", "c"))
        base = FrequencyTable(vocab, np.array([0.7, 0.3, 0.0]))
        noised = noise_frequency(base, WatermarkKey(seed=4, sigma=0.01))
        assert math.isfinite(watermark_strength(noised, base))
