"""wmtrace: learnable frequency watermarks for toy language models.

Embed a seeded statistical watermark into an n-gram model's output
distribution, detect it with a sequential log-likelihood-ratio test with
closed-form error bounds, and measure whether the watermark survives a
model-extraction (teacher to student) attack.
"""

__version__ = "0.1.0"

from .corpus import (
    UNK_TOKEN,
    Corpus,
    FrequencyTable,
    Vocabulary,
    build_vocabulary,
    estimate_frequency,
    frequency_from_ids,
    read_corpus_file,
    same_vocabulary,
    tokenize,
)
from .detector import (
    Decision,
    DetectionReport,
    DetectorConfig,
    SprtState,
    bounds_from_rates,
    detect_sequence,
    expected_tokens,
    mean_information,
    resume_detection,
)
from .errors import (
    AbsoluteContinuityViolation,
    AllZeroMass,
    AlreadyDecided,
    ConfigError,
    DegenerateNoise,
    EmptyCorpus,
    EmptySequence,
    InvalidProbability,
    InvalidRates,
    VocabularyMismatch,
    WmtraceError,
    ZeroDivergence,
)
from .montecarlo import (
    derive_seed,
    find_sigma_for_strength,
    parallel_map,
    run_detection_trials,
    summarize,
)
from .ngram import (
    GenerationConfig,
    NGramModel,
    WatermarkedModel,
    extraction_gap,
    generate,
    simulate_extraction,
    train_ngram,
)
from .watermark import (
    NoisedFrequencyTable,
    ReweightTable,
    WatermarkKey,
    apply_watermark,
    build_reweight_table,
    kl_divergence,
    noise_frequency,
    watermark_strength,
)

__all__ = [
    "__version__",
    "UNK_TOKEN",
    "Corpus",
    "FrequencyTable",
    "Vocabulary",
    "build_vocabulary",
    "estimate_frequency",
    "frequency_from_ids",
    "read_corpus_file",
    "same_vocabulary",
    "tokenize",
    "Decision",
    "DetectionReport",
    "DetectorConfig",
    "SprtState",
    "bounds_from_rates",
    "detect_sequence",
    "expected_tokens",
    "mean_information",
    "resume_detection",
    "AbsoluteContinuityViolation",
    "AllZeroMass",
    "AlreadyDecided",
    "ConfigError",
    "DegenerateNoise",
    "EmptyCorpus",
    "EmptySequence",
    "InvalidProbability",
    "InvalidRates",
    "VocabularyMismatch",
    "WmtraceError",
    "ZeroDivergence",
    "derive_seed",
    "find_sigma_for_strength",
    "parallel_map",
    "run_detection_trials",
    "summarize",
    "GenerationConfig",
    "NGramModel",
    "WatermarkedModel",
    "extraction_gap",
    "generate",
    "simulate_extraction",
    "train_ngram",
    "NoisedFrequencyTable",
    "ReweightTable",
    "WatermarkKey",
    "apply_watermark",
    "build_reweight_table",
    "kl_divergence",
    "noise_frequency",
    "watermark_strength",
]
