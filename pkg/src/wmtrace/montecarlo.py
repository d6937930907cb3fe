"""Monte Carlo experiment plumbing: derived seeds, trial batches, summaries.

Every stochastic component in an experiment draws its seed from a single
master seed through ``derive_seed``, which folds string tags and integer
indices into a numpy SeedSequence. Trials are therefore independent,
reproducible, and order-insensitive, and a worker pool can evaluate them
in parallel without changing any result.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from statistics import median

import numpy as np

from .corpus import FrequencyTable
from .detector import Decision, DetectionReport, DetectorConfig, detect_sequence
from .ngram import GenerationConfig, generate
from .watermark import WatermarkKey, noise_frequency, watermark_strength

WORKERS_ENV_VAR = "WMTRACE_WORKERS"


def derive_seed(master_seed: int, *parts) -> int:
    """Fold a master seed and a tag path into one unsigned 64-bit seed.

    Integer parts enter the SeedSequence entropy pool directly; string
    parts are hashed first. Stable across platforms and numpy versions
    that keep SeedSequence's mixing (fixed since numpy 1.17).
    """
    entropy = [int(master_seed)]
    for part in parts:
        if isinstance(part, (int, np.integer)):
            entropy.append(int(part))
        else:
            digest = hashlib.sha256(str(part).encode("utf-8")).digest()
            entropy.append(int.from_bytes(digest[:8], "big"))
    seq = np.random.SeedSequence(entropy)
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def worker_count() -> int:
    """Parallelism cap from the WMTRACE_WORKERS environment variable (default 1)."""
    raw = os.environ.get(WORKERS_ENV_VAR, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(n, 1)


def parallel_map(fn, items) -> list:
    """Map preserving input order, threaded when WMTRACE_WORKERS > 1.

    Results are identical to the sequential map; only wall-clock time
    changes. The workloads here are numpy-heavy, so threads help despite
    the interpreter lock.
    """
    items = list(items)
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_detection_trials(
    generator_model,
    h0_model,
    h1_model,
    det_config: DetectorConfig,
    trials: int,
    sequence_length: int,
    master_seed: int,
    strength_nats: float | None = None,
    seed_tag: str = "trial",
) -> list[DetectionReport]:
    """Generate ``trials`` independent sequences and detect each one.

    ``generator_model`` produces the text; the detector always tests
    h0_model against h1_model. Per-trial seeds derive from
    (master_seed, seed_tag, index).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if sequence_length < 1:
        raise ValueError("sequence_length must be >= 1")

    def one_trial(index: int) -> DetectionReport:
        seed = derive_seed(master_seed, seed_tag, index)
        sequence = generate(generator_model, GenerationConfig(max_tokens=sequence_length, rng_seed=seed))
        return detect_sequence(sequence, h0_model, h1_model, det_config, strength_nats=strength_nats)

    return parallel_map(one_trial, range(trials))


def summarize(reports: list[DetectionReport]) -> dict:
    """Decision counts, rates, and token medians for a batch of reports."""
    counts = {d.value: 0 for d in Decision}
    decided_tokens: list[int] = []
    floored_total = 0
    for report in reports:
        counts[report.decision.value] += 1
        floored_total += report.floored_events
        if report.decision is not Decision.UNDECIDED:
            decided_tokens.append(report.tokens_used)
    total = len(reports)
    rates = {key: (n / total if total else 0.0) for key, n in counts.items()}
    return {
        "trials": total,
        "decisions": counts,
        "rates": rates,
        "median_tokens_to_decision": median(decided_tokens) if decided_tokens else None,
        "median_tokens_used": median(r.tokens_used for r in reports) if reports else None,
        "floored_events_total": floored_total,
    }


def find_sigma_for_strength(
    base: FrequencyTable,
    model_freq: FrequencyTable,
    target_nats: float,
    noise_seed: int,
    floor_epsilon: float = 1e-8,
    rel_tol: float = 1e-3,
    max_iterations: int = 200,
) -> float:
    """Sigma whose noised table has (close to) the requested strength.

    For a fixed noise seed the strength grows continuously from 0 with
    sigma, so a doubling search brackets the target and bisection closes
    in. Used to pin experiment strengths like "about 0.02 nats" exactly
    enough for sample-size predictions to be meaningful.
    """
    if not target_nats > 0.0:
        raise ValueError("target_nats must be positive")

    def strength_at(sigma: float) -> float:
        noised = noise_frequency(base, WatermarkKey(seed=noise_seed, sigma=sigma), floor_epsilon)
        return watermark_strength(noised, model_freq)

    lo, hi = 0.0, 1e-4
    iterations = 0
    while strength_at(hi) < target_nats:
        lo, hi = hi, hi * 2.0
        iterations += 1
        if iterations > 60:
            raise ValueError(f"could not bracket strength {target_nats} nats; reached sigma={hi}")
    while iterations < max_iterations:
        mid = 0.5 * (lo + hi)
        got = strength_at(mid)
        if abs(got - target_nats) <= rel_tol * target_nats:
            return mid
        if got < target_nats:
            lo = mid
        else:
            hi = mid
        iterations += 1
    return 0.5 * (lo + hi)
