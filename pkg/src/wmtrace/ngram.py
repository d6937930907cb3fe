"""Toy autoregressive language models and the extraction-attack simulation.

The model family is a plain n-gram with additive smoothing and stupid
backoff: an unseen context falls back to the next shorter context. Because
every conditional distribution is renormalized to sum to 1, the classical
0.4 backoff multiplier cancels and the backed-off distribution equals the
lower-order smoothed distribution directly; the constant is kept here only
as documentation of the scheme.

Generation is ancestral sampling driven by a seeded PCG64 stream with
inverse-CDF lookups, so a (model, config, prompt) triple always reproduces
the same token sequence. ``simulate_extraction`` plays the adversary: it
queries a watermarked teacher for a text budget and fits a fresh student
n-gram on the transcript.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, FrequencyTable, Vocabulary, require_same_vocabulary
from .errors import EmptyCorpus
from .watermark import ReweightTable, apply_watermark, kl_divergence

BACKOFF_FACTOR = 0.4  # cancels under per-context renormalization; see module docstring
DEFAULT_SMOOTHING_ALPHA = 0.1

MIN_EXTRACTION_TOKENS = 1000


def _context_tail(context, order: int) -> tuple[int, ...]:
    """Last order-1 ids of ``context`` as a plain int tuple."""
    if order <= 1:
        return ()
    tail = context[max(0, len(context) - (order - 1)):]
    return tuple(int(t) for t in tail)


class NGramModel:
    """Order-n model: context of up to n-1 token ids -> next-token distribution.

    ``tables[k]`` maps each observed length-k context tuple to a dict of
    next-token counts; ``tables[0][()]`` holds the unigram counts. Lookups
    resolve a context to its longest observed suffix, so every context has
    a distribution and additive smoothing keeps all probabilities positive.
    """

    def __init__(
        self,
        vocabulary: Vocabulary,
        order: int,
        smoothing_alpha: float,
        tables: list[dict[tuple[int, ...], dict[int, int]]],
    ) -> None:
        if order < 1:
            raise ValueError("order must be >= 1")
        if not smoothing_alpha > 0.0:
            raise ValueError("smoothing_alpha must be positive")
        if len(tables) != order:
            raise ValueError("need one count table per context length 0..order-1")
        if () not in tables[0]:
            raise ValueError("unigram table is missing the empty context")
        self.vocabulary = vocabulary
        self.order = int(order)
        self.smoothing_alpha = float(smoothing_alpha)
        self.tables = tables
        self._dense_cache: dict[tuple[int, ...], np.ndarray] = {}
        self._cdf_cache: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def context_free(self) -> bool:
        """True when every context yields the same distribution (order 1)."""
        return self.order == 1

    def _resolve(self, context) -> tuple[int, ...]:
        """Longest observed suffix of ``context``, possibly the empty tuple."""
        tail = _context_tail(context, self.order)
        for t in tail:
            if not 0 <= t < self.vocabulary.size:
                raise ValueError(f"context id {t} outside vocabulary of size {self.vocabulary.size}")
        while tail and tail not in self.tables[len(tail)]:
            tail = tail[1:]
        return tail

    def _dense(self, key: tuple[int, ...]) -> np.ndarray:
        dist = self._dense_cache.get(key)
        if dist is None:
            size = self.vocabulary.size
            counts = np.zeros(size, dtype=np.float64)
            for tok, n in self.tables[len(key)][key].items():
                counts[tok] = n
            dist = (counts + self.smoothing_alpha) / (counts.sum() + size * self.smoothing_alpha)
            dist.setflags(write=False)
            self._dense_cache[key] = dist
        return dist

    def next_distribution(self, context=()) -> np.ndarray:
        """Smoothed next-token distribution given a context of token ids.

        Full support, sums to 1; unseen contexts back off to the longest
        observed suffix (ultimately the unigram table).
        """
        return self._dense(self._resolve(context))

    def _step_cdf(self, context) -> np.ndarray:
        key = self._resolve(context)
        cdf = self._cdf_cache.get(key)
        if cdf is None:
            cdf = np.cumsum(self._dense(key))
            cdf[-1] = 1.0  # guard inverse-CDF sampling against float undershoot
            cdf.setflags(write=False)
            self._cdf_cache[key] = cdf
        return cdf

    def unigram_distribution(self) -> FrequencyTable:
        """The empty-context (order-1 backoff) distribution as a table."""
        return FrequencyTable(self.vocabulary, self.next_distribution(()))

    def to_json_obj(self) -> dict:
        tokens = self.vocabulary.tokens
        counts_obj: dict[str, dict[str, int]] = {}
        for table in self.tables:
            for ctx, inner in table.items():
                ctx_key = " ".join(tokens[i] for i in ctx)
                counts_obj[ctx_key] = {tokens[tok]: int(n) for tok, n in inner.items()}
        return {
            "version": 1,
            "order": self.order,
            "alpha": self.smoothing_alpha,
            "tokens": list(tokens),
            "counts": counts_obj,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "NGramModel":
        if obj.get("version") != 1:
            raise ValueError(f"unsupported model version: {obj.get('version')!r}")
        vocabulary = Vocabulary(tuple(obj["tokens"]))
        order = int(obj["order"])
        tables: list[dict[tuple[int, ...], dict[int, int]]] = [{} for _ in range(order)]
        try:
            for ctx_key, inner in obj["counts"].items():
                ctx = tuple(vocabulary.lookup(t) for t in ctx_key.split())
                if len(ctx) >= order:
                    raise ValueError(f"context {ctx_key!r} longer than order {order} allows")
                tables[len(ctx)][ctx] = {vocabulary.lookup(t): int(n) for t, n in inner.items()}
        except KeyError as exc:
            raise ValueError(f"model counts reference a token missing from the token list: {exc}") from exc
        return cls(vocabulary, order, float(obj["alpha"]), tables)


def train_ngram(
    corpus: Corpus,
    order: int,
    smoothing_alpha: float = DEFAULT_SMOOTHING_ALPHA,
) -> NGramModel:
    """Count k-grams for k = 1..order and wrap them in a smoothed model.

    Contexts never span document boundaries. Raises EmptyCorpus when the
    corpus has no tokens at all.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if corpus.total_tokens == 0:
        raise EmptyCorpus("cannot train on a corpus with zero tokens")
    size = corpus.vocabulary.size
    tables: list[dict[tuple[int, ...], dict[int, int]]] = [{} for _ in range(order)]

    unigram = np.zeros(size, dtype=np.int64)
    for doc in corpus.documents:
        if doc.size:
            unigram += np.bincount(doc, minlength=size)
    tables[0][()] = {int(i): int(unigram[i]) for i in np.flatnonzero(unigram)}

    if order > 1:
        for doc in corpus.documents:
            ids = [int(t) for t in doc]
            for t, tok in enumerate(ids):
                for k in range(1, min(order - 1, t) + 1):
                    ctx = tuple(ids[t - k:t])
                    inner = tables[k].get(ctx)
                    if inner is None:
                        inner = tables[k][ctx] = {}
                    inner[tok] = inner.get(tok, 0) + 1
    return NGramModel(corpus.vocabulary, order, smoothing_alpha, tables)


class WatermarkedModel:
    """Base n-gram model whose every conditional is reweighted and renormalized."""

    def __init__(self, base: NGramModel, reweight: ReweightTable) -> None:
        require_same_vocabulary(base.vocabulary, reweight.vocabulary, "WatermarkedModel")
        self.base = base
        self.reweight = reweight
        self._dense_cache: dict[tuple[int, ...], np.ndarray] = {}
        self._cdf_cache: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def vocabulary(self) -> Vocabulary:
        return self.base.vocabulary

    @property
    def order(self) -> int:
        return self.base.order

    @property
    def context_free(self) -> bool:
        return self.base.context_free

    def next_distribution(self, context=()) -> np.ndarray:
        key = self.base._resolve(context)
        dist = self._dense_cache.get(key)
        if dist is None:
            dist = apply_watermark(self.base._dense(key), self.reweight)
            dist.setflags(write=False)
            self._dense_cache[key] = dist
        return dist

    def _step_cdf(self, context) -> np.ndarray:
        key = self.base._resolve(context)
        cdf = self._cdf_cache.get(key)
        if cdf is None:
            cdf = np.cumsum(self.next_distribution(context))
            cdf[-1] = 1.0
            cdf.setflags(write=False)
            self._cdf_cache[key] = cdf
        return cdf


@dataclass(frozen=True)
class GenerationConfig:
    """Sampling parameters; a given config makes generation fully deterministic."""

    max_tokens: int
    rng_seed: int
    stop_token: int | None = None

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError("rng_seed must be an unsigned 64-bit integer")
        if self.stop_token is not None and self.stop_token < 0:
            raise ValueError("stop_token must be a non-negative token id")


def generate(model, config: GenerationConfig, prompt=()) -> np.ndarray:
    """Sample up to ``config.max_tokens`` ids by ancestral sampling.

    The prompt conditions the first steps but is not echoed in the output.
    If ``config.stop_token`` is sampled it is kept as the final token and
    generation ends early. Sampling uses inverse-CDF lookups against a
    pre-drawn PCG64 uniform stream, so results are reproducible and the
    order-1 fast path below is step-for-step identical to the generic loop.
    """
    vocab_size = model.vocabulary.size
    prompt_ids = [int(t) for t in prompt]
    for t in prompt_ids:
        if not 0 <= t < vocab_size:
            raise ValueError(f"prompt id {t} outside vocabulary of size {vocab_size}")
    if config.stop_token is not None and config.stop_token >= vocab_size:
        raise ValueError(f"stop_token {config.stop_token} outside vocabulary of size {vocab_size}")
    rng = np.random.Generator(np.random.PCG64(config.rng_seed))
    uniforms = rng.random(config.max_tokens)

    if model.context_free:
        cdf = model._step_cdf(())
        ids = np.searchsorted(cdf, uniforms, side="right").astype(np.int64)
        if config.stop_token is not None:
            hits = np.flatnonzero(ids == config.stop_token)
            if hits.size:
                ids = ids[: int(hits[0]) + 1]
        return ids

    out: list[int] = []
    context = prompt_ids[max(0, len(prompt_ids) - (model.order - 1)):]
    for u in uniforms:
        cdf = model._step_cdf(context)
        tok = int(np.searchsorted(cdf, u, side="right"))
        out.append(tok)
        if config.stop_token is not None and tok == config.stop_token:
            break
        context = context + [tok] if len(context) < model.order - 1 else context[1:] + [tok]
    return np.asarray(out, dtype=np.int64)


def simulate_extraction(
    teacher: WatermarkedModel,
    student_order: int,
    query_tokens: int,
    config: GenerationConfig,
    smoothing_alpha: float = DEFAULT_SMOOTHING_ALPHA,
) -> NGramModel:
    """Train an adversary's student n-gram on teacher-generated text.

    ``query_tokens`` is the attack budget: the number of tokens the student
    gets to observe. The generation length comes from that budget, and the
    teacher transcript is sampled without a stop token so the student sees
    the full budget; ``config`` contributes only the rng seed.

    Raises:
        ValueError: if query_tokens < 1000; a student fit on less is
            statistically meaningless.
    """
    if query_tokens < MIN_EXTRACTION_TOKENS:
        raise ValueError(
            f"query_tokens must be >= {MIN_EXTRACTION_TOKENS}, got {query_tokens}"
        )
    if student_order < 1:
        raise ValueError("student_order must be >= 1")
    transcript_config = GenerationConfig(max_tokens=query_tokens, rng_seed=config.rng_seed)
    transcript = generate(teacher, transcript_config)
    corpus = Corpus((transcript,), teacher.vocabulary)
    return train_ngram(corpus, student_order, smoothing_alpha)


def extraction_gap(
    teacher: WatermarkedModel,
    student: NGramModel,
    probe_contexts: int,
    rng_seed: int,
) -> float:
    """Mean per-context KL(teacher next-dist, student next-dist) in nats.

    Contexts are sampled from the teacher itself: a fresh transcript is
    drawn and every sliding window of length teacher.order - 1 becomes one
    probe. This matches how a detector consumes the two models, token by
    token, and stays finite because both sides have full support.
    """
    require_same_vocabulary(teacher.vocabulary, student.vocabulary, "extraction_gap")
    if probe_contexts < 1:
        raise ValueError("probe_contexts must be >= 1")
    ctx_len = teacher.order - 1
    stream = generate(
        teacher,
        GenerationConfig(max_tokens=probe_contexts + ctx_len, rng_seed=rng_seed),
    )
    total = 0.0
    for i in range(probe_contexts):
        ctx = stream[i : i + ctx_len]
        total += kl_divergence(teacher.next_distribution(ctx), student.next_distribution(ctx))
    return total / probe_contexts
