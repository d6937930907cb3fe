"""Corpora, vocabularies, and empirical token-frequency tables.

Text is tokenized by lowercasing and splitting on whitespace runs. Tokens
that fall outside a fixed vocabulary map to a reserved UNK token, which
participates in every frequency table like any other token so that all
distributions live on the same support.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCorpus, VocabularyMismatch

UNK_TOKEN = "<unk>"

_FREQ_SUM_TOL = 1e-9


def tokenize(text: str) -> list[str]:
    """Split ``text`` into lowercase tokens on whitespace runs.

    Total function: empty or all-whitespace input yields an empty list.
    """
    return text.lower().split()


@dataclass(frozen=True)
class Vocabulary:
    """An ordered set of distinct token strings with id lookup.

    Token ids are positions in ``tokens``. The ordering is fixed at
    construction and is part of the serialized artifact, so two
    vocabularies are interchangeable only if their token lists match
    exactly.
    """

    tokens: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.tokens) < 2:
            raise ValueError("vocabulary needs at least 2 tokens")
        index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def unk_id(self) -> int | None:
        """Id of the UNK token, or None if this vocabulary has none."""
        return self._index.get(UNK_TOKEN)

    def lookup(self, token: str) -> int:
        """Exact token -> id lookup. Raises KeyError for unknown tokens."""
        return self._index[token]

    def encode_token(self, token: str) -> int:
        """Token -> id, mapping out-of-vocabulary tokens to UNK."""
        idx = self._index.get(token)
        if idx is None:
            idx = self.unk_id
            if idx is None:
                raise KeyError(f"token {token!r} not in vocabulary and no UNK token present")
        return idx

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        """Encode a token sequence to an int64 id array (OOV -> UNK)."""
        return np.fromiter((self.encode_token(t) for t in tokens), dtype=np.int64)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[int(i)] for i in ids]

    def to_json_obj(self) -> dict:
        return {"version": 1, "tokens": list(self.tokens)}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Vocabulary":
        if obj.get("version") != 1:
            raise ValueError(f"unsupported vocabulary version: {obj.get('version')!r}")
        return cls(tuple(obj["tokens"]))


def same_vocabulary(a: Vocabulary, b: Vocabulary) -> bool:
    return a.tokens == b.tokens


def require_same_vocabulary(a: Vocabulary, b: Vocabulary, what: str) -> None:
    if not same_vocabulary(a, b):
        raise VocabularyMismatch(f"{what}: vocabularies differ ({a.size} vs {b.size} tokens)")


def build_vocabulary(texts: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Build a vocabulary from raw document strings.

    Every token whose corpus count is at least ``min_count`` is kept,
    ordered by descending count with lexicographic tie-break, and the UNK
    token is appended if not already present. The ordering is fully
    deterministic so that serialized artifacts are byte-stable.

    Raises:
        EmptyCorpus: if no token survives the ``min_count`` filter.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for text in texts:
        counts.update(tokenize(text))
    kept = sorted(
        (tok for tok, n in counts.items() if n >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    if not kept:
        raise EmptyCorpus(f"no token reached min_count={min_count}")
    if UNK_TOKEN not in counts or counts[UNK_TOKEN] < min_count:
        kept.append(UNK_TOKEN)
    return Vocabulary(tuple(kept))


@dataclass(frozen=True)
class Corpus:
    """A collection of documents, each a sequence of token ids."""

    documents: tuple[np.ndarray, ...]
    vocabulary: Vocabulary

    def __post_init__(self) -> None:
        docs = tuple(np.asarray(doc, dtype=np.int64) for doc in self.documents)
        for doc in docs:
            if doc.size and (doc.min() < 0 or doc.max() >= self.vocabulary.size):
                raise ValueError("document contains token ids outside the vocabulary")
        object.__setattr__(self, "documents", docs)

    @property
    def total_tokens(self) -> int:
        return int(sum(doc.size for doc in self.documents))

    @classmethod
    def from_texts(cls, texts: Iterable[str], vocabulary: Vocabulary) -> "Corpus":
        """Tokenize and encode raw document strings (OOV tokens become UNK)."""
        docs = tuple(vocabulary.encode(tokenize(text)) for text in texts)
        return cls(docs, vocabulary)


@dataclass(frozen=True)
class FrequencyTable:
    """Per-token empirical probability over a vocabulary.

    Entries are non-negative and sum to 1 within 1e-9; both are checked at
    construction.
    """

    vocabulary: Vocabulary
    freq: np.ndarray

    def __post_init__(self) -> None:
        freq = np.asarray(self.freq, dtype=np.float64)
        if freq.shape != (self.vocabulary.size,):
            raise ValueError(
                f"frequency vector has shape {freq.shape}, expected ({self.vocabulary.size},)"
            )
        if np.any(freq < 0.0) or np.any(freq > 1.0):
            raise ValueError("frequency entries must lie in [0, 1]")
        total = float(freq.sum())
        if abs(total - 1.0) > _FREQ_SUM_TOL:
            raise ValueError(f"frequencies sum to {total!r}, expected 1 within {_FREQ_SUM_TOL}")
        freq = freq.copy()
        freq.setflags(write=False)
        object.__setattr__(self, "freq", freq)

    def to_json_obj(self) -> dict:
        return {
            "version": 1,
            "tokens": list(self.vocabulary.tokens),
            "freq": [float(x) for x in self.freq],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "FrequencyTable":
        if obj.get("version") != 1:
            raise ValueError(f"unsupported frequency table version: {obj.get('version')!r}")
        vocab = Vocabulary(tuple(obj["tokens"]))
        return cls(vocab, np.asarray(obj["freq"], dtype=np.float64))


def estimate_frequency(corpus: Corpus, vocabulary: Vocabulary) -> FrequencyTable:
    """Estimate per-token probability as count / total over the corpus.

    Raises:
        EmptyCorpus: if the corpus holds zero tokens.
        VocabularyMismatch: if the corpus was encoded with a different vocabulary.
    """
    require_same_vocabulary(corpus.vocabulary, vocabulary, "estimate_frequency")
    total = corpus.total_tokens
    if total == 0:
        raise EmptyCorpus("cannot estimate frequencies from an empty corpus")
    counts = np.zeros(vocabulary.size, dtype=np.int64)
    for doc in corpus.documents:
        counts += np.bincount(doc, minlength=vocabulary.size)
    return FrequencyTable(vocabulary, counts / float(total))


def frequency_from_ids(ids: Sequence[int] | np.ndarray, vocabulary: Vocabulary) -> FrequencyTable:
    """Frequency table of a single id sequence (e.g. model-generated text)."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise EmptyCorpus("cannot estimate frequencies from an empty sequence")
    counts = np.bincount(ids, minlength=vocabulary.size)
    if counts.size > vocabulary.size:
        raise ValueError("sequence contains token ids outside the vocabulary")
    return FrequencyTable(vocabulary, counts / float(ids.size))


def read_corpus_file(path: str) -> list[str]:
    """Read a UTF-8 plain-text corpus, one document per line."""
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def dump_json(obj: dict, path: str) -> None:
    """Write a JSON artifact with a byte-stable layout."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        fh.write("\n")


def load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
