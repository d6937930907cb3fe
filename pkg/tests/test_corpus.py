import json

import numpy as np
import pytest

from wmtrace import (
    UNK_TOKEN,
    Corpus,
    EmptyCorpus,
    FrequencyTable,
    Vocabulary,
    build_vocabulary,
    estimate_frequency,
    frequency_from_ids,
    read_corpus_file,
    tokenize,
)
from wmtrace.corpus import dump_json, load_json


class TestTokenize:
    def test_lowercase_whitespace_split(self):
        assert tokenize("The cat sat") == ["the", "cat", "sat"]

    def test_empty(self):
        assert tokenize("") == []

    def test_whitespace_runs_collapse(self):
        assert tokenize("a  a\ta") == ["a", "a", "a"]

    def test_join_retokenize_roundtrip(self):
        rng = np.random.default_rng(11)
        words = ["alpha", "beta", "gamma", "x1", "y2"]
        for _ in range(50):
            seq = list(rng.choice(words, size=rng.integers(0, 12)))
            assert tokenize(" ".join(seq)) == seq


class TestBuildVocabulary:
    def test_count_ordering_and_unk(self):
        vocab = build_vocabulary(["a b a"], min_count=1)
        assert vocab.tokens == ("a", "b", UNK_TOKEN)

    def test_min_count_filters(self):
        vocab = build_vocabulary(["a b a"], min_count=2)
        assert vocab.tokens == ("a", UNK_TOKEN)

    def test_lexicographic_tie_break(self):
        vocab = build_vocabulary(["x y x y"], min_count=1)
        assert vocab.tokens.index("x") < vocab.tokens.index("y")

    def test_empty_corpus_raises(self):
        with pytest.raises(EmptyCorpus):
            build_vocabulary(["a"], min_count=5)

    def test_lookup_bijection(self):
        vocab = build_vocabulary(["one two three two three three"])
        seen = {vocab.lookup(tok) for tok in vocab.tokens}
        assert seen == set(range(vocab.size))

    def test_oov_encodes_to_unk(self):
        vocab = build_vocabulary(["a b"])
        assert vocab.encode_token("zzz") == vocab.unk_id

    def test_single_token_vocab_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary(("only",))


class TestEstimateFrequency:
    def test_direct_ratio(self):
        vocab = Vocabulary(("a", "b"))
        corpus = Corpus.from_texts(["a b a"], vocab)
        table = estimate_frequency(corpus, vocab)
        assert np.allclose(table.freq, [2 / 3, 1 / 3])

    def test_absent_token_gets_zero(self):
        vocab = Vocabulary(("a", "b"))
        corpus = Corpus.from_texts(["a a a a"], vocab)
        table = estimate_frequency(corpus, vocab)
        assert table.freq[0] == 1.0 and table.freq[1] == 0.0

    def test_empty_corpus_raises(self):
        vocab = Vocabulary(("a", "b"))
        corpus = Corpus((), vocab)
        with pytest.raises(EmptyCorpus):
            estimate_frequency(corpus, vocab)

    def test_monte_carlo_recovery(self):
        # 10k iid samples from a known categorical land within 0.02 max-abs
        rng = np.random.default_rng(2024)
        p = rng.dirichlet(np.ones(8) * 3.0)
        tokens = [f"w{i}" for i in range(8)]
        vocab = Vocabulary(tuple(tokens))
        ids = rng.choice(8, size=10000, p=p)
        table = frequency_from_ids(ids, vocab)
        assert np.abs(table.freq - p).max() < 0.02

    def test_sums_to_one_and_nonnegative(self):
        rng = np.random.default_rng(5)
        vocab = Vocabulary(tuple(f"t{i}" for i in range(20)))
        for _ in range(25):
            ids = rng.integers(0, 20, size=rng.integers(1, 300))
            table = frequency_from_ids(ids, vocab)
            assert abs(table.freq.sum() - 1.0) < 1e-9
            assert (table.freq >= 0).all()

    def test_document_permutation_invariance(self):
        vocab = build_vocabulary(["a b c", "c c d", "d a"])
        docs = ["a b c", "c c d", "d a"]
        forward = estimate_frequency(Corpus.from_texts(docs, vocab), vocab)
        backward = estimate_frequency(Corpus.from_texts(docs[::-1], vocab), vocab)
        assert np.array_equal(forward.freq, backward.freq)


class TestCorpusType:
    def test_total_tokens(self):
        vocab = Vocabulary(("a", "b"))
        corpus = Corpus.from_texts(["a b", "b b b"], vocab)
        assert corpus.total_tokens == 5

    def test_out_of_range_id_rejected(self):
        vocab = Vocabulary(("a", "b"))
        with pytest.raises(ValueError):
            Corpus((np.array([0, 7]),), vocab)


class TestFrequencyTableType:
    def test_sum_validation(self):
        vocab = Vocabulary(("a", "b"))
        with pytest.raises(ValueError):
            FrequencyTable(vocab, np.array([0.6, 0.6]))

    def test_entry_range_validation(self):
        vocab = Vocabulary(("a", "b"))
        with pytest.raises(ValueError):
            FrequencyTable(vocab, np.array([1.2, -0.2]))

    def test_freq_array_is_read_only(self):
        vocab = Vocabulary(("a", "b"))
        table = FrequencyTable(vocab, np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            table.freq[0] = 0.9

    def test_json_roundtrip(self):
        vocab = Vocabulary(("a", "b", "c"))
        table = FrequencyTable(vocab, np.array([0.2, 0.3, 0.5]))
        back = FrequencyTable.from_json_obj(table.to_json_obj())
        assert back.vocabulary.tokens == vocab.tokens
        assert np.array_equal(back.freq, table.freq)


def test_read_corpus_file_one_doc_per_line(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text("a b c\nd e\n", encoding="utf-8")
    assert read_corpus_file(str(path)) == ["a b c", "d e"]


def test_dump_json_is_byte_stable(tmp_path):
    obj = {"b": 1, "a": [1.5, 2.25], "nested": {"z": None, "y": "s"}}
    p1, p2 = tmp_path / "one.json", tmp_path / "two.json"
    dump_json(obj, str(p1))
    dump_json(json.loads(p1.read_text()), str(p2))
    assert p1.read_bytes() == p2.read_bytes()
    assert load_json(str(p1)) == obj
