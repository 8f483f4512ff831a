import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdretrieval.corpus import ExamplePair, PairKind, featurize
from mdretrieval.vocabulary import (
    OverlapStats,
    VocabFormatError,
    Vocabulary,
    asym_overlap,
    build_vocab,
    censor,
    censor_pairs,
    jaccard,
    load_vocab,
    merge,
    overlap_matrix,
    overlap_matrix_tsv,
    overlap_stats,
    save_vocab,
)


def vocab_of(counts, langs=("xx",), cap=None):
    return Vocabulary.from_counts(counts, langs, cap)


def pair(lang, q, t):
    return ExamplePair(lang, featurize(q), featurize(t), PairKind.NSP)


class TestBuildVocab:
    def test_top_cap_by_frequency(self):
        v = vocab_of({"a": 5, "b": 3, "c": 1}, cap=2)
        assert v.tokens == ["a", "b"]
        assert v.id_of("a") == 0 and v.id_of("b") == 1

    def test_no_cap_keeps_all(self):
        v = vocab_of({"a": 5, "b": 3, "c": 1})
        assert len(v) == 3

    def test_frequency_tie_broken_by_byte_order(self):
        v = vocab_of({"b": 2, "a": 2}, cap=1)
        assert v.tokens == ["a"]

    def test_counts_both_sides_with_multiplicity(self):
        pairs = [pair("aa", "x x y", "y z")]
        v = build_vocab(pairs)
        assert v.freq_of("x") == 2
        assert v.freq_of("y") == 2
        assert v.freq_of("z") == 1
        assert v.langs == {"aa"}

    def test_empty_stream_gives_empty_vocab(self):
        v = build_vocab([])
        assert len(v) == 0

    def test_cap_equals_truncation_of_uncapped(self):
        rng = random.Random(5)
        for _ in range(25):
            counts = {f"t{i}": rng.randint(1, 6) for i in range(rng.randint(1, 30))}
            full = vocab_of(counts)
            for cap in (1, 3, len(counts)):
                capped = vocab_of(counts, cap=cap)
                assert capped.tokens == full.tokens[:cap]

    def test_ids_are_dense_bijection(self):
        v = vocab_of({"a": 3, "b": 2, "c": 2, "d": 1})
        ids = [v.id_of(t) for t in v.tokens]
        assert sorted(ids) == list(range(len(v)))


class TestOverlapMeasures:
    def test_jaccard_identical(self):
        v = vocab_of({"a": 1, "b": 1})
        assert jaccard(v, v) == 1.0

    def test_jaccard_disjoint(self):
        assert jaccard(vocab_of({"a": 1}), vocab_of({"b": 1})) == 0.0

    def test_jaccard_half(self):
        va = vocab_of({"a": 1, "b": 1, "c": 1})
        vb = vocab_of({"b": 1, "c": 1, "d": 1})
        assert jaccard(va, vb) == 0.5

    def test_jaccard_both_empty_defined_as_zero(self):
        assert jaccard(vocab_of({}), vocab_of({})) == 0.0

    def test_jaccard_symmetric(self):
        va = vocab_of({"a": 1, "b": 2, "q": 9})
        vb = vocab_of({"b": 1, "z": 4})
        assert jaccard(va, vb) == jaccard(vb, va)

    def test_asym_subset(self):
        va = vocab_of({"a": 1, "b": 1})
        vb = vocab_of({"a": 1, "b": 1, "c": 1})
        assert asym_overlap(va, vb) == 1.0

    def test_asym_half(self):
        va = vocab_of({"a": 1, "b": 1, "c": 1, "d": 1})
        vb = vocab_of({"c": 1, "d": 1, "e": 1})
        assert asym_overlap(va, vb) == 0.5

    def test_asym_disjoint(self):
        assert asym_overlap(vocab_of({"a": 1}), vocab_of({"b": 1})) == 0.0

    def test_asym_empty_source_is_error(self):
        with pytest.raises(ValueError):
            asym_overlap(vocab_of({}), vocab_of({"a": 1}))

    def test_asym_intersection_identity(self):
        va = vocab_of({"a": 1, "b": 1, "c": 1})
        vb = vocab_of({"b": 1, "c": 1, "d": 1, "e": 1})
        inter = len(va.token_set() & vb.token_set())
        assert asym_overlap(va, vb) * len(va) == pytest.approx(inter)
        assert asym_overlap(vb, va) * len(vb) == pytest.approx(inter)

    def test_overlap_stats_consistency(self):
        va = vocab_of({"a": 1, "b": 1, "c": 1})
        vb = vocab_of({"b": 1, "c": 1, "d": 1})
        stats = overlap_stats(va, vb)
        assert stats == OverlapStats(
            jaccard=0.5, asym_a_to_b=2 / 3, asym_b_to_a=2 / 3,
            intersection_size=2, union_size=4,
        )


class TestCensor:
    def test_disjoint_unchanged(self):
        aux = vocab_of({"a": 2, "b": 1})
        target = vocab_of({"z": 1})
        assert censor(aux, target).tokens == aux.tokens

    def test_removes_shared(self):
        aux = vocab_of({"a": 1, "b": 1})
        assert censor(aux, vocab_of({"b": 1})).tokens == ["a"]

    def test_subset_becomes_empty(self):
        aux = vocab_of({"a": 1, "b": 1})
        assert len(censor(aux, vocab_of({"a": 1, "b": 1, "c": 1}))) == 0

    def test_frequencies_preserved_ids_redensified(self):
        aux = vocab_of({"a": 5, "b": 4, "c": 3})
        out = censor(aux, vocab_of({"a": 9}))
        assert out.tokens == ["b", "c"]
        assert out.freq_of("b") == 4
        assert [out.id_of(t) for t in out.tokens] == [0, 1]

    @given(
        st.dictionaries(st.sampled_from("abcdefgh"), st.integers(1, 9), max_size=8),
        st.dictionaries(st.sampled_from("defghijk"), st.integers(1, 9), max_size=8),
    )
    @settings(max_examples=150, deadline=None)
    def test_idempotent_and_zero_overlap(self, aux_counts, target_counts):
        aux = vocab_of(aux_counts)
        target = vocab_of(target_counts)
        once = censor(aux, target)
        twice = censor(once, target)
        assert once == twice
        assert jaccard(once, target) == 0.0 or len(target) == 0
        if len(once) > 0:
            assert asym_overlap(once, target) == 0.0


class TestMerge:
    def test_sums_frequencies(self):
        out = merge([vocab_of({"a": 1}), vocab_of({"a": 2, "b": 1})])
        assert out.freq_of("a") == 3
        assert out.freq_of("b") == 1

    def test_disjoint_concatenates_keys(self):
        out = merge([vocab_of({"a": 1}), vocab_of({"b": 2})])
        assert set(out.token_set()) == {"a", "b"}

    def test_langs_pooled(self):
        out = merge([vocab_of({"a": 1}, langs=("aa",)), vocab_of({"b": 1}, langs=("bb",))])
        assert out.langs == {"aa", "bb"}

    def test_merge_with_cap_equals_build_vocab_on_concatenated_stream(self):
        rng = random.Random(11)
        words = [f"w{i}" for i in range(12)]
        for _ in range(20):
            streams = []
            for lang in ("aa", "bb", "cc"):
                stream = [
                    pair(
                        lang,
                        " ".join(rng.choices(words, k=rng.randint(1, 5))),
                        " ".join(rng.choices(words, k=rng.randint(1, 5))),
                    )
                    for _ in range(rng.randint(1, 6))
                ]
                streams.append(stream)
            cap = rng.choice([None, 3, 7])
            merged = merge([build_vocab(s) for s in streams], cap=cap)
            oracle = build_vocab([p for s in streams for p in s], cap=cap)
            assert merged == oracle


class TestCensorPairs:
    def test_unchanged_when_all_in_vocab(self):
        p = pair("aa", "x y", "y z")
        vocab = build_vocab([p])
        assert list(censor_pairs([p], vocab)) == [p]

    def test_pair_dropped_when_query_empties(self):
        p = pair("aa", "x", "y z")
        vocab = vocab_of({"y": 1, "z": 1, "y z": 1})
        assert list(censor_pairs([p], vocab)) == []

    def test_mixed_features_keep_survivors(self):
        p = pair("aa", "x y", "y z")
        vocab = vocab_of({"x": 1, "y": 1, "z": 1})  # bigrams censored
        (out,) = censor_pairs([p], vocab)
        assert out.query_feats == Counter({"x": 1, "y": 1})
        assert out.target_feats == Counter({"y": 1, "z": 1})


class TestVocabTsv:
    def test_round_trip(self, tmp_path):
        v = Vocabulary.from_counts({"a": 3, "b c": 2, "é": 2}, langs=("aa", "bb"))
        path = tmp_path / "v.tsv"
        save_vocab(v, path)
        assert load_vocab(path) == v

    def test_digest_stable_and_sensitive(self):
        v1 = vocab_of({"a": 1, "b": 2})
        v2 = vocab_of({"a": 1, "b": 2})
        v3 = vocab_of({"a": 1, "b": 3})
        assert v1.digest() == v2.digest()
        assert v1.digest() != v3.digest()

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "v.tsv"
        path.write_text("nope\n", encoding="utf-8")
        with pytest.raises(VocabFormatError):
            load_vocab(path)

    def test_non_dense_ids_rejected(self, tmp_path):
        path = tmp_path / "v.tsv"
        path.write_text("token\tid\tfreq\tlangs\na\t1\t3\txx\n", encoding="utf-8")
        with pytest.raises(VocabFormatError, match="dense"):
            load_vocab(path)

    def test_wrong_order_rejected(self, tmp_path):
        path = tmp_path / "v.tsv"
        path.write_text(
            "token\tid\tfreq\tlangs\na\t0\t1\txx\nb\t1\t5\txx\n", encoding="utf-8"
        )
        with pytest.raises(VocabFormatError, match="sorted"):
            load_vocab(path)


class TestOverlapMatrix:
    def test_jaccard_matrix_symmetric_unit_diagonal(self):
        vocabs = {
            "aa": vocab_of({"a": 1, "b": 1}),
            "bb": vocab_of({"b": 1, "c": 1}),
            "cc": vocab_of({"x": 1}),
        }
        langs, matrix = overlap_matrix(vocabs, "jaccard")
        assert langs == ["aa", "bb", "cc"]
        for i in range(3):
            assert matrix[i][i] == 1.0
            for j in range(3):
                assert matrix[i][j] == matrix[j][i]
        assert matrix[0][2] == 0.0

    def test_asym_matrix_directed(self):
        vocabs = {
            "aa": vocab_of({"a": 1, "b": 1, "c": 1, "d": 1}),
            "bb": vocab_of({"c": 1, "d": 1}),
        }
        _, matrix = overlap_matrix(vocabs, "asym")
        assert matrix[0][1] == 0.5
        assert matrix[1][0] == 1.0

    def test_tsv_has_language_headers(self):
        vocabs = {"aa": vocab_of({"a": 1}), "bb": vocab_of({"a": 1})}
        langs, matrix = overlap_matrix(vocabs, "jaccard")
        text = overlap_matrix_tsv(langs, matrix)
        lines = text.splitlines()
        assert lines[0] == "\taa\tbb"
        assert lines[1].startswith("aa\t")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            overlap_matrix({"aa": vocab_of({"a": 1})}, "cosine")
