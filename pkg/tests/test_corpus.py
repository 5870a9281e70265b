import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cnnexplain.corpus import (
    Dataset,
    build_vocab,
    encode_and_pad,
    encode_for_model,
    load_dataset,
    load_model,
    model_from_dict,
    model_to_dict,
    save_dataset,
    save_model,
    tokenize,
)
from cnnexplain.errors import DatasetError, ModelFormatError
from cnnexplain.explain import explain
from cnnexplain.model import forward
from cnnexplain.toydata import main as toydata_main, make_sentiment_corpus

from conftest import make_random_model, random_ids


class TestTokenize:
    @pytest.mark.parametrize(
        "text, tokens",
        [
            ("How far is it from Denver to Aspen?", ["how", "far", "is", "it", "from", "denver",
                                                      "to", "aspen"]),
            ("  The film, sadly... wasn't GOOD!  ", ["the", "film", "sadly", "wasn't", "good"]),
            ("«quoted» -- text", ["quoted", "text"]),
            ("", []),
        ],
    )
    def test_examples(self, text, tokens):
        assert tokenize(text) == tokens

    @given(st.text())
    def test_idempotent(self, text):
        once = tokenize(text)
        assert tokenize(" ".join(once)) == once


class TestVocabAndEncoding:
    def test_first_appearance_order(self):
        assert build_vocab([["b", "a"], ["a", "c"]]) == ["<pad>", "<unk>", "b", "a", "c"]

    def test_min_freq(self):
        assert build_vocab([["b", "a"], ["a"]], min_freq=2) == ["<pad>", "<unk>", "a"]

    def test_pad_and_unk(self):
        vocab = {t: i for i, t in enumerate(["<pad>", "<unk>", "good", "movie"])}
        np.testing.assert_array_equal(encode_and_pad(["good", "bad"], vocab, 4), [2, 1, 0, 0])

    def test_truncate(self):
        vocab = {t: i for i, t in enumerate(["<pad>", "<unk>", "a"])}
        np.testing.assert_array_equal(encode_and_pad(["a"] * 5, vocab, 3), [2, 2, 2])


class TestDatasetFiles:
    def test_load_basic(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("good movie\t1\nBad plot.\t0\n", encoding="utf-8")
        ds = load_dataset(p)
        assert ds.samples == [(["good", "movie"], 1), (["bad", "plot"], 0)]
        assert ds.class_names == ["0", "1"]

    def test_header_names(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("#classes: NEG,POS\ngood movie\tPOS\nbad\t0\n", encoding="utf-8")
        ds = load_dataset(p)
        assert [lab for _, lab in ds.samples] == [1, 0]

    def test_malformed_line_number(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("good\t1\nno label here\n", encoding="utf-8")
        with pytest.raises(DatasetError, match=r"d\.tsv:2"):
            load_dataset(p)

    def test_unknown_label(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("#classes: NEG,POS\ngood\tMAYBE\n", encoding="utf-8")
        with pytest.raises(DatasetError, match="unknown label 'MAYBE'"):
            load_dataset(p)

    def test_empty_sentence_dropped(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("?!\t1\nok\t0\n", encoding="utf-8")
        assert len(load_dataset(p)) == 1

    def test_roundtrip(self, tmp_path):
        ds = Dataset([(["a", "b"], 1), (["c"], 0)], ["NEG", "POS"])
        p = tmp_path / "d.tsv"
        save_dataset(ds, p)
        back = load_dataset(p)
        assert back.samples == ds.samples and back.class_names == ds.class_names

    def test_split_is_seeded_partition(self):
        ds = Dataset([([str(i)], i % 2) for i in range(10)], ["A", "B"])
        a1, b1 = ds.split(0.8, seed=3)
        a2, b2 = ds.split(0.8, seed=3)
        assert a1.samples == a2.samples and len(a1) == 8 and len(b1) == 2
        assert sorted(t[0] for t, _ in a1.samples + b1.samples) == sorted(str(i) for i in range(10))


class TestModelFiles:
    def test_roundtrip_bit_identical(self, rng, tmp_path):
        m = make_random_model(rng, hidden=(4, 3))
        p = tmp_path / "m.json"
        save_model(m, p)
        back = load_model(p)
        for a, b in [(m.embedding, back.embedding)] + [
            (x.filters, y.filters) for x, y in zip(m.channels, back.channels)
        ]:
            assert a.tobytes() == b.tobytes()
        for _ in range(20):
            ids = random_ids(rng, m)
            assert forward(m, ids).output.tobytes() == forward(back, ids).output.tobytes()

    def test_corrupt_field_names_path(self, rng):
        doc = model_to_dict(make_random_model(rng))
        doc["channels"][0]["filters"] = "oops"
        with pytest.raises(ModelFormatError, match=r"m\.json: channels\[0\]\.filters"):
            model_from_dict(doc, "m.json")

    def test_missing_field(self, rng):
        doc = model_to_dict(make_random_model(rng))
        del doc["dense"][1]["biases"]
        with pytest.raises(ModelFormatError, match=r"dense\[1\].*biases"):
            model_from_dict(doc, "m.json")

    def test_version_mismatch(self, rng):
        doc = model_to_dict(make_random_model(rng))
        doc["format_version"] = 2
        with pytest.raises(ModelFormatError, match="format_version"):
            model_from_dict(doc)

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text("{not json", encoding="utf-8")
        with pytest.raises(ModelFormatError, match="invalid JSON"):
            load_model(p)

    def test_json_is_plain(self, rng, tmp_path):
        p = tmp_path / "m.json"
        save_model(make_random_model(rng), p)
        doc = json.loads(p.read_text())
        assert doc["format_version"] == 1 and doc["pad_token"] == "<pad>"


@pytest.mark.slow
def test_trained_model_explains_identically(trained_toy, tmp_path):
    m = trained_toy["model"]
    p = tmp_path / "toy.json"
    save_model(m, p)
    back = load_model(p)
    for tokens, _ in trained_toy["test"].samples[:20]:
        ids = encode_for_model(m, tokens)
        a, b = explain(m, ids), explain(back, ids)
        assert a.relevance.values.tobytes() == b.relevance.values.tobytes()
        assert [u.key for u in a.sets.sufficient] == [u.key for u in b.sets.sufficient]
        assert [u.key for u in a.sets.necessary] == [u.key for u in b.sets.necessary]


def test_toy_corpus_is_seeded(tmp_path):
    a, b = make_sentiment_corpus(50, seed=2), make_sentiment_corpus(50, seed=2)
    assert a.samples == b.samples and a.class_names == ["NEG", "POS"]
    assert {lab for _, lab in a.samples} == {0, 1}
    assert toydata_main([str(tmp_path / "t.tsv"), "20", "1"]) == 0
    assert len(load_dataset(tmp_path / "t.tsv")) == 20
