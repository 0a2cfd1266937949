import math
import struct

import numpy as np
import pytest

from k4logad import embedding
from k4logad.embedding import (
    EmbeddingFormatError,
    TfidfVocab,
    embed_tfidf,
    embed_tfidf_many,
    fit_tfidf,
    load_external,
    read_k4em,
    tokenize,
    write_k4em,
)

TWO_DOCS = ["error disk fail", "disk ok"]


# -- tokenizer ---------------------------------------------------------------


def test_tokenize_drops_digits_and_splits():
    assert tokenize("blk_-123") == ["blk"]
    assert tokenize("Error at 17:40:23 on node7") == ["error", "at", "on", "node7"]
    assert tokenize("123 456") == []


def test_tokenize_case():
    assert tokenize("DISK Fail") == ["disk", "fail"]
    assert tokenize("DISK Fail", lowercase=False) == ["DISK", "Fail"]


# -- idf fitting -------------------------------------------------------------


def test_idf_two_doc_example():
    vocab = fit_tfidf(TWO_DOCS)
    assert set(vocab.terms) == {"disk", "error", "fail", "ok"}
    assert vocab.idf[vocab.terms["disk"]] == pytest.approx(1.0)
    for term in ("error", "fail", "ok"):
        assert vocab.idf[vocab.terms[term]] == pytest.approx(
            math.log(1.5) + 1.0, abs=1e-4
        )


def test_max_features_lexicographic_ties():
    vocab = fit_tfidf(TWO_DOCS, max_features=2)
    # disk has df=2; among the df=1 ties, "error" sorts first
    assert set(vocab.terms) == {"disk", "error"}


def test_fit_columns_lexicographic():
    vocab = fit_tfidf(TWO_DOCS)
    ordered = sorted(vocab.terms, key=vocab.terms.get)
    assert ordered == sorted(ordered)


def test_fit_order_independent():
    a = fit_tfidf(TWO_DOCS)
    b = fit_tfidf(list(reversed(TWO_DOCS)))
    assert a.terms == b.terms
    np.testing.assert_array_equal(a.idf, b.idf)


def test_fit_empty_corpus():
    with pytest.raises(ValueError):
        fit_tfidf([])


# -- embedding ---------------------------------------------------------------


def test_embed_worked_example():
    vocab = fit_tfidf(TWO_DOCS)
    row = embed_tfidf(vocab, "error disk fail")
    got = {t: row[i] for t, i in vocab.terms.items()}
    assert got["disk"] == pytest.approx(0.4494, abs=1e-4)
    assert got["error"] == pytest.approx(0.6317, abs=1e-4)
    assert got["fail"] == pytest.approx(0.6317, abs=1e-4)
    assert got["ok"] == 0.0


def test_embed_oov_zero_vector():
    vocab = fit_tfidf(TWO_DOCS)
    row = embed_tfidf(vocab, "totally unseen words 99")
    assert not row.any()


def test_embed_repeated_doc_same_direction():
    vocab = fit_tfidf(TWO_DOCS)
    once = embed_tfidf(vocab, "error disk fail")
    twice = embed_tfidf(vocab, "error disk fail error disk fail")
    np.testing.assert_allclose(once, twice, atol=1e-12)


def test_embed_unit_norm():
    vocab = fit_tfidf(TWO_DOCS)
    m = embed_tfidf_many(vocab, ["disk error", "ok", "fail fail disk"])
    norms = np.linalg.norm(m, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-9)


def test_embed_never_grows_vocab():
    vocab = fit_tfidf(TWO_DOCS)
    before = dict(vocab.terms)
    embed_tfidf(vocab, "brand new tokens here")
    assert vocab.terms == before


def test_vocab_csv_roundtrip(tmp_path):
    vocab = fit_tfidf(TWO_DOCS)
    path = tmp_path / "vocab.csv"
    vocab.save_csv(str(path))
    loaded = TfidfVocab.load_csv(str(path))
    assert loaded.terms == vocab.terms
    np.testing.assert_array_equal(loaded.idf, vocab.idf)
    np.testing.assert_array_equal(loaded.df, vocab.df)


# -- K4EM container ----------------------------------------------------------


def test_k4em_roundtrip(tmp_path):
    m = np.arange(6, dtype=np.float64).reshape(2, 3)
    ids = [(0, 10), (0, 15)]
    path = tmp_path / "e.k4em"
    write_k4em(str(path), m, ids)
    back, back_ids = read_k4em(str(path))
    np.testing.assert_array_equal(back, m)
    assert back_ids == ids


def test_k4em_deterministic_bytes(tmp_path):
    m = np.random.default_rng(0).normal(size=(4, 5))
    a, b = tmp_path / "a", tmp_path / "b"
    write_k4em(str(a), m, [(0, i) for i in range(4)])
    write_k4em(str(b), m, [(0, i) for i in range(4)])
    assert a.read_bytes() == b.read_bytes()


def test_k4em_bad_magic(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(b"NOPE" + b"\x00" * 30)
    with pytest.raises(EmbeddingFormatError):
        read_k4em(str(p))


def test_k4em_bad_version(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(b"K4EM" + struct.pack("<I", 99) + struct.pack("<QQ", 0, 0))
    with pytest.raises(EmbeddingFormatError):
        read_k4em(str(p))


def test_k4em_truncated_payload(tmp_path):
    p = tmp_path / "ok"
    write_k4em(str(p), np.ones((2, 3)), [(0, 0), (0, 1)])
    blob = p.read_bytes()
    p.write_bytes(blob[:-1])  # 47 of 48 payload+id bytes remaining at the tail
    with pytest.raises(EmbeddingFormatError):
        read_k4em(str(p))


def test_k4em_rejects_nan(tmp_path):
    p = tmp_path / "nan"
    m = np.ones((2, 2))
    m[0, 0] = np.nan
    # writing succeeds (container is dumb); reading validates
    write_k4em(str(p), m, [(0, 0), (0, 1)])
    with pytest.raises(EmbeddingFormatError):
        read_k4em(str(p))


def test_load_external_manifest_alignment(tmp_path):
    p = tmp_path / "e.k4em"
    write_k4em(str(p), np.ones((1, 2)), [(0, 40)])
    manifest = [{"chunk_id": 0, "start": 40}]
    m, ids = load_external(str(p), manifest)
    assert ids == [(0, 40)]
    with pytest.raises(EmbeddingFormatError, match=r"\(0, 40\)"):
        load_external(str(p), [{"chunk_id": 0, "start": 99}])


def test_write_k4em_id_count_mismatch(tmp_path):
    with pytest.raises(ValueError):
        write_k4em(str(tmp_path / "x"), np.ones((2, 2)), [(0, 0)])
