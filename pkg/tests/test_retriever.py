import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfqa.errors import DuplicateId, EmptyCorpus, FormatError, IndexFormatError
from lfqa.retriever import BM25Retriever, Chunk, build_index, idf, ingest, load_index, save_index, search, tokenize
from oracles import bm25_rank

VOCAB = ["alpha", "beta", "gamma", "delta", "honey", "badger", "texans", "1947", "film", "x"]

words = st.lists(st.sampled_from(VOCAB), min_size=1, max_size=12).map(" ".join)
corpora = st.lists(st.tuples(words, words), min_size=1, max_size=100).map(
    lambda docs: [Chunk(f"d{i:03d}", t, c) for i, (t, c) in enumerate(docs)])
queries = st.lists(st.sampled_from(VOCAB + ["missing"]), min_size=1, max_size=5).map(" ".join)


def write_jsonl(path, rows):
    path.write_text("".join((r if isinstance(r, str) else json.dumps(r)) + "\n" for r in rows))
    return path


def test_tokenize():
    assert tokenize("Hit Parade Of 1947, it's_fine!") == ["hit", "parade", "of", "1947", "it", "s", "fine"]
    assert tokenize("Schrödinger") == ["schrödinger"]


def test_idf_is_positive_even_for_common_terms():
    assert idf(10, 10) > 0
    assert idf(10, 1) > idf(10, 5)


def test_search_fixture_corpus(retriever):
    hits = retriever.search("Who does the Honey Badger play for?", 3)
    assert len(hits) == 3
    assert hits[0][0].id in {"badger-1", "mathieu-1"}
    scores = [s for _, s in hits]
    assert scores == sorted(scores, reverse=True)


def test_zero_score_docs_are_not_returned():
    idx = build_index([Chunk("a", "t", "alpha"), Chunk("b", "t", "beta")])
    assert [c.id for c, _ in search(idx, "alpha", 5)] == ["a"]
    assert search(idx, "nothing here", 5) == []
    with pytest.raises(ValueError):
        search(idx, "alpha", 0)


def test_title_is_indexed():
    idx = build_index([Chunk("a", "Khiladi 420", "a film"), Chunk("b", "Other", "a film")])
    assert search(idx, "khiladi", 2)[0][0].id == "a"


def test_ties_break_by_id():
    idx = build_index([Chunk("b", "", "same words"), Chunk("a", "", "same words"), Chunk("c", "", "same words")])
    assert [c.id for c, _ in search(idx, "same", 3)] == ["a", "b", "c"]


def test_repeated_query_terms_count_once():
    idx = build_index([Chunk("a", "", "alpha beta"), Chunk("b", "", "beta x")])
    assert search(idx, "alpha alpha alpha", 2) == search(idx, "alpha", 2)


def test_ingest_and_errors(tmp_path):
    good = write_jsonl(tmp_path / "c.jsonl", [{"id": "1", "title": "t", "contents": "c", "extra": 1}, ""])
    assert ingest(good) == [Chunk("1", "t", "c")]
    cases = [
        ('{"id": "1", "title": "t"', FormatError),
        ('[1, 2]', FormatError),
        ({"id": 1, "title": "t", "contents": "c"}, FormatError),
        ({"id": "1", "title": "t", "contents": ""}, FormatError),
        ({"id": "1", "contents": "c"}, FormatError),
    ]
    for row, exc in cases:
        p = write_jsonl(tmp_path / "bad.jsonl", [{"id": "0", "title": "t", "contents": "c"}, row])
        with pytest.raises(exc) as ei:
            ingest(p)
        assert ei.value.line == 2
    dup = write_jsonl(tmp_path / "dup.jsonl", [{"id": "1", "title": "t", "contents": "c"}] * 2)
    with pytest.raises(DuplicateId):
        ingest(dup)
    with pytest.raises(EmptyCorpus):
        build_index(ingest(write_jsonl(tmp_path / "empty.jsonl", [])))


def test_persistence_round_trip(tmp_path, corpus_path):
    idx = build_index(ingest(corpus_path))
    save_index(idx, tmp_path / "i.json")
    loaded = load_index(tmp_path / "i.json")
    assert loaded == idx
    q = "director of Khiladi 420 death"
    assert search(loaded, q, 5) == search(idx, q, 5)


def test_load_index_rejects_other_files(tmp_path):
    (tmp_path / "a.json").write_text("not json")
    with pytest.raises(IndexFormatError):
        load_index(tmp_path / "a.json")
    (tmp_path / "b.json").write_text('{"format": "something-else"}')
    with pytest.raises(IndexFormatError):
        load_index(tmp_path / "b.json")
    (tmp_path / "c.json").write_text('{"format": "lfqa-bm25-index", "version": 99}')
    with pytest.raises(IndexFormatError):
        load_index(tmp_path / "c.json")


@settings(max_examples=50, deadline=None)
@given(corpora, st.lists(queries, min_size=1, max_size=5), st.integers(1, 20))
def test_matches_brute_force(corpus, qs, k):
    r = BM25Retriever(build_index(corpus))
    docs = [(c.id, c.title, c.contents) for c in corpus]
    for q in qs:
        got = [(c.id, s) for c, s in r.search(q, k)]
        want = bm25_rank(docs, q)[:k]
        assert [i for i, _ in got] == [i for i, _ in want]
        assert all(abs(a - b) < 1e-9 for (_, a), (_, b) in zip(got, want))
