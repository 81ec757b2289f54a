"""Lexical BM25 retrieval over a JSONL chunk corpus.

Corpus lines look like ``{"id": ..., "title": ..., "contents": ...}``.
Titles are indexed together with the body. Tokens are lowercase runs of
letters/digits; no stemming or stopwords.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol, Sequence

from .errors import DuplicateId, EmptyCorpus, FormatError, IndexFormatError

K1 = 1.2
B = 0.75
INDEX_FORMAT = "lfqa-bm25-index"
INDEX_VERSION = 1

_TOKEN = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class Chunk:
    id: str
    title: str
    contents: str

    def to_dict(self) -> dict[str, str]:
        return {"id": self.id, "title": self.title, "contents": self.contents}


ScoredChunk = tuple[Chunk, float]


class Retriever(Protocol):
    """Anything that can return the top-k chunks for a query.

    ``action`` carries the structured logical form for backends that use it;
    the lexical index ignores it.
    """

    def search(self, query: str, k: int, action: Any = None) -> list[ScoredChunk]: ...


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def ingest(path: str | Path) -> list[Chunk]:
    chunks: list[Chunk] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(lineno, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise FormatError(lineno, "expected a JSON object")
            for key in ("id", "title", "contents"):
                if not isinstance(rec.get(key), str):
                    raise FormatError(lineno, f"missing or non-string {key!r}")
            if not rec["contents"]:
                raise FormatError(lineno, "empty contents")
            if rec["id"] in seen:
                raise DuplicateId(rec["id"], lineno)
            seen.add(rec["id"])
            chunks.append(Chunk(rec["id"], rec["title"], rec["contents"]))
    return chunks


@dataclass(frozen=True)
class Index:
    chunks: tuple[Chunk, ...]
    doc_lens: tuple[int, ...]
    avg_doc_len: float
    # term -> ((doc, tf), ...) with doc ascending
    postings: dict[str, tuple[tuple[int, int], ...]]

    @property
    def doc_count(self) -> int:
        return len(self.chunks)


def build_index(corpus: Sequence[Chunk]) -> Index:
    if not corpus:
        raise EmptyCorpus("cannot index an empty corpus")
    postings: dict[str, list[tuple[int, int]]] = {}
    lens = []
    for doc, chunk in enumerate(corpus):
        toks = tokenize(chunk.title) + tokenize(chunk.contents)
        lens.append(len(toks))
        for term, tf in Counter(toks).items():
            postings.setdefault(term, []).append((doc, tf))
    return Index(
        chunks=tuple(corpus),
        doc_lens=tuple(lens),
        avg_doc_len=sum(lens) / len(lens),
        postings={t: tuple(p) for t, p in sorted(postings.items())},
    )


def idf(n_docs: int, df: int) -> float:
    return math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)


def search(index: Index, query: str, k: int) -> list[ScoredChunk]:
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = list(dict.fromkeys(tokenize(query)))
    n = index.doc_count
    avgdl = index.avg_doc_len
    scores: dict[int, float] = {}
    for term in terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        w = idf(n, len(plist))
        for doc, tf in plist:
            norm = K1 * (1.0 - B + B * index.doc_lens[doc] / avgdl)
            scores[doc] = scores.get(doc, 0.0) + w * (tf * (K1 + 1.0)) / (tf + norm)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], index.chunks[kv[0]].id))
    return [(index.chunks[d], s) for d, s in ranked[:k]]


class BM25Retriever:
    def __init__(self, index: Index):
        self.index = index

    @classmethod
    def from_corpus(cls, path: str | Path) -> "BM25Retriever":
        return cls(build_index(ingest(path)))

    def search(self, query: str, k: int, action: Any = None) -> list[ScoredChunk]:
        return search(self.index, query, k)


# -- persistence ---------------------------------------------------------------------


def save_index(index: Index, path: str | Path) -> None:
    doc = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "k1": K1,
        "b": B,
        "doc_count": index.doc_count,
        "avg_doc_len": index.avg_doc_len,
        "chunks": [c.to_dict() for c in index.chunks],
        "doc_lens": list(index.doc_lens),
        "postings": {t: [list(p) for p in pl] for t, pl in index.postings.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, sort_keys=True)
        fh.write("\n")


def load_index(path: str | Path) -> Index:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IndexFormatError(f"{path}: not JSON") from exc
    if not isinstance(doc, dict) or doc.get("format") != INDEX_FORMAT:
        raise IndexFormatError(f"{path}: not an index file")
    if doc.get("version") != INDEX_VERSION:
        raise IndexFormatError(f"{path}: unsupported index version {doc.get('version')!r}")
    return Index(
        chunks=tuple(Chunk(**c) for c in doc["chunks"]),
        doc_lens=tuple(doc["doc_lens"]),
        avg_doc_len=float(doc["avg_doc_len"]),
        postings={t: tuple((int(d), int(tf)) for d, tf in pl) for t, pl in doc["postings"].items()},
    )
