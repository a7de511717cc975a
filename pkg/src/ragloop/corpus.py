"""Corpus ingestion: JSONL parsing, token-window chunking, inverted index,
and on-disk persistence under a data directory.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import (
    CorruptIndex,
    DuplicateCorpus,
    DuplicateDocumentId,
    EmptyCorpus,
    InvalidChunking,
    InvalidCorpusId,
    InvalidDocument,
    UnknownCorpus,
)

INDEX_MAGIC = "ragloop-index v1"
DEFAULT_MAX_TOKENS = 100
DEFAULT_OVERLAP = 20

# Index terms: lowercased runs of Unicode alphanumerics (underscore excluded).
TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
# Chunk boundaries: whitespace-delimited tokens of the raw text.
WHITESPACE_TOKEN_RE = re.compile(r"\S+")
CORPUS_ID_RE = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]{0,63}")


def tokenize(text: str) -> list[str]:
    """Terms used for indexing and scoring."""
    return TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class CorpusDocument:
    document_id: str
    title: str
    text: str
    metadata: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Passage:
    document_id: str
    passage_id: str
    title: str
    text: str


@dataclass(frozen=True)
class Chunking:
    max_tokens: int = DEFAULT_MAX_TOKENS
    overlap: int = DEFAULT_OVERLAP

    def check(self) -> "Chunking":
        if self.max_tokens < 1:
            raise InvalidChunking("max_tokens must be >= 1")
        if not 0 <= self.overlap < self.max_tokens:
            raise InvalidChunking("overlap must satisfy 0 <= overlap < max_tokens")
        return self


@dataclass(frozen=True)
class CorpusIndex:
    """Immutable BM25 inverted index over passages.

    Postings map each term to ((passage ordinal, term frequency), ...) with
    ordinals ascending. doc_lengths counts index terms per passage.
    """

    corpus_id: str
    passages: tuple[Passage, ...]
    postings: Mapping[str, tuple[tuple[int, int], ...]]
    doc_lengths: tuple[int, ...]
    document_count: int

    @property
    def passage_count(self) -> int:
        return len(self.passages)

    @property
    def avg_doc_length(self) -> float:
        return sum(self.doc_lengths) / len(self.doc_lengths)

    @property
    def vocabulary_size(self) -> int:
        return len(self.postings)

    def stats(self) -> dict:
        return {
            "corpus_id": self.corpus_id,
            "document_count": self.document_count,
            "passage_count": self.passage_count,
            "vocabulary_size": self.vocabulary_size,
            "avg_doc_length": self.avg_doc_length,
        }


def chunk_document(doc: CorpusDocument, chunking: Chunking) -> list[Passage]:
    """Split a document into windows of at most max_tokens whitespace tokens,
    consecutive windows sharing `overlap` tokens. Passage text is the original
    substring spanning the window, so no characters are invented or lost
    inside a window."""
    spans = [m.span() for m in WHITESPACE_TOKEN_RE.finditer(doc.text)]
    if not spans:
        raise InvalidDocument(f"document {doc.document_id!r} has no tokens")
    passages = []
    start = 0
    k = 0
    while True:
        end = min(start + chunking.max_tokens, len(spans))
        passages.append(Passage(
            document_id=doc.document_id,
            passage_id=f"{doc.document_id}::{k}",
            title=doc.title,
            text=doc.text[spans[start][0]:spans[end - 1][1]],
        ))
        if start + chunking.max_tokens >= len(spans):
            break
        start += chunking.max_tokens - chunking.overlap
        k += 1
    return passages


def parse_corpus_jsonl(data: bytes | str) -> list[CorpusDocument]:
    """One JSON object per line: document_id, text, optional title/metadata."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    documents = []
    seen: set[str] = set()
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InvalidDocument(f"line {lineno}: not valid JSON ({exc})") from None
        if not isinstance(obj, dict):
            raise InvalidDocument(f"line {lineno}: expected an object")
        unknown = set(obj) - {"document_id", "title", "text", "metadata"}
        if unknown:
            raise InvalidDocument(f"line {lineno}: unknown key {sorted(unknown)[0]!r}")
        document_id = obj.get("document_id")
        if not isinstance(document_id, str) or not document_id:
            raise InvalidDocument(f"line {lineno}: document_id must be a non-empty string")
        if document_id in seen:
            raise DuplicateDocumentId(f"line {lineno}: duplicate document_id {document_id!r}")
        seen.add(document_id)
        text = obj.get("text")
        if not isinstance(text, str) or not text.strip():
            raise InvalidDocument(f"line {lineno}: text must be a non-empty string")
        title = obj.get("title", "")
        if not isinstance(title, str):
            raise InvalidDocument(f"line {lineno}: title must be a string")
        metadata = obj.get("metadata", {})
        if (not isinstance(metadata, dict)
                or any(not isinstance(v, str) for v in metadata.values())):
            raise InvalidDocument(f"line {lineno}: metadata must map strings to strings")
        documents.append(CorpusDocument(document_id=document_id, title=title,
                                        text=text, metadata=metadata))
    return documents


def build_index(corpus_id: str, documents: Iterable[CorpusDocument],
                chunking: Chunking = Chunking()) -> CorpusIndex:
    if not CORPUS_ID_RE.fullmatch(corpus_id):
        raise InvalidCorpusId(
            f"corpus id {corpus_id!r} must be 1-64 filename-safe characters")
    chunking.check()
    passages: list[Passage] = []
    seen_ids: set[str] = set()
    document_count = 0
    for doc in documents:
        if doc.document_id in seen_ids:
            raise DuplicateDocumentId(f"duplicate document_id {doc.document_id!r}")
        seen_ids.add(doc.document_id)
        document_count += 1
        passages.extend(chunk_document(doc, chunking))
    if not passages:
        raise EmptyCorpus(f"corpus {corpus_id!r} has no documents")
    postings_acc: dict[str, list[tuple[int, int]]] = {}
    doc_lengths = []
    for ordinal, passage in enumerate(passages):
        terms = tokenize(passage.text)
        doc_lengths.append(len(terms))
        counts: dict[str, int] = {}
        for term in terms:
            counts[term] = counts.get(term, 0) + 1
        for term, tf in counts.items():
            postings_acc.setdefault(term, []).append((ordinal, tf))
    postings = {term: tuple(entries) for term, entries in postings_acc.items()}
    return CorpusIndex(corpus_id=corpus_id, passages=tuple(passages),
                       postings=postings, doc_lengths=tuple(doc_lengths),
                       document_count=document_count)


def idf(index: CorpusIndex, term: str) -> float:
    """Non-negative BM25 idf: ln(1 + (N - df + 0.5) / (df + 0.5))."""
    df = len(index.postings.get(term, ()))
    n = index.passage_count
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def index_to_bytes(index: CorpusIndex) -> bytes:
    body = {
        "corpus_id": index.corpus_id,
        "document_count": index.document_count,
        "passages": [[p.document_id, p.passage_id, p.title, p.text]
                     for p in index.passages],
        "doc_lengths": list(index.doc_lengths),
        "postings": {term: [list(e) for e in entries]
                     for term, entries in sorted(index.postings.items())},
    }
    return (INDEX_MAGIC + "\n" + json.dumps(body, ensure_ascii=False)).encode("utf-8")


def index_from_bytes(data: bytes, expected_corpus_id: str | None = None) -> CorpusIndex:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise CorruptIndex("index file is not UTF-8") from None
    header, sep, body = text.partition("\n")
    if header != INDEX_MAGIC or not sep:
        raise CorruptIndex(f"bad index header {header[:40]!r}")
    try:
        obj = json.loads(body)
    except json.JSONDecodeError as exc:
        raise CorruptIndex(f"index body is not valid JSON: {exc}") from None
    try:
        passages = tuple(Passage(document_id=p[0], passage_id=p[1],
                                 title=p[2], text=p[3])
                         for p in obj["passages"])
        index = CorpusIndex(
            corpus_id=obj["corpus_id"],
            passages=passages,
            postings={term: tuple((int(o), int(tf)) for o, tf in entries)
                      for term, entries in obj["postings"].items()},
            doc_lengths=tuple(int(n) for n in obj["doc_lengths"]),
            document_count=int(obj["document_count"]),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise CorruptIndex(f"index body has wrong shape: {exc}") from None
    if expected_corpus_id is not None and index.corpus_id != expected_corpus_id:
        raise CorruptIndex(f"index names corpus {index.corpus_id!r}, "
                           f"expected {expected_corpus_id!r}")
    if len(index.doc_lengths) != len(index.passages) or not index.passages:
        raise CorruptIndex("index statistics are inconsistent")
    for entries in index.postings.values():
        for ordinal, tf in entries:
            if not (0 <= ordinal < len(index.passages)) or tf < 1:
                raise CorruptIndex("posting refers to a missing passage")
    return index


class CorpusStore:
    """Corpus indexes persisted as files under <data_dir>/corpora."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)

    def _path(self, corpus_id: str) -> Path:
        if not CORPUS_ID_RE.fullmatch(corpus_id):
            raise InvalidCorpusId(
                f"corpus id {corpus_id!r} must be 1-64 filename-safe characters")
        return self.data_dir / "corpora" / f"{corpus_id}.index"

    def exists(self, corpus_id: str) -> bool:
        return self._path(corpus_id).exists()

    def ingest(self, corpus_id: str, documents: Iterable[CorpusDocument],
               chunking: Chunking = Chunking()) -> CorpusIndex:
        path = self._path(corpus_id)
        if path.exists():
            raise DuplicateCorpus(f"corpus {corpus_id!r} already exists")
        index = build_index(corpus_id, documents, chunking)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(index_to_bytes(index))
        return index

    def get(self, corpus_id: str) -> CorpusIndex:
        path = self._path(corpus_id)
        if not path.exists():
            raise UnknownCorpus(f"no corpus named {corpus_id!r}")
        return index_from_bytes(path.read_bytes(), expected_corpus_id=corpus_id)

    def list(self) -> list[dict]:
        root = self.data_dir / "corpora"
        if not root.is_dir():
            return []
        out = []
        for path in sorted(root.glob("*.index")):
            out.append(index_from_bytes(path.read_bytes()).stats())
        return out
