"""BM25 search over embedded indexes, query formulation from conversations,
and an HTTP adapter for remote retrievers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import requests

from .conversation import Conversation, ContextPassage, Message, RetrieverConfig, messages_of
from .corpus import CorpusIndex, CorpusStore, idf, tokenize
from .errors import EmptyConversation, MissingManualText, RetrieverUnavailable

REMOTE_TIMEOUT_S = 30.0


@dataclass(frozen=True)
class SearchHit:
    document_id: str
    passage_id: str
    title: str
    text: str
    score: float


def search(index: CorpusIndex, query: str, top_k: int = 5,
           k1: float = 1.2, b: float = 0.75) -> list[SearchHit]:
    """BM25 ranking: up to top_k positive-score passages ordered by
    (score desc, document_id asc, passage_id asc).

    Scores accumulate in query-token order (repeated query terms contribute
    once per occurrence), which fixes the float summation order and makes
    results bit-reproducible.
    """
    avgdl = index.avg_doc_length
    scores: dict[int, float] = {}
    for term in tokenize(query):
        entries = index.postings.get(term)
        if not entries:
            continue
        term_idf = idf(index, term)
        for ordinal, tf in entries:
            dl = index.doc_lengths[ordinal]
            contribution = term_idf * (tf * (k1 + 1.0)) / (
                tf + k1 * (1.0 - b + b * dl / avgdl))
            scores[ordinal] = scores.get(ordinal, 0.0) + contribution
    ranked = sorted(
        (ordinal for ordinal, score in scores.items() if score > 0.0),
        key=lambda o: (-scores[o], index.passages[o].document_id,
                       index.passages[o].passage_id),
    )
    hits = []
    for ordinal in ranked[:top_k]:
        passage = index.passages[ordinal]
        hits.append(SearchHit(document_id=passage.document_id,
                              passage_id=passage.passage_id,
                              title=passage.title, text=passage.text,
                              score=scores[ordinal]))
    return hits


def formulate_query(conv: Conversation | Sequence[Message], strategy: str,
                    manual_text: str | None = None) -> str:
    messages = messages_of(conv)
    if strategy == "manual":
        if manual_text is None:
            raise MissingManualText("manual strategy requires manual_text")
        return manual_text
    if not any(m.is_user for m in messages):
        raise EmptyConversation("query formulation needs at least one user turn")
    if strategy == "last_user_turn":
        return next(m.text for m in reversed(messages) if m.is_user)
    if strategy == "concat_user_turns":
        return " ".join(m.text for m in messages if m.is_user)
    if strategy == "full_history":
        return " ".join(m.text for m in messages)
    raise ValueError(f"unknown query strategy {strategy!r}")


def _remote_search(config: RetrieverConfig, query: str, top_k: int) -> list[SearchHit]:
    remote = config.remote
    assert remote is not None
    headers = {}
    if remote.auth_token_env:
        token = os.environ.get(remote.auth_token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
    try:
        response = requests.post(remote.endpoint,
                                 json={"query": query, "top_k": top_k},
                                 headers=headers, timeout=REMOTE_TIMEOUT_S)
    except requests.RequestException as exc:
        raise RetrieverUnavailable(f"retriever request failed: {exc}") from None
    if response.status_code != 200:
        raise RetrieverUnavailable(
            f"retriever returned HTTP {response.status_code}",
            status=response.status_code)
    try:
        payload = response.json()
        raw_hits = payload["hits"]
        assert isinstance(raw_hits, list)
    except Exception:
        raise RetrieverUnavailable(
            "retriever response is not an object with a 'hits' array") from None
    mapping = dict(remote.field_mapping)
    hits = []
    for i, raw in enumerate(raw_hits[:top_k]):
        if not isinstance(raw, dict):
            raise RetrieverUnavailable(f"retriever hit {i} is not an object")

        def pick(name: str, default=None):
            return raw.get(mapping.get(name, name), default)

        document_id = pick("document_id")
        text = pick("text")
        if not isinstance(document_id, str) or not isinstance(text, str):
            raise RetrieverUnavailable(
                f"retriever hit {i} lacks document_id/text after field mapping")
        passage_id = pick("passage_id", document_id)
        title = pick("title", "")
        score = pick("score", 0.0)
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise RetrieverUnavailable(f"retriever hit {i} has a non-numeric score")
        hits.append(SearchHit(document_id=document_id, passage_id=str(passage_id),
                              title=str(title), text=text, score=float(score)))
    return hits


def side_search(config: RetrieverConfig, query: str, top_k: int | None = None,
                store: CorpusStore | None = None) -> list[SearchHit]:
    """Free-form search against whatever the conversation's retriever points at."""
    k = top_k if top_k is not None else config.top_k
    if config.engine == "embedded_bm25":
        if store is None:
            raise RetrieverUnavailable("no corpus store configured")
        index = store.get(config.corpus_id)
        return search(index, query, top_k=k, k1=config.bm25_k1, b=config.bm25_b)
    return _remote_search(config, query, k)


def hit_to_context(hit: SearchHit, source: str = "retrieved") -> ContextPassage:
    return ContextPassage(document_id=hit.document_id, passage_id=hit.passage_id,
                          title=hit.title, text=hit.text, score=hit.score,
                          source=source)


def retrieve(config: RetrieverConfig, conv: Conversation | Sequence[Message],
             store: CorpusStore | None = None,
             manual_text: str | None = None) -> list[ContextPassage]:
    """Run the conversation's retriever for its pending user turn."""
    query = formulate_query(conv, config.query_strategy, manual_text)
    hits = side_search(config, query, top_k=config.top_k, store=store)
    return [hit_to_context(hit, source="retrieved") for hit in hits]
