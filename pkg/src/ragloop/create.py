"""Create-mode editing lifecycle: relevance marking, side-search passage
insertion, response repair with word-level diffs, response-to-passage overlap
highlighting, reminder hints, and the export checklist.

All operations are pure: they take a Conversation and return a new one.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Sequence

from .conversation import (
    RELEVANCE,
    Conversation,
    ContextPassage,
    EnrichmentSet,
    Message,
    Revision,
    serialize_conversation,
    utc_now_iso,
)
from .corpus import CorpusStore
from .errors import (
    DuplicateContext,
    EmptyResponse,
    IdenticalText,
    IndexOutOfRange,
    NotAgentTurn,
    NotUserTurn,
    SchemaViolation,
)
from .generation import GenerationResult, generate, render_prompt
from .retrieval import SearchHit, hit_to_context

NORMALIZED_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

CHECKLIST_LABELS = (
    "Questions reflect realistic information needs",
    "Passage relevance was reviewed for every response",
    "Responses are grounded in the marked passages",
    "Enrichment labels were added for every question",
)


def _agent_message(conv: Conversation, turn_index: int) -> Message:
    if not 0 <= turn_index < len(conv.messages):
        raise IndexOutOfRange(f"no message at index {turn_index}")
    message = conv.messages[turn_index]
    if not message.is_agent:
        raise NotAgentTurn(f"message {turn_index} is a user turn")
    return message


def _user_message(conv: Conversation, turn_index: int) -> Message:
    if not 0 <= turn_index < len(conv.messages):
        raise IndexOutOfRange(f"no message at index {turn_index}")
    message = conv.messages[turn_index]
    if not message.is_user:
        raise NotUserTurn(f"message {turn_index} is an agent turn")
    return message


def _swap_message(conv: Conversation, turn_index: int, message: Message) -> Conversation:
    messages = list(conv.messages)
    messages[turn_index] = message
    return replace(conv, messages=tuple(messages))


def _with_editor(conv: Conversation, editor: str) -> Conversation:
    participants = conv.participants
    if editor == participants.author or editor in participants.editors:
        return conv
    return replace(conv, participants=replace(
        participants, editors=participants.editors + (editor,)))


# ---------------------------------------------------------------------------
# Edit operations
# ---------------------------------------------------------------------------

def edit_passage_relevance(conv: Conversation, turn_index: int,
                           context_ordinal: int, relevance: str) -> Conversation:
    if relevance not in RELEVANCE:
        raise SchemaViolation(f"{relevance!r} is not one of {list(RELEVANCE)}",
                              path="relevance")
    message = _agent_message(conv, turn_index)
    contexts = list(message.contexts or ())
    if not 0 <= context_ordinal < len(contexts):
        raise IndexOutOfRange(
            f"message {turn_index} has no context {context_ordinal}")
    contexts[context_ordinal] = replace(contexts[context_ordinal],
                                        relevance=relevance)
    return _swap_message(conv, turn_index,
                         replace(message, contexts=tuple(contexts)))


def add_searched_passage(conv: Conversation, turn_index: int,
                         hit: SearchHit) -> Conversation:
    message = _agent_message(conv, turn_index)
    contexts = message.contexts or ()
    if any(c.key == (hit.document_id, hit.passage_id) for c in contexts):
        raise DuplicateContext(
            f"context ({hit.document_id!r}, {hit.passage_id!r}) is already attached")
    added = replace(hit_to_context(hit, source="searched"), relevance="relevant")
    return _swap_message(conv, turn_index,
                         replace(message, contexts=contexts + (added,)))


def edit_response(conv: Conversation, turn_index: int, new_text: str,
                  editor: str | None = None,
                  timestamp: str | None = None) -> Conversation:
    message = _agent_message(conv, turn_index)
    if not new_text.strip():
        raise EmptyResponse("edited response must be non-empty")
    if new_text == message.text:
        raise IdenticalText("edited response matches the current text")
    editor = editor or conv.participants.author
    revision = Revision(editor=editor, timestamp=timestamp or utc_now_iso(),
                        message_index=turn_index, fields="text",
                        before=message.text, after=new_text)
    edited = replace(message, text=new_text,
                     original_text=message.original_text
                     if message.original_text is not None else message.text)
    conv = _swap_message(conv, turn_index, edited)
    conv = replace(conv, status=replace(
        conv.status, revisions=conv.status.revisions + (revision,)))
    return _with_editor(conv, editor)


def set_enrichments(conv: Conversation, turn_index: int,
                    enrichments: EnrichmentSet) -> Conversation:
    message = _user_message(conv, turn_index)
    return _swap_message(conv, turn_index, replace(message, enrichments=enrichments))


def regenerate_response(conv: Conversation, turn_index: int,
                        store: CorpusStore | None = None,
                        ) -> tuple[Conversation, GenerationResult]:
    """Re-run the generator for an existing agent turn after passage edits.

    The prompt is rendered from the turn's current contexts minus any marked
    irrelevant; the new text replaces the old one and the edit baseline resets
    (no response history is kept).
    """
    message = _agent_message(conv, turn_index)
    shown = tuple(c for c in (message.contexts or ())
                  if c.relevance != "irrelevant")
    prompt = render_prompt(conv.generator, conv.messages[:turn_index], shown)
    result = generate(conv.generator, prompt)
    regenerated = replace(message, text=result.text, original_text=None)
    return _swap_message(conv, turn_index, regenerated), result


# ---------------------------------------------------------------------------
# Word-level diff
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffSegment:
    kind: str  # equal | insert | delete
    tokens: tuple[str, ...]


def word_diff(original: str, edited: str) -> list[DiffSegment]:
    """Minimal LCS-based diff over whitespace tokens.

    Within a change block deletions precede insertions, and adjacent segments
    of the same kind are merged, so the output is canonical: concatenating
    equal+delete tokens reproduces the original, equal+insert the edit.
    """
    a = original.split()
    b = edited.split()
    n, m = len(a), len(b)
    # dp[i][j] = LCS length of a[i:], b[j:]
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row = dp[i]
        below = dp[i + 1]
        ai = a[i]
        for j in range(m - 1, -1, -1):
            if ai == b[j]:
                row[j] = below[j + 1] + 1
            else:
                bj = below[j]
                rj = row[j + 1]
                row[j] = bj if bj >= rj else rj
    ops: list[tuple[str, str]] = []
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j]:
            ops.append(("equal", a[i]))
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            ops.append(("delete", a[i]))
            i += 1
        else:
            ops.append(("insert", b[j]))
            j += 1
    ops.extend(("delete", tok) for tok in a[i:])
    ops.extend(("insert", tok) for tok in b[j:])

    # canonicalize: deletes before inserts inside each change block
    blocks: list[tuple[str, list[str]]] = []
    deletes: list[str] = []
    inserts: list[str] = []

    def flush_changes():
        if deletes:
            blocks.append(("delete", deletes.copy()))
            deletes.clear()
        if inserts:
            blocks.append(("insert", inserts.copy()))
            inserts.clear()

    for kind, token in ops:
        if kind == "equal":
            flush_changes()
            if blocks and blocks[-1][0] == "equal":
                blocks[-1][1].append(token)
            else:
                blocks.append(("equal", [token]))
        elif kind == "delete":
            deletes.append(token)
        else:
            inserts.append(token)
    flush_changes()
    return [DiffSegment(kind=kind, tokens=tuple(tokens)) for kind, tokens in blocks]


def diff_to_obj(segments: Sequence[DiffSegment]) -> list[dict]:
    return [{"kind": s.kind, "tokens": list(s.tokens)} for s in segments]


# ---------------------------------------------------------------------------
# Lexical overlap highlighting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OverlapSpan:
    response_start: int
    response_end: int
    passage_index: int
    passage_start: int
    passage_end: int
    length_tokens: int


def _normalized_tokens(text: str) -> tuple[list[str], list[tuple[int, int]]]:
    tokens = []
    spans = []
    for match in NORMALIZED_TOKEN_RE.finditer(text):
        tokens.append(match.group(0).lower())
        spans.append(match.span())
    return tokens, spans


def highlight_overlap(response: str, passages: Sequence[ContextPassage],
                      min_ngram: int = 3) -> list[OverlapSpan]:
    """All maximal common token runs of length >= min_ngram between the
    response and each passage, as character intervals in the original texts.

    Tokens are lowercased alphanumeric runs, so punctuation and spacing
    differences do not break a match.
    """
    if min_ngram < 1:
        raise ValueError("min_ngram must be >= 1")
    r_tokens, r_spans = _normalized_tokens(response)
    if not r_tokens:
        return []
    out: list[OverlapSpan] = []
    n = len(r_tokens)
    for p_index, passage in enumerate(passages):
        p_tokens, p_spans = _normalized_tokens(passage.text)
        m = len(p_tokens)
        if not p_tokens:
            continue
        # run[j] = length of common run ending at (i-1, j-1) from previous row
        prev = [0] * (m + 1)
        for i in range(1, n + 1):
            cur = [0] * (m + 1)
            token = r_tokens[i - 1]
            for j in range(1, m + 1):
                if token == p_tokens[j - 1]:
                    run = prev[j - 1] + 1
                    cur[j] = run
                    ended_right = (i == n or j == m
                                   or r_tokens[i] != p_tokens[j])
                    if run >= min_ngram and ended_right:
                        out.append(OverlapSpan(
                            response_start=r_spans[i - run][0],
                            response_end=r_spans[i - 1][1],
                            passage_index=p_index,
                            passage_start=p_spans[j - run][0],
                            passage_end=p_spans[j - 1][1],
                            length_tokens=run,
                        ))
            prev = cur
    out.sort(key=lambda s: (s.response_start, s.passage_index, s.passage_start))
    return out


def overlap_to_obj(spans: Sequence[OverlapSpan]) -> list[dict]:
    return [{"response_start": s.response_start, "response_end": s.response_end,
             "passage_index": s.passage_index, "passage_start": s.passage_start,
             "passage_end": s.passage_end, "length_tokens": s.length_tokens}
            for s in spans]


# ---------------------------------------------------------------------------
# Hints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hint:
    kind: str  # mark_relevance | add_enrichments
    message_index: int
    text: str


def compute_hints(conv: Conversation) -> list[Hint]:
    """Advisory reminders; they never block any operation.

    mark_relevance fires on agent turns that have contexts but none marked
    relevant, unless the question is enriched unanswerable. add_enrichments
    fires on user turns with no labels at all.
    """
    hints = []
    for i, message in enumerate(conv.messages):
        if message.is_user:
            if message.enrichments is None or message.enrichments.is_empty:
                hints.append(Hint(
                    kind="add_enrichments", message_index=i,
                    text="This question has no enrichment labels yet."))
        else:
            contexts = message.contexts or ()
            if not contexts:
                continue
            if any(c.relevance == "relevant" for c in contexts):
                continue
            user = conv.messages[i - 1]
            answerability = user.enrichments.answerability if user.enrichments else None
            if answerability == "unanswerable":
                continue
            hints.append(Hint(
                kind="mark_relevance", message_index=i,
                text="No passage on this response is marked relevant yet."))
    return hints


def hints_to_obj(hints: Sequence[Hint]) -> list[dict]:
    return [{"kind": h.kind, "message_index": h.message_index, "text": h.text}
            for h in hints]


# ---------------------------------------------------------------------------
# Export checklist
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChecklistItem:
    label: str
    checked: bool


@dataclass(frozen=True)
class ExportStatistics:
    turn_count: int
    enrichment_coverage: float
    relevant_context_coverage: float
    edited_response_count: int


@dataclass(frozen=True)
class ExportChecklist:
    items: tuple[ChecklistItem, ...]
    statistics: ExportStatistics


@dataclass(frozen=True)
class ExportResult:
    document: bytes
    checklist: ExportChecklist


def conversation_statistics(conv: Conversation) -> ExportStatistics:
    users = conv.user_messages()
    agents = conv.agent_messages()
    enriched = sum(1 for m in users
                   if m.enrichments is not None and not m.enrichments.is_empty)
    with_relevant = sum(1 for m in agents
                        if any(c.relevance == "relevant" for c in (m.contexts or ())))
    edited = sum(1 for m in agents if m.original_text is not None)
    return ExportStatistics(
        turn_count=len(conv.messages),
        enrichment_coverage=enriched / len(users) if users else 1.0,
        relevant_context_coverage=with_relevant / len(agents) if agents else 1.0,
        edited_response_count=edited,
    )


def export_with_checklist(conv: Conversation,
                          acknowledgements: Sequence[bool] = ()) -> ExportResult:
    """Serialize for download together with the quality checklist.

    Unchecked boxes never block the export; they are recorded as-is.
    """
    checked = list(acknowledgements)[:len(CHECKLIST_LABELS)]
    checked += [False] * (len(CHECKLIST_LABELS) - len(checked))
    items = tuple(ChecklistItem(label=label, checked=bool(flag))
                  for label, flag in zip(CHECKLIST_LABELS, checked))
    checklist = ExportChecklist(items=items,
                                statistics=conversation_statistics(conv))
    return ExportResult(document=serialize_conversation(conv), checklist=checklist)


def checklist_to_obj(checklist: ExportChecklist) -> dict:
    return {
        "items": [{"label": i.label, "checked": i.checked} for i in checklist.items],
        "statistics": {
            "turn_count": checklist.statistics.turn_count,
            "enrichment_coverage": checklist.statistics.enrichment_coverage,
            "relevant_context_coverage": checklist.statistics.relevant_context_coverage,
            "edited_response_count": checklist.statistics.edited_response_count,
        },
    }
