"""Review mode: batch loading, constrained edits, anchored comments, and
accept / accept-with-edits / reject decisions.

Reviewers may repair responses, relevance marks, and enrichments; they may
never rewrite questions or invoke retrieval. A batch travels with the client
between requests, so everything here is pure over immutable values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

from .conversation import (
    Comment,
    CommentAnchor,
    Conversation,
    EnrichmentSet,
    Revision,
    conversation_to_obj,
    parse_conversation_obj,
    utc_now_iso,
)
from .create import edit_passage_relevance, edit_response, set_enrichments
from .errors import (
    AnchorOutOfRange,
    ConstraintViolation,
    EmptyBatch,
    EmptyComment,
    IndexOutOfRange,
    ItemNotVisited,
    MalformedDocument,
    MissingEdits,
    MissingRejectComment,
    SchemaViolation,
    UndecidedItems,
)

DECISION_STATES = {
    "accept": "accepted",
    "accept_with_edits": "accepted_with_edits",
    "reject": "rejected",
}

# Actions create mode offers that review mode must refuse, with the
# constraint code each refusal reports.
FORBIDDEN_ACTIONS = {
    "edit_question": "edit_question",
    "run_retrieval": "retrieval_disabled",
    "run_side_search": "search_disabled",
    "add_passage": "search_disabled",
}


@dataclass(frozen=True)
class ReviewBatch:
    reviewer: str
    conversations: tuple[Conversation, ...]
    cursor: int = 0
    visited: tuple[int, ...] = (0,)
    decisions: tuple[str | None, ...] = ()

    def conversation(self, item: int) -> Conversation:
        if not 0 <= item < len(self.conversations):
            raise IndexOutOfRange(f"no batch item {item}")
        return self.conversations[item]


def load_batch(document: bytes | str, reviewer: str) -> ReviewBatch:
    """Parse a JSON array of conversation documents into a fresh batch."""
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"batch is not UTF-8: {exc}") from None
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"batch is not valid JSON: {exc}") from None
    return batch_from_obj(data, reviewer)


def batch_from_obj(data, reviewer: str) -> ReviewBatch:
    if not isinstance(data, list):
        raise SchemaViolation("a batch must be a JSON array of conversations")
    if not data:
        raise EmptyBatch("the batch contains no conversations")
    conversations = []
    for i, item in enumerate(data):
        try:
            conversations.append(parse_conversation_obj(item, path=f"[{i}]"))
        except SchemaViolation as exc:
            exc.item_index = i
            raise
    return ReviewBatch(reviewer=reviewer, conversations=tuple(conversations),
                       cursor=0, visited=(0,),
                       decisions=(None,) * len(conversations))


def goto(batch: ReviewBatch, item: int) -> ReviewBatch:
    batch.conversation(item)
    visited = batch.visited if item in batch.visited else batch.visited + (item,)
    return replace(batch, cursor=item, visited=visited)


def _swap(batch: ReviewBatch, item: int, conv: Conversation) -> ReviewBatch:
    conversations = list(batch.conversations)
    conversations[item] = conv
    visited = batch.visited if item in batch.visited else batch.visited + (item,)
    return replace(batch, conversations=tuple(conversations), visited=visited)


def forbid(action: str) -> None:
    """Every disallowed review action fails the same way, by name."""
    code = FORBIDDEN_ACTIONS.get(action, action)
    raise ConstraintViolation(f"review mode does not allow {action}", action=code)


def review_edit_response(batch: ReviewBatch, item: int, turn_index: int,
                         new_text: str, timestamp: str | None = None) -> ReviewBatch:
    conv = batch.conversation(item)
    if 0 <= turn_index < len(conv.messages) and conv.messages[turn_index].is_user:
        forbid("edit_question")
    edited = edit_response(conv, turn_index, new_text, editor=batch.reviewer,
                           timestamp=timestamp)
    return _swap(batch, item, edited)


def review_edit_relevance(batch: ReviewBatch, item: int, turn_index: int,
                          context_ordinal: int, relevance: str,
                          timestamp: str | None = None) -> ReviewBatch:
    conv = batch.conversation(item)
    before = None
    message = conv.messages[turn_index] if 0 <= turn_index < len(conv.messages) else None
    if message is not None and message.contexts and \
            0 <= context_ordinal < len(message.contexts):
        before = message.contexts[context_ordinal].relevance
    edited = edit_passage_relevance(conv, turn_index, context_ordinal, relevance)
    if before != relevance:
        revision = Revision(
            editor=batch.reviewer,
            timestamp=timestamp or utc_now_iso(),
            message_index=turn_index,
            fields=f"contexts[{context_ordinal}].relevance",
            before=before or "", after=relevance)
        edited = replace(edited, status=replace(
            edited.status, revisions=edited.status.revisions + (revision,)))
    return _swap(batch, item, edited)


def review_edit_enrichments(batch: ReviewBatch, item: int, turn_index: int,
                            enrichments: EnrichmentSet,
                            timestamp: str | None = None) -> ReviewBatch:
    conv = batch.conversation(item)
    before = None
    if 0 <= turn_index < len(conv.messages) and conv.messages[turn_index].is_user:
        before = conv.messages[turn_index].enrichments
    edited = set_enrichments(conv, turn_index, enrichments)
    if before != enrichments:
        revision = Revision(
            editor=batch.reviewer,
            timestamp=timestamp or utc_now_iso(),
            message_index=turn_index,
            fields="enrichments",
            before=_enrichment_blurb(before), after=_enrichment_blurb(enrichments))
        edited = replace(edited, status=replace(
            edited.status, revisions=edited.status.revisions + (revision,)))
    return _swap(batch, item, edited)


def _enrichment_blurb(e: EnrichmentSet | None) -> str:
    if e is None:
        return "{}"
    parts = {}
    if e.question_type is not None:
        parts["question_type"] = e.question_type
    if e.answerability is not None:
        parts["answerability"] = e.answerability
    if e.multi_turn is not None:
        parts["multi_turn"] = e.multi_turn
    return json.dumps(parts, sort_keys=True)


def add_comment(batch: ReviewBatch, item: int, text: str,
                anchor: CommentAnchor | None = None) -> ReviewBatch:
    conv = batch.conversation(item)
    if not text.strip():
        raise EmptyComment("comment text must be non-empty")
    if anchor is not None:
        if not 0 <= anchor.message_index < len(conv.messages):
            raise AnchorOutOfRange(
                f"anchor message {anchor.message_index} does not exist")
        target = conv.messages[anchor.message_index].text
        if not 0 <= anchor.start < anchor.end <= len(target):
            raise AnchorOutOfRange(
                f"anchor [{anchor.start}, {anchor.end}) lies outside the message")
    comment = Comment(author=batch.reviewer, text=text, anchor=anchor)
    edited = replace(conv, status=replace(
        conv.status, comments=conv.status.comments + (comment,)))
    return _swap(batch, item, edited)


def decide(batch: ReviewBatch, item: int, decision: str) -> ReviewBatch:
    conv = batch.conversation(item)
    if decision not in DECISION_STATES:
        raise SchemaViolation(f"{decision!r} is not one of "
                              f"{sorted(DECISION_STATES)}", path="decision")
    if item not in batch.visited:
        raise ItemNotVisited(f"batch item {item} was never opened")
    if decision == "accept_with_edits":
        if not any(r.editor == batch.reviewer for r in conv.status.revisions):
            raise MissingEdits(
                "accept_with_edits requires at least one edit by this reviewer")
    if decision == "reject" and not conv.status.comments:
        raise MissingRejectComment("rejecting requires at least one comment")
    participants = conv.participants
    if batch.reviewer not in participants.reviewers:
        participants = replace(
            participants, reviewers=participants.reviewers + (batch.reviewer,))
    decided = replace(conv,
                      participants=participants,
                      status=replace(conv.status, state=DECISION_STATES[decision]))
    decisions = list(batch.decisions)
    decisions[item] = decision
    batch = replace(_swap(batch, item, decided), decisions=tuple(decisions))
    return replace(batch, cursor=_next_undecided(batch, item))


def _next_undecided(batch: ReviewBatch, after: int) -> int:
    n = len(batch.conversations)
    for offset in range(1, n + 1):
        candidate = (after + offset) % n
        if batch.decisions[candidate] is None:
            return candidate
    return after


def export_batch(batch: ReviewBatch) -> bytes:
    undecided = [i for i, d in enumerate(batch.decisions) if d is None]
    if undecided:
        raise UndecidedItems(f"items {undecided} have no decision yet",
                             indices=undecided)
    objs = [conversation_to_obj(conv) for conv in batch.conversations]
    return (json.dumps(objs, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def batch_to_obj(batch: ReviewBatch) -> dict:
    return {
        "reviewer": batch.reviewer,
        "cursor": batch.cursor,
        "visited": list(batch.visited),
        "decisions": list(batch.decisions),
        "conversations": [conversation_to_obj(c) for c in batch.conversations],
    }
