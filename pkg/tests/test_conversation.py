import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import make_conversation, make_generator, make_passage, make_retriever
from ragloop.conversation import (
    ANSWERABILITY,
    MULTI_TURN,
    QUESTION_TYPES,
    Comment,
    CommentAnchor,
    Conversation,
    ContextPassage,
    ConversationStatus,
    EnrichmentSet,
    Message,
    Participants,
    Revision,
    conversation_to_obj,
    new_conversation,
    parse_conversation,
    serialize_conversation,
    validate_conversation,
    with_agent_message,
    with_user_message,
)
from ragloop.errors import MalformedDocument, SchemaViolation


def roundtrip(conv: Conversation) -> Conversation:
    return parse_conversation(serialize_conversation(conv))


class TestRoundTrip:
    def test_parse_serialize_parse_is_identity(self):
        conv = make_conversation(turns=3)
        assert roundtrip(conv) == conv

    def test_serialization_is_byte_deterministic(self):
        conv = make_conversation()
        assert serialize_conversation(conv) == serialize_conversation(conv)

    def test_serialized_form_is_fixpoint(self):
        conv = make_conversation()
        first = serialize_conversation(conv)
        assert serialize_conversation(parse_conversation(first)) == first

    def test_unicode_survives(self):
        conv = with_user_message(make_conversation(), "Qu'est-ce que le gruyère? 🧀")
        again = roundtrip(conv)
        assert again.messages[-1].text == "Qu'est-ce que le gruyère? 🧀"
        # non-ascii must be emitted raw, not \u-escaped
        assert "gruyère".encode("utf-8") in serialize_conversation(conv)

    def test_status_sections_roundtrip(self):
        conv = make_conversation()
        status = ConversationStatus(
            state="accepted_with_edits",
            revisions=(Revision(editor="rev@example.org",
                                timestamp="2025-03-01T10:00:00+00:00",
                                message_index=1, fields="text",
                                before="old words", after="new words"),),
            comments=(Comment(author="rev@example.org", text="tighten this",
                              anchor=CommentAnchor(message_index=1, start=0, end=4)),),
        )
        conv = Conversation(participants=conv.participants, retriever=conv.retriever,
                            generator=conv.generator, messages=conv.messages,
                            status=status)
        assert roundtrip(conv) == conv


class TestParsingErrors:
    def test_rejects_non_json(self):
        with pytest.raises(MalformedDocument):
            parse_conversation(b"{not json")

    def test_rejects_non_utf8(self):
        with pytest.raises(MalformedDocument):
            parse_conversation(b"\xff\xfe{}")

    def test_rejects_missing_section(self):
        obj = conversation_to_obj(make_conversation())
        del obj["retriever"]
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert exc.value.path == "retriever"

    def test_rejects_unknown_top_level_key(self):
        obj = conversation_to_obj(make_conversation())
        obj["extras"] = {}
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert "extras" in str(exc.value)

    def test_rejects_unknown_message_key(self):
        obj = conversation_to_obj(make_conversation())
        obj["messages"][0]["mood"] = "upbeat"
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert exc.value.path == "messages[0].mood"

    def test_error_path_points_at_bad_score(self):
        obj = conversation_to_obj(make_conversation())
        obj["messages"][1]["contexts"][0]["score"] = "high"
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert exc.value.path == "messages[1].contexts[0].score"

    def test_rejects_wrong_speaker_order(self):
        obj = conversation_to_obj(make_conversation())
        obj["messages"][0]["speaker"] = "agent"
        del obj["messages"][0]["enrichments"]
        obj["messages"][0]["contexts"] = []
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert exc.value.path == "messages[0]"

    def test_rejects_unknown_enum_value(self):
        obj = conversation_to_obj(make_conversation())
        obj["messages"][0]["enrichments"]["question_type"] = "quizzical"
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert exc.value.path == "messages[0].enrichments.question_type"

    def test_rejects_duplicate_context(self):
        obj = conversation_to_obj(make_conversation())
        contexts = obj["messages"][1]["contexts"]
        contexts.append(dict(contexts[0]))
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert exc.value.path == "messages[1].contexts[1]"

    def test_rejects_empty_author(self):
        obj = conversation_to_obj(make_conversation())
        obj["participants"]["author"] = ""
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert exc.value.path == "participants.author"

    def test_rejects_bad_timestamp(self):
        obj = conversation_to_obj(make_conversation())
        obj["participants"]["accessed_at"] = ["yesterday"]
        with pytest.raises(SchemaViolation):
            parse_conversation(json.dumps(obj))

    def test_accepts_zulu_timestamp(self):
        obj = conversation_to_obj(make_conversation())
        obj["participants"]["accessed_at"] = ["2025-03-01T10:00:00Z"]
        conv = parse_conversation(json.dumps(obj))
        assert conv.participants.accessed_at == ("2025-03-01T10:00:00Z",)

    def test_rejects_odd_length_when_not_draft(self):
        obj = conversation_to_obj(make_conversation())
        obj["messages"] = obj["messages"][:3]
        obj["status"]["state"] = "accepted"
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert exc.value.path == "messages"

    def test_draft_may_end_on_user_turn(self):
        obj = conversation_to_obj(make_conversation())
        obj["messages"] = obj["messages"][:3]
        conv = parse_conversation(json.dumps(obj))
        assert len(conv.messages) == 3

    def test_rejects_revision_pointing_past_messages(self):
        obj = conversation_to_obj(make_conversation())
        obj["status"]["revisions"] = [{
            "editor": "rev@example.org", "timestamp": "2025-03-01T10:00:00Z",
            "message_index": 99, "field": "text", "before": "a", "after": "b",
        }]
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert exc.value.path == "status.revisions[0].message_index"

    def test_rejects_anchor_outside_text(self):
        obj = conversation_to_obj(make_conversation())
        obj["status"]["comments"] = [{
            "author": "rev@example.org", "text": "??",
            "anchor": {"message_index": 0, "start": 0, "end": 10_000},
        }]
        with pytest.raises(SchemaViolation):
            parse_conversation(json.dumps(obj))

    def test_rejects_original_text_equal_to_text(self):
        obj = conversation_to_obj(make_conversation())
        obj["messages"][1]["original_text"] = obj["messages"][1]["text"]
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert exc.value.path == "messages[1].original_text"

    def test_retriever_needs_corpus_for_embedded_engine(self):
        obj = conversation_to_obj(make_conversation())
        obj["retriever"]["corpus_id"] = ""
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert exc.value.path == "retriever.corpus_id"

    def test_prompt_template_must_mention_question(self):
        obj = conversation_to_obj(make_conversation())
        obj["generator"]["prompt_template"] = "just answer"
        with pytest.raises(SchemaViolation) as exc:
            parse_conversation(json.dumps(obj))
        assert exc.value.path == "generator.prompt_template"

    def test_bool_is_not_a_number(self):
        obj = conversation_to_obj(make_conversation())
        obj["retriever"]["top_k"] = True
        with pytest.raises(SchemaViolation):
            parse_conversation(json.dumps(obj))


class TestBuilders:
    def test_user_turn_cannot_follow_user_turn(self):
        conv = with_user_message(make_conversation(turns=0), "hi")
        with pytest.raises(SchemaViolation):
            with_user_message(conv, "hi again")

    def test_agent_turn_requires_pending_question(self):
        conv = make_conversation(turns=1)
        with pytest.raises(SchemaViolation):
            with_agent_message(conv, "unprompted")

    def test_new_conversation_is_empty_draft(self):
        conv = new_conversation("ann@example.org", make_retriever(), make_generator())
        assert conv.messages == ()
        assert conv.status.state == "draft"


class TestValidationReport:
    def test_clean_conversation_has_empty_report(self):
        assert validate_conversation(make_conversation()).is_clean

    def test_flags_missing_enrichment(self):
        conv = make_conversation(turns=0)
        conv = with_user_message(conv, "anything", EnrichmentSet())
        report = validate_conversation(conv)
        kinds = [e.kind for e in report.entries]
        assert kinds == ["missing_enrichment"]
        assert report.entries[0].message_index == 0

    def test_flags_answerable_turn_without_relevant_context(self):
        conv = make_conversation(turns=0)
        conv = with_user_message(conv, "q", EnrichmentSet(answerability="answerable"))
        conv = with_agent_message(conv, "a", [make_passage()])
        report = validate_conversation(conv)
        assert [e.kind for e in report.entries] == ["unmarked_relevance"]

    def test_unanswerable_turn_needs_no_relevant_context(self):
        conv = make_conversation(turns=0)
        conv = with_user_message(conv, "q", EnrichmentSet(answerability="unanswerable"))
        conv = with_agent_message(conv, "a", [])
        assert validate_conversation(conv).is_clean


enrichment_strategy = st.builds(
    EnrichmentSet,
    question_type=st.sampled_from(QUESTION_TYPES) | st.none(),
    answerability=st.sampled_from(ANSWERABILITY) | st.none(),
    multi_turn=st.sampled_from(MULTI_TURN) | st.none(),
)

text_strategy = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=60)


@st.composite
def conversation_strategy(draw) -> Conversation:
    turns = draw(st.integers(min_value=0, max_value=4))
    messages = []
    for t in range(turns):
        messages.append(Message(speaker="user", text=draw(text_strategy),
                                enrichments=draw(enrichment_strategy)))
        n_ctx = draw(st.integers(min_value=0, max_value=3))
        contexts = tuple(
            ContextPassage(document_id=f"d{j}", passage_id=f"d{j}::{t}",
                           title=draw(text_strategy), text=draw(text_strategy),
                           score=draw(st.floats(min_value=0, max_value=50,
                                                allow_nan=False)),
                           relevance=draw(st.sampled_from(("unmarked", "relevant",
                                                           "irrelevant"))),
                           source=draw(st.sampled_from(("retrieved", "searched"))))
            for j in range(n_ctx)
        )
        messages.append(Message(speaker="agent", text=draw(text_strategy),
                                contexts=contexts))
    if draw(st.booleans()) and turns:
        messages = messages[:-1]
    return Conversation(
        participants=Participants(author="fuzz@example.org"),
        retriever=make_retriever(),
        generator=make_generator(),
        messages=tuple(messages),
    )


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(conversation_strategy())
    def test_roundtrip_identity(self, conv):
        assert roundtrip(conv) == conv

    @settings(max_examples=60, deadline=None)
    @given(conversation_strategy())
    def test_serialized_fixpoint(self, conv):
        first = serialize_conversation(conv)
        assert serialize_conversation(parse_conversation(first)) == first
