"""Conversation document model: types, JSON parsing, serialization, validation.

A conversation file is a UTF-8 JSON object with five fixed top-level keys:
``participants``, ``retriever``, ``generator``, ``messages``, ``status``.
Values are immutable after construction; editing operations elsewhere return
new ``Conversation`` values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Any, Iterable, Mapping, Sequence

from .errors import MalformedDocument, SchemaViolation

# Closed vocabularies. Parsing rejects anything outside these.
SPEAKERS = ("user", "agent")
QUESTION_TYPES = ("factoid", "opinion", "comparison", "keyword", "composite", "other")
ANSWERABILITY = ("answerable", "unanswerable", "partial")
MULTI_TURN = ("clarification", "follow_up", "topic_switch", "none")
RELEVANCE = ("unmarked", "relevant", "irrelevant")
PASSAGE_SOURCES = ("retrieved", "searched")
CONVERSATION_STATES = ("draft", "accepted", "accepted_with_edits", "rejected")
RETRIEVER_ENGINES = ("embedded_bm25", "remote_http")
QUERY_STRATEGIES = ("last_user_turn", "concat_user_turns", "full_history", "manual")
GENERATOR_ENGINES = ("remote_chat", "mock_echo")

DEFAULT_SYSTEM_PROMPT = (
    "You are a helpful assistant. Answer the user's question using only the "
    "provided passages. If the passages do not contain the answer, say so."
)
DEFAULT_PROMPT_TEMPLATE = "{system}\n\n{passages}\n{history}\nuser: {question}\nagent:"
DEFAULT_PASSAGE_TEMPLATE = "[{n}] {title}\n{text}\n"


@dataclass(frozen=True)
class Participants:
    author: str
    editors: tuple[str, ...] = ()
    reviewers: tuple[str, ...] = ()
    accessed_at: tuple[str, ...] = ()


@dataclass(frozen=True)
class RemoteRetriever:
    """Connectivity for an HTTP retriever: endpoint, token env-var name, and a
    mapping from our field names to keys in the remote response."""

    endpoint: str
    auth_token_env: str | None = None
    field_mapping: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RetrieverConfig:
    engine: str
    corpus_id: str = ""
    top_k: int = 5
    query_strategy: str = "last_user_turn"
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    remote: RemoteRetriever | None = None
    settings: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 512


@dataclass(frozen=True)
class GeneratorEndpoint:
    url: str
    auth_token_env: str | None = None


@dataclass(frozen=True)
class GeneratorConfig:
    engine: str
    model_id: str
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    system_prompt: str = DEFAULT_SYSTEM_PROMPT
    passage_template: str = DEFAULT_PASSAGE_TEMPLATE
    decoding: Decoding = field(default_factory=Decoding)
    timeout_s: float = 120.0
    endpoint: GeneratorEndpoint | None = None
    settings: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class EnrichmentSet:
    """Per-user-turn labels; every field optional, each from a closed vocabulary."""

    question_type: str | None = None
    answerability: str | None = None
    multi_turn: str | None = None

    @property
    def is_empty(self) -> bool:
        return (self.question_type is None and self.answerability is None
                and self.multi_turn is None)


@dataclass(frozen=True)
class ContextPassage:
    document_id: str
    passage_id: str
    title: str
    text: str
    score: float
    relevance: str = "unmarked"
    source: str = "retrieved"

    @property
    def key(self) -> tuple[str, str]:
        return (self.document_id, self.passage_id)


@dataclass(frozen=True)
class Message:
    """One turn. User turns carry enrichments; agent turns carry contexts and
    (after a human edit) the pre-edit generation in original_text."""

    speaker: str
    text: str
    enrichments: EnrichmentSet | None = None
    contexts: tuple[ContextPassage, ...] | None = None
    original_text: str | None = None

    @property
    def is_user(self) -> bool:
        return self.speaker == "user"

    @property
    def is_agent(self) -> bool:
        return self.speaker == "agent"


@dataclass(frozen=True)
class Revision:
    editor: str
    timestamp: str
    message_index: int
    fields: str
    before: str
    after: str


@dataclass(frozen=True)
class CommentAnchor:
    message_index: int
    start: int
    end: int


@dataclass(frozen=True)
class Comment:
    author: str
    text: str
    anchor: CommentAnchor | None = None


@dataclass(frozen=True)
class ConversationStatus:
    state: str = "draft"
    revisions: tuple[Revision, ...] = ()
    comments: tuple[Comment, ...] = ()


@dataclass(frozen=True)
class Conversation:
    participants: Participants
    retriever: RetrieverConfig
    generator: GeneratorConfig
    messages: tuple[Message, ...] = ()
    status: ConversationStatus = field(default_factory=ConversationStatus)

    def user_messages(self) -> tuple[Message, ...]:
        return tuple(m for m in self.messages if m.is_user)

    def agent_messages(self) -> tuple[Message, ...]:
        return tuple(m for m in self.messages if m.is_agent)


@dataclass(frozen=True)
class ReportEntry:
    kind: str
    message_index: int
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    entries: tuple[ReportEntry, ...] = ()

    @property
    def is_clean(self) -> bool:
        return not self.entries


def messages_of(conv: Conversation | Sequence[Message]) -> tuple[Message, ...]:
    """Accept either a Conversation or a bare message sequence."""
    if isinstance(conv, Conversation):
        return conv.messages
    return tuple(conv)


def utc_now_iso() -> str:
    """Second-resolution UTC timestamp in the document's Z-suffixed style."""
    from datetime import timezone
    return datetime.now(timezone.utc).isoformat(timespec="seconds").replace(
        "+00:00", "Z")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _fail(message: str, path: str) -> SchemaViolation:
    return SchemaViolation(message, path=path)


def _as_obj(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise _fail(f"expected an object, got {type(value).__name__}", path)
    return value


def _as_list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise _fail(f"expected an array, got {type(value).__name__}", path)
    return value


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise _fail(f"expected a string, got {type(value).__name__}", path)
    return value


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _fail(f"expected an integer, got {type(value).__name__}", path)
    return value


def _as_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(f"expected a number, got {type(value).__name__}", path)
    return float(value)


def _as_enum(value: Any, vocabulary: Sequence[str], path: str) -> str:
    text = _as_str(value, path)
    if text not in vocabulary:
        raise _fail(f"{text!r} is not one of {list(vocabulary)}", path)
    return text


def _check_keys(obj: dict, allowed: Iterable[str], path: str) -> None:
    unknown = set(obj) - set(allowed)
    if unknown:
        key = sorted(unknown)[0]
        raise _fail(f"unknown key {key!r}", f"{path}.{key}" if path else key)


def _check_timestamp(value: str, path: str) -> str:
    candidate = value[:-1] + "+00:00" if value.endswith("Z") else value
    try:
        datetime.fromisoformat(candidate)
    except ValueError:
        raise _fail(f"{value!r} is not an ISO-8601 timestamp", path) from None
    return value


def _str_list(value: Any, path: str) -> tuple[str, ...]:
    return tuple(_as_str(v, f"{path}[{i}]") for i, v in enumerate(_as_list(value, path)))


def _str_map(value: Any, path: str) -> dict[str, str]:
    obj = _as_obj(value, path)
    return {k: _as_str(v, f"{path}.{k}") for k, v in obj.items()}


def _parse_participants(value: Any, path: str) -> Participants:
    obj = _as_obj(value, path)
    _check_keys(obj, ("author", "editors", "reviewers", "accessed_at"), path)
    author = _as_str(obj.get("author", ""), f"{path}.author")
    if not author:
        raise _fail("author must be a non-empty email", f"{path}.author")
    accessed = _str_list(obj.get("accessed_at", []), f"{path}.accessed_at")
    for i, ts in enumerate(accessed):
        _check_timestamp(ts, f"{path}.accessed_at[{i}]")
    return Participants(
        author=author,
        editors=_str_list(obj.get("editors", []), f"{path}.editors"),
        reviewers=_str_list(obj.get("reviewers", []), f"{path}.reviewers"),
        accessed_at=accessed,
    )


def parse_retriever_config(value: Any, path: str = "retriever") -> RetrieverConfig:
    obj = _as_obj(value, path)
    _check_keys(obj, ("engine", "corpus_id", "top_k", "query_strategy",
                      "bm25_k1", "bm25_b", "remote", "settings"), path)
    engine = _as_enum(obj.get("engine"), RETRIEVER_ENGINES, f"{path}.engine")
    corpus_id = _as_str(obj.get("corpus_id", ""), f"{path}.corpus_id")
    top_k = _as_int(obj.get("top_k", 5), f"{path}.top_k")
    if top_k < 1:
        raise _fail("top_k must be >= 1", f"{path}.top_k")
    strategy = _as_enum(obj.get("query_strategy", "last_user_turn"),
                        QUERY_STRATEGIES, f"{path}.query_strategy")
    k1 = _as_number(obj.get("bm25_k1", 1.2), f"{path}.bm25_k1")
    if k1 < 0:
        raise _fail("bm25_k1 must be >= 0", f"{path}.bm25_k1")
    b = _as_number(obj.get("bm25_b", 0.75), f"{path}.bm25_b")
    if not 0.0 <= b <= 1.0:
        raise _fail("bm25_b must be within [0, 1]", f"{path}.bm25_b")
    remote = None
    if obj.get("remote") is not None:
        rpath = f"{path}.remote"
        robj = _as_obj(obj["remote"], rpath)
        _check_keys(robj, ("endpoint", "auth_token_env", "field_mapping"), rpath)
        endpoint = _as_str(robj.get("endpoint", ""), f"{rpath}.endpoint")
        if not endpoint:
            raise _fail("remote endpoint must be non-empty", f"{rpath}.endpoint")
        token_env = robj.get("auth_token_env")
        if token_env is not None:
            token_env = _as_str(token_env, f"{rpath}.auth_token_env")
        remote = RemoteRetriever(
            endpoint=endpoint,
            auth_token_env=token_env,
            field_mapping=_str_map(robj.get("field_mapping", {}), f"{rpath}.field_mapping"),
        )
    if engine == "embedded_bm25" and not corpus_id:
        raise _fail("embedded_bm25 requires a corpus_id", f"{path}.corpus_id")
    if engine == "remote_http" and remote is None:
        raise _fail("remote_http requires a remote section", f"{path}.remote")
    return RetrieverConfig(
        engine=engine, corpus_id=corpus_id, top_k=top_k, query_strategy=strategy,
        bm25_k1=k1, bm25_b=b, remote=remote,
        settings=_str_map(obj.get("settings", {}), f"{path}.settings"),
    )


def parse_generator_config(value: Any, path: str = "generator") -> GeneratorConfig:
    obj = _as_obj(value, path)
    _check_keys(obj, ("engine", "model_id", "prompt_template", "system_prompt",
                      "passage_template", "decoding", "timeout_s", "endpoint",
                      "settings"), path)
    engine = _as_enum(obj.get("engine"), GENERATOR_ENGINES, f"{path}.engine")
    model_id = _as_str(obj.get("model_id", ""), f"{path}.model_id")
    if not model_id:
        raise _fail("model_id must be non-empty", f"{path}.model_id")
    prompt_template = _as_str(obj.get("prompt_template", DEFAULT_PROMPT_TEMPLATE),
                              f"{path}.prompt_template")
    if "{question}" not in prompt_template:
        raise _fail("prompt_template must contain {question}", f"{path}.prompt_template")
    passage_template = _as_str(obj.get("passage_template", DEFAULT_PASSAGE_TEMPLATE),
                               f"{path}.passage_template")
    if "{text}" not in passage_template:
        raise _fail("passage_template must contain {text}", f"{path}.passage_template")
    dpath = f"{path}.decoding"
    dobj = _as_obj(obj.get("decoding", {}), dpath)
    _check_keys(dobj, ("temperature", "top_p", "max_tokens"), dpath)
    temperature = _as_number(dobj.get("temperature", 0.0), f"{dpath}.temperature")
    if temperature < 0:
        raise _fail("temperature must be >= 0", f"{dpath}.temperature")
    top_p = _as_number(dobj.get("top_p", 1.0), f"{dpath}.top_p")
    if not 0.0 < top_p <= 1.0:
        raise _fail("top_p must be within (0, 1]", f"{dpath}.top_p")
    max_tokens = _as_int(dobj.get("max_tokens", 512), f"{dpath}.max_tokens")
    if max_tokens < 1:
        raise _fail("max_tokens must be >= 1", f"{dpath}.max_tokens")
    timeout_s = _as_number(obj.get("timeout_s", 120.0), f"{path}.timeout_s")
    if timeout_s <= 0:
        raise _fail("timeout_s must be > 0", f"{path}.timeout_s")
    endpoint = None
    if obj.get("endpoint") is not None:
        epath = f"{path}.endpoint"
        eobj = _as_obj(obj["endpoint"], epath)
        _check_keys(eobj, ("url", "auth_token_env"), epath)
        url = _as_str(eobj.get("url", ""), f"{epath}.url")
        if not url:
            raise _fail("endpoint url must be non-empty", f"{epath}.url")
        token_env = eobj.get("auth_token_env")
        if token_env is not None:
            token_env = _as_str(token_env, f"{epath}.auth_token_env")
        endpoint = GeneratorEndpoint(url=url, auth_token_env=token_env)
    return GeneratorConfig(
        engine=engine, model_id=model_id, prompt_template=prompt_template,
        system_prompt=_as_str(obj.get("system_prompt", DEFAULT_SYSTEM_PROMPT),
                              f"{path}.system_prompt"),
        passage_template=passage_template,
        decoding=Decoding(temperature=temperature, top_p=top_p, max_tokens=max_tokens),
        timeout_s=timeout_s, endpoint=endpoint,
        settings=_str_map(obj.get("settings", {}), f"{path}.settings"),
    )


def _parse_enrichments(value: Any, path: str) -> EnrichmentSet:
    obj = _as_obj(value, path)
    _check_keys(obj, ("question_type", "answerability", "multi_turn"), path)

    def pick(key: str, vocabulary: Sequence[str]) -> str | None:
        if obj.get(key) is None:
            return None
        return _as_enum(obj[key], vocabulary, f"{path}.{key}")

    return EnrichmentSet(
        question_type=pick("question_type", QUESTION_TYPES),
        answerability=pick("answerability", ANSWERABILITY),
        multi_turn=pick("multi_turn", MULTI_TURN),
    )


def parse_enrichments(value: Any, path: str = "enrichments") -> EnrichmentSet:
    """Parse a bare enrichment-label object outside a full document."""
    return _parse_enrichments(value, path)


def parse_context_passage(value: Any, path: str) -> ContextPassage:
    obj = _as_obj(value, path)
    _check_keys(obj, ("document_id", "passage_id", "title", "text",
                      "score", "relevance", "source"), path)
    score = _as_number(obj.get("score", 0.0), f"{path}.score")
    if score < 0:
        raise _fail("score must be >= 0", f"{path}.score")
    return ContextPassage(
        document_id=_as_str(obj.get("document_id"), f"{path}.document_id"),
        passage_id=_as_str(obj.get("passage_id"), f"{path}.passage_id"),
        title=_as_str(obj.get("title", ""), f"{path}.title"),
        text=_as_str(obj.get("text"), f"{path}.text"),
        score=score,
        relevance=_as_enum(obj.get("relevance", "unmarked"), RELEVANCE, f"{path}.relevance"),
        source=_as_enum(obj.get("source", "retrieved"), PASSAGE_SOURCES, f"{path}.source"),
    )


def _parse_message(value: Any, index: int, path: str) -> Message:
    obj = _as_obj(value, path)
    speaker = _as_enum(obj.get("speaker"), SPEAKERS, f"{path}.speaker")
    expected = "user" if index % 2 == 0 else "agent"
    if speaker != expected:
        raise _fail(f"messages must alternate user/agent starting with user; "
                    f"expected {expected!r}", path)
    text = _as_str(obj.get("text"), f"{path}.text")
    if speaker == "user":
        _check_keys(obj, ("speaker", "text", "enrichments"), path)
        return Message(
            speaker=speaker, text=text,
            enrichments=_parse_enrichments(obj.get("enrichments", {}),
                                           f"{path}.enrichments"),
        )
    _check_keys(obj, ("speaker", "text", "contexts", "original_text"), path)
    contexts = []
    seen: set[tuple[str, str]] = set()
    for j, cval in enumerate(_as_list(obj.get("contexts", []), f"{path}.contexts")):
        passage = parse_context_passage(cval, f"{path}.contexts[{j}]")
        if passage.key in seen:
            raise _fail(f"duplicate context {passage.key}", f"{path}.contexts[{j}]")
        seen.add(passage.key)
        contexts.append(passage)
    original = obj.get("original_text")
    if original is not None:
        original = _as_str(original, f"{path}.original_text")
        if original == text:
            raise _fail("original_text must differ from text", f"{path}.original_text")
    return Message(speaker=speaker, text=text, contexts=tuple(contexts),
                   original_text=original)


def _parse_status(value: Any, message_count: int, path: str) -> ConversationStatus:
    obj = _as_obj(value, path)
    _check_keys(obj, ("state", "revisions", "comments"), path)
    state = _as_enum(obj.get("state", "draft"), CONVERSATION_STATES, f"{path}.state")
    revisions = []
    for i, rval in enumerate(_as_list(obj.get("revisions", []), f"{path}.revisions")):
        rpath = f"{path}.revisions[{i}]"
        robj = _as_obj(rval, rpath)
        _check_keys(robj, ("editor", "timestamp", "message_index", "field",
                           "before", "after"), rpath)
        message_index = _as_int(robj.get("message_index"), f"{rpath}.message_index")
        if not 0 <= message_index < message_count:
            raise _fail("revision target indexes no existing message",
                        f"{rpath}.message_index")
        before = _as_str(robj.get("before"), f"{rpath}.before")
        after = _as_str(robj.get("after"), f"{rpath}.after")
        if before == after:
            raise _fail("revision before and after must differ", f"{rpath}.after")
        revisions.append(Revision(
            editor=_as_str(robj.get("editor"), f"{rpath}.editor"),
            timestamp=_check_timestamp(_as_str(robj.get("timestamp"),
                                               f"{rpath}.timestamp"),
                                       f"{rpath}.timestamp"),
            message_index=message_index,
            fields=_as_str(robj.get("field"), f"{rpath}.field"),
            before=before, after=after,
        ))
    comments = []
    for i, cval in enumerate(_as_list(obj.get("comments", []), f"{path}.comments")):
        cpath = f"{path}.comments[{i}]"
        cobj = _as_obj(cval, cpath)
        _check_keys(cobj, ("author", "text", "anchor"), cpath)
        text = _as_str(cobj.get("text", ""), f"{cpath}.text")
        if not text:
            raise _fail("comment text must be non-empty", f"{cpath}.text")
        anchor = None
        if cobj.get("anchor") is not None:
            apath = f"{cpath}.anchor"
            aobj = _as_obj(cobj["anchor"], apath)
            _check_keys(aobj, ("message_index", "start", "end"), apath)
            anchor = CommentAnchor(
                message_index=_as_int(aobj.get("message_index"),
                                      f"{apath}.message_index"),
                start=_as_int(aobj.get("start"), f"{apath}.start"),
                end=_as_int(aobj.get("end"), f"{apath}.end"),
            )
            if not 0 <= anchor.message_index < message_count:
                raise _fail("anchor indexes no existing message",
                            f"{apath}.message_index")
        comments.append(Comment(author=_as_str(cobj.get("author"), f"{cpath}.author"),
                                text=text, anchor=anchor))
    return ConversationStatus(state=state, revisions=tuple(revisions),
                              comments=tuple(comments))


def parse_conversation_obj(value: Any, path: str = "") -> Conversation:
    """Parse an already-decoded JSON object into a validated Conversation."""

    def at(key: str) -> str:
        return f"{path}.{key}" if path else key

    obj = _as_obj(value, path or "$")
    _check_keys(obj, ("participants", "retriever", "generator", "messages", "status"),
                path)
    for key in ("participants", "retriever", "generator", "messages", "status"):
        if key not in obj:
            raise _fail(f"missing required section {key!r}", at(key))
    messages = []
    for i, mval in enumerate(_as_list(obj["messages"], at("messages"))):
        messages.append(_parse_message(mval, i, f"{at('messages')}[{i}]"))
    status = _parse_status(obj["status"], len(messages), at("status"))
    if status.state != "draft":
        if not messages or len(messages) % 2 != 0:
            raise _fail("a reviewed conversation must answer every user turn",
                        at("messages"))
    conv = Conversation(
        participants=_parse_participants(obj["participants"], at("participants")),
        retriever=parse_retriever_config(obj["retriever"], at("retriever")),
        generator=parse_generator_config(obj["generator"], at("generator")),
        messages=tuple(messages),
        status=status,
    )
    # anchors must lie within the target message text
    for i, comment in enumerate(conv.status.comments):
        a = comment.anchor
        if a is None:
            continue
        target_len = len(conv.messages[a.message_index].text)
        if not (0 <= a.start < a.end <= target_len):
            raise _fail("anchor span lies outside the message text",
                        f"{at('status')}.comments[{i}].anchor")
    return conv


def parse_conversation(document: bytes | str) -> Conversation:
    """Parse a UTF-8 JSON conversation document."""
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"document is not UTF-8: {exc}") from None
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"document is not valid JSON: {exc}") from None
    return parse_conversation_obj(data)


# ---------------------------------------------------------------------------
# Serialization (deterministic: fixed key order, stable list order)
# ---------------------------------------------------------------------------

def retriever_config_to_obj(config: RetrieverConfig) -> dict:
    obj: dict[str, Any] = {
        "engine": config.engine,
        "corpus_id": config.corpus_id,
        "top_k": config.top_k,
        "query_strategy": config.query_strategy,
        "bm25_k1": config.bm25_k1,
        "bm25_b": config.bm25_b,
    }
    if config.remote is not None:
        obj["remote"] = {
            "endpoint": config.remote.endpoint,
            "auth_token_env": config.remote.auth_token_env,
            "field_mapping": dict(sorted(config.remote.field_mapping.items())),
        }
    if config.settings:
        obj["settings"] = dict(sorted(config.settings.items()))
    return obj


def generator_config_to_obj(config: GeneratorConfig) -> dict:
    obj: dict[str, Any] = {
        "engine": config.engine,
        "model_id": config.model_id,
        "prompt_template": config.prompt_template,
        "system_prompt": config.system_prompt,
        "passage_template": config.passage_template,
        "decoding": {
            "temperature": config.decoding.temperature,
            "top_p": config.decoding.top_p,
            "max_tokens": config.decoding.max_tokens,
        },
        "timeout_s": config.timeout_s,
    }
    if config.endpoint is not None:
        obj["endpoint"] = {
            "url": config.endpoint.url,
            "auth_token_env": config.endpoint.auth_token_env,
        }
    if config.settings:
        obj["settings"] = dict(sorted(config.settings.items()))
    return obj


def context_passage_to_obj(passage: ContextPassage) -> dict:
    return {
        "document_id": passage.document_id,
        "passage_id": passage.passage_id,
        "title": passage.title,
        "text": passage.text,
        "score": passage.score,
        "relevance": passage.relevance,
        "source": passage.source,
    }


def _enrichments_to_obj(e: EnrichmentSet) -> dict:
    obj = {}
    if e.question_type is not None:
        obj["question_type"] = e.question_type
    if e.answerability is not None:
        obj["answerability"] = e.answerability
    if e.multi_turn is not None:
        obj["multi_turn"] = e.multi_turn
    return obj


def _message_to_obj(message: Message) -> dict:
    obj: dict[str, Any] = {"speaker": message.speaker, "text": message.text}
    if message.is_user:
        obj["enrichments"] = _enrichments_to_obj(message.enrichments or EnrichmentSet())
    else:
        if message.original_text is not None:
            obj["original_text"] = message.original_text
        obj["contexts"] = [context_passage_to_obj(c) for c in (message.contexts or ())]
    return obj


def conversation_to_obj(conv: Conversation) -> dict:
    status: dict[str, Any] = {
        "state": conv.status.state,
        "revisions": [
            {"editor": r.editor, "timestamp": r.timestamp,
             "message_index": r.message_index, "field": r.fields,
             "before": r.before, "after": r.after}
            for r in conv.status.revisions
        ],
        "comments": [],
    }
    for c in conv.status.comments:
        cobj: dict[str, Any] = {"author": c.author, "text": c.text}
        if c.anchor is not None:
            cobj["anchor"] = {"message_index": c.anchor.message_index,
                              "start": c.anchor.start, "end": c.anchor.end}
        status["comments"].append(cobj)
    return {
        "participants": {
            "author": conv.participants.author,
            "editors": list(conv.participants.editors),
            "reviewers": list(conv.participants.reviewers),
            "accessed_at": list(conv.participants.accessed_at),
        },
        "retriever": retriever_config_to_obj(conv.retriever),
        "generator": generator_config_to_obj(conv.generator),
        "messages": [_message_to_obj(m) for m in conv.messages],
        "status": status,
    }


def serialize_conversation(conv: Conversation) -> bytes:
    """Deterministic UTF-8 JSON bytes for a Conversation."""
    return (json.dumps(conversation_to_obj(conv), ensure_ascii=False, indent=2)
            + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Soft-quality validation (schema errors are parse_conversation's job)
# ---------------------------------------------------------------------------

def validate_conversation(conv: Conversation) -> ValidationReport:
    """Report soft-quality problems; an empty report means export-clean.

    Rules:
      missing_enrichment  — a user turn with no enrichment labels at all.
      unmarked_relevance  — an agent turn whose question is enriched answerable
                            but which has no context marked relevant.
    """
    entries = []
    for i, message in enumerate(conv.messages):
        if message.is_user:
            if message.enrichments is None or message.enrichments.is_empty:
                entries.append(ReportEntry(
                    kind="missing_enrichment", message_index=i,
                    detail="user turn has no enrichment labels"))
        else:
            user = conv.messages[i - 1]
            answerability = (user.enrichments.answerability
                             if user.enrichments else None)
            if answerability == "answerable":
                marked = any(c.relevance == "relevant" for c in (message.contexts or ()))
                if not marked:
                    entries.append(ReportEntry(
                        kind="unmarked_relevance", message_index=i,
                        detail="answerable turn has no context marked relevant"))
    return ValidationReport(entries=tuple(entries))


# ---------------------------------------------------------------------------
# Construction helpers
# ---------------------------------------------------------------------------

def new_conversation(author: str, retriever: RetrieverConfig,
                     generator: GeneratorConfig,
                     accessed_at: str | None = None) -> Conversation:
    participants = Participants(
        author=author,
        accessed_at=(accessed_at,) if accessed_at else (),
    )
    return Conversation(participants=participants, retriever=retriever,
                        generator=generator)


def with_user_message(conv: Conversation, text: str,
                      enrichments: EnrichmentSet | None = None) -> Conversation:
    if conv.messages and conv.messages[-1].is_user:
        raise SchemaViolation("previous user turn is still unanswered",
                              path=f"messages[{len(conv.messages) - 1}]")
    message = Message(speaker="user", text=text,
                      enrichments=enrichments or EnrichmentSet())
    return replace(conv, messages=conv.messages + (message,))


def with_agent_message(conv: Conversation, text: str,
                       contexts: Sequence[ContextPassage] = (),
                       original_text: str | None = None) -> Conversation:
    if not conv.messages or not conv.messages[-1].is_user:
        raise SchemaViolation("agent turn requires a pending user turn",
                              path=f"messages[{len(conv.messages)}]")
    message = Message(speaker="agent", text=text, contexts=tuple(contexts),
                      original_text=original_text)
    return replace(conv, messages=conv.messages + (message,))
