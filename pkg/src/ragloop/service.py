"""Stateless HTTP facade over the core modules.

Conversations and review batches always travel inside requests and responses;
the only server-side state is the corpus index directory and in-memory
experiment runs, which expire on a TTL.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import create as create_ops
from .conversation import (
    CommentAnchor,
    Conversation,
    context_passage_to_obj,
    conversation_to_obj,
    parse_conversation_obj,
    parse_context_passage,
    parse_enrichments,
    parse_generator_config,
    parse_retriever_config,
    validate_conversation,
    with_agent_message,
    with_user_message,
)
from .corpus import Chunking, CorpusStore, parse_corpus_jsonl
from .errors import (
    ExperimentStillRunning,
    MalformedDocument,
    MissingPrincipal,
    RagLoopError,
    SchemaViolation,
    UnknownExperiment,
)
from .experiment import ExperimentRun, export_results, parse_experiment_spec
from .generation import GenerationResult, agent_turn, generate, render_prompt
from .retrieval import SearchHit, hit_to_context, retrieve, side_search
from .review import (
    ReviewBatch,
    add_comment,
    batch_from_obj,
    batch_to_obj,
    decide,
    export_batch,
    forbid,
    goto,
    review_edit_enrichments,
    review_edit_relevance,
    review_edit_response,
)

DEFAULT_PRINCIPAL_HEADER = "x-annotator-email"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8040
    data_dir: str = "data"
    principal_header: str = DEFAULT_PRINCIPAL_HEADER
    experiment_ttl_s: float = 3600.0
    workers: int = 4


def load_service_config(path: str | None = None,
                        env: dict[str, str] | None = None) -> ServiceConfig:
    """Config file plus RAGLOOP_* environment overrides."""
    env = os.environ if env is None else env
    config = ServiceConfig()
    if path is not None:
        try:
            obj = json.loads(Path(path).read_text("utf-8"))
        except FileNotFoundError:
            raise MalformedDocument(f"config file {path!r} does not exist") from None
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"config file is not valid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise MalformedDocument("config file must hold a JSON object")
        unknown = set(obj) - {"host", "port", "data_dir", "principal_header",
                              "experiment_ttl_s", "workers"}
        if unknown:
            raise MalformedDocument(f"unknown config key {sorted(unknown)[0]!r}")
        config = replace(config, **obj)
    overrides: dict[str, Any] = {}
    if env.get("RAGLOOP_HOST"):
        overrides["host"] = env["RAGLOOP_HOST"]
    if env.get("RAGLOOP_PORT"):
        overrides["port"] = int(env["RAGLOOP_PORT"])
    if env.get("RAGLOOP_DATA_DIR"):
        overrides["data_dir"] = env["RAGLOOP_DATA_DIR"]
    if env.get("RAGLOOP_PRINCIPAL_HEADER"):
        overrides["principal_header"] = env["RAGLOOP_PRINCIPAL_HEADER"]
    if env.get("RAGLOOP_EXPERIMENT_TTL_S"):
        overrides["experiment_ttl_s"] = float(env["RAGLOOP_EXPERIMENT_TTL_S"])
    if env.get("RAGLOOP_WORKERS"):
        overrides["workers"] = int(env["RAGLOOP_WORKERS"])
    return replace(config, **overrides) if overrides else config


@dataclass
class _ExperimentEntry:
    run: ExperimentRun
    created_at: float
    thread: threading.Thread | None = None
    error: Exception | None = None


class ExperimentManager:
    """In-memory experiment registry; entries expire after a TTL."""

    def __init__(self, ttl_s: float = 3600.0, clock=time.monotonic):
        self.ttl_s = ttl_s
        self.clock = clock
        self._entries: dict[str, _ExperimentEntry] = {}
        self._lock = threading.Lock()

    def _sweep(self) -> None:
        now = self.clock()
        with self._lock:
            expired = [key for key, entry in self._entries.items()
                       if now - entry.created_at > self.ttl_s
                       and entry.thread is not None
                       and not entry.thread.is_alive()]
            for key in expired:
                del self._entries[key]

    def start(self, run: ExperimentRun) -> str:
        experiment_id = secrets.token_hex(8)
        entry = _ExperimentEntry(run=run, created_at=self.clock())

        def execute():
            try:
                run.run()
            except Exception as exc:
                entry.error = exc

        entry.thread = threading.Thread(target=execute, daemon=True)
        with self._lock:
            self._entries[experiment_id] = entry
        entry.thread.start()
        self._sweep()
        return experiment_id

    def _entry(self, experiment_id: str) -> _ExperimentEntry:
        self._sweep()
        with self._lock:
            entry = self._entries.get(experiment_id)
        if entry is None:
            raise UnknownExperiment(f"no experiment {experiment_id!r}")
        return entry

    def state(self, experiment_id: str) -> dict:
        entry = self._entry(experiment_id)
        progress = entry.run.progress()
        if entry.error is not None:
            state = "failed"
        elif entry.run.finished:
            state = "done"
        else:
            state = "running"
        payload = {
            "experiment_id": experiment_id,
            "state": state,
            "progress": {"done": progress.done, "total": progress.total,
                         "failed": progress.failed},
        }
        if entry.error is not None:
            payload["error"] = str(entry.error)
        return payload

    def result_bytes(self, experiment_id: str) -> bytes:
        entry = self._entry(experiment_id)
        if entry.error is not None:
            if isinstance(entry.error, RagLoopError):
                raise entry.error
            wrapped = RagLoopError(f"experiment failed: {entry.error}")
            wrapped.http_status = 500
            raise wrapped
        if not entry.run.finished:
            raise ExperimentStillRunning(
                f"experiment {experiment_id!r} is still running")
        return export_results(entry.run.result())

    def delete(self, experiment_id: str) -> None:
        self._entry(experiment_id)
        with self._lock:
            self._entries.pop(experiment_id, None)

    def list(self) -> list[dict]:
        self._sweep()
        with self._lock:
            ids = list(self._entries)
        states = []
        for experiment_id in ids:
            try:
                states.append(self.state(experiment_id))
            except UnknownExperiment:
                continue
        return states


def _require(body: dict, key: str):
    if not isinstance(body, dict):
        raise SchemaViolation("request body must be a JSON object")
    if key not in body:
        raise SchemaViolation(f"missing required field {key!r}", path=key)
    return body[key]


def _conversation_from(body: dict) -> Conversation:
    return parse_conversation_obj(_require(body, "conversation"),
                                  path="conversation")


def _generation_result_to_obj(result: GenerationResult) -> dict:
    return {"text": result.text, "prompt_tokens": result.prompt_tokens,
            "completion_tokens": result.completion_tokens,
            "latency_ms": result.latency_ms}


def _int_field(body: dict, key: str, default=None) -> int:
    value = body.get(key, default)
    if value is default and default is not None:
        return default
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(f"{key} must be an integer", path=key)
    return value


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    store = CorpusStore(config.data_dir)
    experiments = ExperimentManager(ttl_s=config.experiment_ttl_s)
    app = FastAPI(title="ragloop", docs_url=None, redoc_url=None)
    app.state.config = config
    app.state.store = store
    app.state.experiments = experiments
    # The browser UI is served from its own origin, so the API must answer
    # preflights and label responses for cross-origin use.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RagLoopError)
    async def ragloop_error(request: Request, exc: RagLoopError):
        return JSONResponse(status_code=exc.http_status, content=exc.to_payload())

    async def read_body(request: Request) -> Any:
        raw = await request.body()
        if not raw:
            raise MalformedDocument("request body is empty")
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"request body is not valid JSON: {exc}") from None

    def principal_of(request: Request) -> str:
        value = request.headers.get(config.principal_header, "").strip()
        if not value:
            raise MissingPrincipal(
                f"the {config.principal_header} header is required")
        return value

    def batch_of(body: dict, principal: str) -> ReviewBatch:
        raw = _require(body, "batch")
        if isinstance(raw, list):
            return batch_from_obj(raw, reviewer=principal)
        if not isinstance(raw, dict):
            raise SchemaViolation("batch must be an array or a batch object",
                                  path="batch")
        batch = batch_from_obj(_require(raw, "conversations"), reviewer=principal)
        cursor = _int_field(raw, "cursor", 0)
        visited_raw = raw.get("visited", [0])
        decisions_raw = raw.get("decisions",
                                [None] * len(batch.conversations))
        if not isinstance(visited_raw, list) or \
                any(isinstance(v, bool) or not isinstance(v, int)
                    for v in visited_raw):
            raise SchemaViolation("visited must be an array of integers",
                                  path="batch.visited")
        if (not isinstance(decisions_raw, list)
                or len(decisions_raw) != len(batch.conversations)
                or any(d is not None and d not in
                       ("accept", "accept_with_edits", "reject")
                       for d in decisions_raw)):
            raise SchemaViolation("decisions must list one decision or null "
                                  "per conversation", path="batch.decisions")
        n = len(batch.conversations)
        if not 0 <= cursor < n or any(not 0 <= v < n for v in visited_raw):
            raise SchemaViolation("cursor/visited out of range", path="batch")
        visited = tuple(dict.fromkeys(visited_raw)) or (0,)
        return replace(batch, cursor=cursor, visited=visited,
                       decisions=tuple(decisions_raw))

    # ------------------------------------------------------------- health

    @app.get("/api/health")
    async def health():
        return {"status": "ok"}

    # ---------------------------------------------------------- retrieval

    @app.post("/api/retrieve")
    async def api_retrieve(request: Request):
        body = await read_body(request)
        retriever = parse_retriever_config(_require(body, "retriever"),
                                           "retriever")
        if "query" in body and body["query"] is not None:
            query = body["query"]
            if not isinstance(query, str):
                raise SchemaViolation("query must be a string", path="query")
            hits = side_search(retriever, query, top_k=retriever.top_k,
                               store=store)
            passages = [hit_to_context(h, source="retrieved") for h in hits]
        else:
            conv = _conversation_from(body)
            manual = body.get("manual_query")
            passages = retrieve(retriever, conv, store=store, manual_text=manual)
        return {"passages": [context_passage_to_obj(p) for p in passages]}

    @app.post("/api/search")
    async def api_search(request: Request):
        body = await read_body(request)
        retriever = parse_retriever_config(_require(body, "retriever"),
                                           "retriever")
        query = _require(body, "query")
        if not isinstance(query, str):
            raise SchemaViolation("query must be a string", path="query")
        top_k = _int_field(body, "top_k", retriever.top_k)
        hits = side_search(retriever, query, top_k=top_k, store=store)
        return {"hits": [{"document_id": h.document_id,
                          "passage_id": h.passage_id, "title": h.title,
                          "text": h.text, "score": h.score} for h in hits]}

    # --------------------------------------------------------- generation

    @app.post("/api/generate")
    async def api_generate(request: Request):
        body = await read_body(request)
        generator = parse_generator_config(_require(body, "generator"),
                                           "generator")
        if "prompt" in body:
            prompt = body["prompt"]
            if not isinstance(prompt, str):
                raise SchemaViolation("prompt must be a string", path="prompt")
        else:
            conv = _conversation_from(body)
            passages = [parse_context_passage(p, f"passages[{i}]")
                        for i, p in enumerate(body.get("passages", []))]
            prompt = render_prompt(generator, conv, passages)
        result = generate(generator, prompt)
        return {"result": _generation_result_to_obj(result), "prompt": prompt}

    @app.post("/api/chat/turn")
    async def api_chat_turn(request: Request):
        principal_of(request)
        body = await read_body(request)
        conv = _conversation_from(body)
        user_text = body.get("user_text")
        if user_text is not None:
            if not isinstance(user_text, str) or not user_text.strip():
                raise SchemaViolation("user_text must be a non-empty string",
                                      path="user_text")
            conv = with_user_message(conv, user_text)
        manual = body.get("manual_query")
        turn = agent_turn(conv.retriever, conv.generator, conv, store=store,
                          manual_query=manual)
        conv = with_agent_message(conv, turn.response.text,
                                  contexts=turn.contexts)
        return {
            "conversation": conversation_to_obj(conv),
            "response": _generation_result_to_obj(turn.response),
            "contexts": [context_passage_to_obj(c) for c in turn.contexts],
        }

    @app.post("/api/chat/regenerate")
    async def api_chat_regenerate(request: Request):
        principal_of(request)
        body = await read_body(request)
        conv = _conversation_from(body)
        turn_index = _int_field(body, "turn_index")
        conv, result = create_ops.regenerate_response(conv, turn_index,
                                                      store=store)
        return {"conversation": conversation_to_obj(conv),
                "response": _generation_result_to_obj(result)}

    # ------------------------------------------------------- conversations

    @app.post("/api/conversations/validate")
    async def api_validate(request: Request):
        body = await read_body(request)
        conv = _conversation_from(body)
        report = validate_conversation(conv)
        return {"clean": report.is_clean,
                "entries": [{"kind": e.kind, "message_index": e.message_index,
                             "detail": e.detail} for e in report.entries]}

    @app.post("/api/conversations/hints")
    async def api_hints(request: Request):
        body = await read_body(request)
        conv = _conversation_from(body)
        return {"hints": create_ops.hints_to_obj(create_ops.compute_hints(conv))}

    @app.post("/api/conversations/edit")
    async def api_conversation_edit(request: Request):
        principal = principal_of(request)
        body = await read_body(request)
        conv = _conversation_from(body)
        edit = _require(body, "edit")
        kind = _require(edit, "kind")
        turn_index = _int_field(edit, "turn_index")
        if kind == "response":
            text = _require(edit, "text")
            if not isinstance(text, str):
                raise SchemaViolation("text must be a string", path="edit.text")
            conv = create_ops.edit_response(conv, turn_index, text,
                                            editor=principal)
        elif kind == "relevance":
            ordinal = _int_field(edit, "context_ordinal")
            relevance = _require(edit, "relevance")
            conv = create_ops.edit_passage_relevance(conv, turn_index, ordinal,
                                                     relevance)
        elif kind == "enrichments":
            labels = _require(edit, "enrichments")
            enrichments = parse_enrichments(labels, "edit.enrichments")
            conv = create_ops.set_enrichments(conv, turn_index, enrichments)
        elif kind == "add_passage":
            hit_obj = _require(edit, "hit")
            if not isinstance(hit_obj, dict):
                raise SchemaViolation("hit must be an object", path="edit.hit")
            hit = SearchHit(
                document_id=str(hit_obj.get("document_id", "")),
                passage_id=str(hit_obj.get("passage_id", "")),
                title=str(hit_obj.get("title", "")),
                text=str(hit_obj.get("text", "")),
                score=float(hit_obj.get("score", 0.0)),
            )
            conv = create_ops.add_searched_passage(conv, turn_index, hit)
        else:
            raise SchemaViolation(f"unknown edit kind {kind!r}", path="edit.kind")
        return {"conversation": conversation_to_obj(conv)}

    @app.post("/api/conversations/export")
    async def api_export(request: Request):
        principal_of(request)
        body = await read_body(request)
        conv = _conversation_from(body)
        acknowledgements = body.get("acknowledgements", [])
        if not isinstance(acknowledgements, list) or \
                any(not isinstance(a, bool) for a in acknowledgements):
            raise SchemaViolation("acknowledgements must be an array of booleans",
                                  path="acknowledgements")
        result = create_ops.export_with_checklist(conv, acknowledgements)
        return {"document": result.document.decode("utf-8"),
                "checklist": create_ops.checklist_to_obj(result.checklist)}

    @app.post("/api/diff")
    async def api_diff(request: Request):
        body = await read_body(request)
        original = _require(body, "original")
        edited = _require(body, "edited")
        if not isinstance(original, str) or not isinstance(edited, str):
            raise SchemaViolation("original and edited must be strings")
        return {"segments": create_ops.diff_to_obj(
            create_ops.word_diff(original, edited))}

    @app.post("/api/overlap")
    async def api_overlap(request: Request):
        body = await read_body(request)
        response_text = _require(body, "response")
        if not isinstance(response_text, str):
            raise SchemaViolation("response must be a string", path="response")
        passages = [parse_context_passage(p, f"passages[{i}]")
                    for i, p in enumerate(_require(body, "passages"))]
        min_ngram = _int_field(body, "min_ngram", 3)
        if min_ngram < 1:
            raise SchemaViolation("min_ngram must be >= 1", path="min_ngram")
        spans = create_ops.highlight_overlap(response_text, passages,
                                             min_ngram=min_ngram)
        return {"spans": create_ops.overlap_to_obj(spans)}

    # --------------------------------------------------------------- review

    @app.post("/api/review/batch/validate")
    async def api_review_validate(request: Request):
        principal = principal_of(request)
        body = await read_body(request)
        raw = _require(body, "batch")
        if not isinstance(raw, list):
            raise SchemaViolation("batch must be a JSON array of conversations",
                                  path="batch")
        batch = batch_from_obj(raw, reviewer=principal)
        return batch_to_obj(batch)

    @app.post("/api/review/goto")
    async def api_review_goto(request: Request):
        principal = principal_of(request)
        body = await read_body(request)
        batch = goto(batch_of(body, principal), _int_field(body, "item"))
        return batch_to_obj(batch)

    @app.post("/api/review/edit")
    async def api_review_edit(request: Request):
        principal = principal_of(request)
        body = await read_body(request)
        batch = batch_of(body, principal)
        item = _int_field(body, "item")
        edit = _require(body, "edit")
        kind = _require(edit, "kind")
        if kind == "question":
            forbid("edit_question")
        turn_index = _int_field(edit, "turn_index")
        if kind == "response":
            text = _require(edit, "text")
            if not isinstance(text, str):
                raise SchemaViolation("text must be a string", path="edit.text")
            batch = review_edit_response(batch, item, turn_index, text)
        elif kind == "relevance":
            batch = review_edit_relevance(batch, item, turn_index,
                                          _int_field(edit, "context_ordinal"),
                                          _require(edit, "relevance"))
        elif kind == "enrichments":
            enrichments = parse_enrichments(_require(edit, "enrichments"),
                                            "edit.enrichments")
            batch = review_edit_enrichments(batch, item, turn_index, enrichments)
        else:
            raise SchemaViolation(f"unknown edit kind {kind!r}", path="edit.kind")
        return batch_to_obj(batch)

    @app.post("/api/review/search")
    async def api_review_search(request: Request):
        principal_of(request)
        forbid("run_side_search")

    @app.post("/api/review/retrieve")
    async def api_review_retrieve(request: Request):
        principal_of(request)
        forbid("run_retrieval")

    @app.post("/api/review/comment")
    async def api_review_comment(request: Request):
        principal = principal_of(request)
        body = await read_body(request)
        batch = batch_of(body, principal)
        item = _int_field(body, "item")
        text = _require(body, "text")
        if not isinstance(text, str):
            raise SchemaViolation("text must be a string", path="text")
        anchor = None
        if body.get("anchor") is not None:
            a = body["anchor"]
            if not isinstance(a, dict):
                raise SchemaViolation("anchor must be an object", path="anchor")
            anchor = CommentAnchor(
                message_index=_int_field(a, "message_index"),
                start=_int_field(a, "start"), end=_int_field(a, "end"))
        batch = add_comment(batch, item, text, anchor=anchor)
        return batch_to_obj(batch)

    @app.post("/api/review/decide")
    async def api_review_decide(request: Request):
        principal = principal_of(request)
        body = await read_body(request)
        batch = batch_of(body, principal)
        decision = _require(body, "decision")
        batch = decide(batch, _int_field(body, "item"), decision)
        return batch_to_obj(batch)

    @app.post("/api/review/export")
    async def api_review_export(request: Request):
        principal = principal_of(request)
        body = await read_body(request)
        batch = batch_of(body, principal)
        return {"document": export_batch(batch).decode("utf-8")}

    # ---------------------------------------------------------- experiments

    @app.post("/api/experiments")
    async def api_experiment_start(request: Request):
        principal_of(request)
        body = await read_body(request)
        spec = parse_experiment_spec(body)
        run = ExperimentRun(spec, store=store, workers=config.workers)
        experiment_id = experiments.start(run)
        return {"experiment_id": experiment_id,
                "total": len(run.tasks) * len(spec.systems)}

    @app.get("/api/experiments")
    async def api_experiment_list():
        return {"experiments": experiments.list()}

    @app.get("/api/experiments/{experiment_id}")
    async def api_experiment_state(experiment_id: str):
        return experiments.state(experiment_id)

    @app.get("/api/experiments/{experiment_id}/result")
    async def api_experiment_result(experiment_id: str):
        return Response(content=experiments.result_bytes(experiment_id),
                        media_type="application/json")

    @app.delete("/api/experiments/{experiment_id}")
    async def api_experiment_delete(experiment_id: str, request: Request):
        principal_of(request)
        experiments.delete(experiment_id)
        return {"deleted": experiment_id}

    # --------------------------------------------------------------- corpora

    @app.post("/api/corpora")
    async def api_corpora_ingest(request: Request):
        principal_of(request)
        body = await read_body(request)
        corpus_id = _require(body, "corpus_id")
        if not isinstance(corpus_id, str):
            raise SchemaViolation("corpus_id must be a string", path="corpus_id")
        jsonl = _require(body, "documents_jsonl")
        if not isinstance(jsonl, str):
            raise SchemaViolation("documents_jsonl must be a string",
                                  path="documents_jsonl")
        chunking = Chunking(
            max_tokens=_int_field(body, "max_tokens", Chunking().max_tokens),
            overlap=_int_field(body, "overlap", Chunking().overlap)).check()
        documents = parse_corpus_jsonl(jsonl)
        index = store.ingest(corpus_id, documents, chunking)
        return index.stats()

    @app.get("/api/corpora")
    async def api_corpora_list():
        return {"corpora": store.list()}

    return app
