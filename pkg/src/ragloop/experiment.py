"""Small-scale benchmarking over exported conversations: task splitting,
a system matrix (retriever and/or generator), metrics, live progress, and a
deterministic result export.

Experiments are capped at 100 tasks; anything larger belongs in an offline
harness.
"""

from __future__ import annotations

import json
import random
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

from .conversation import (
    Conversation,
    ContextPassage,
    GeneratorConfig,
    Message,
    RetrieverConfig,
    generator_config_to_obj,
    parse_conversation_obj,
    parse_generator_config,
    parse_retriever_config,
    retriever_config_to_obj,
)
from .corpus import CorpusStore
from .errors import (
    EmptyDataset,
    IncompleteConversation,
    JudgeUnavailable,
    MalformedDocument,
    RagLoopError,
    SchemaViolation,
    TaskCapExceeded,
)
from .generation import generate, render_prompt
from .retrieval import retrieve

TASK_CAP = 100
SPLITS = ("every_turn", "last_turn", "first_turn", "random_turn")
MODES = ("generation_only", "full_rag", "retrieval_only")
METRICS = ("response_length", "rouge_l", "retrieval_recall", "llm_judge")

JUDGE_PROMPT = (
    "You are grading the quality of an assistant's answer.\n"
    "Question:\n{question}\n\n"
    "Passages the answer should rely on:\n{passages}\n"
    "Reference answer:\n{reference}\n\n"
    "Candidate answer:\n{prediction}\n\n"
    "Rate the candidate answer from 1 (useless) to 10 (perfect). "
    "Reply with a single integer and nothing else."
)


@dataclass(frozen=True)
class SystemSpec:
    name: str
    retriever: RetrieverConfig | None = None
    generator: GeneratorConfig | None = None


@dataclass(frozen=True)
class ExperimentSpec:
    conversations: tuple[Conversation, ...]
    split: str
    mode: str
    systems: tuple[SystemSpec, ...]
    metrics: tuple[str, ...]
    random_seed: int = 0
    judge: GeneratorConfig | None = None


@dataclass(frozen=True)
class Task:
    task_id: str
    conversation_index: int
    turn: int
    history: tuple[Message, ...]
    reference_response: str
    gold_contexts: tuple[ContextPassage, ...]

    @property
    def question(self) -> str:
        return self.history[-1].text

    @property
    def gold_keys(self) -> frozenset[tuple[str, str]]:
        return frozenset(c.key for c in self.gold_contexts)


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class TaskResult:
    system: str
    task_id: str
    prediction: str | None
    contexts: tuple[tuple[str, str], ...]
    scores: dict[str, float | None] = field(default_factory=dict)
    latency_ms: int = 0
    failed: bool = False
    error: str | None = None


@dataclass(frozen=True)
class Progress:
    done: int
    total: int
    failed: int


@dataclass(frozen=True)
class ExperimentResult:
    spec: ExperimentSpec
    tasks: tuple[Task, ...]
    results: tuple[tuple[TaskResult, ...], ...]  # [system][task]
    aggregates: dict[str, dict[str, dict[str, Any]]]
    progress: Progress


# ---------------------------------------------------------------------------
# Spec parsing
# ---------------------------------------------------------------------------

def _enum(value, allowed, what):
    if value not in allowed:
        raise SchemaViolation(f"{value!r} is not one of {list(allowed)}", path=what)
    return value


def parse_experiment_spec(data: bytes | str | dict) -> ExperimentSpec:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"spec is not UTF-8: {exc}") from None
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"spec is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaViolation("experiment spec must be a JSON object")
    unknown = set(data) - {"conversations", "split", "mode", "systems",
                           "metrics", "random_seed", "judge"}
    if unknown:
        raise SchemaViolation(f"unknown key {sorted(unknown)[0]!r}",
                              path=sorted(unknown)[0])
    raw_convs = data.get("conversations")
    if not isinstance(raw_convs, list) or not raw_convs:
        raise EmptyDataset("the experiment needs at least one conversation")
    conversations = tuple(
        parse_conversation_obj(obj, path=f"conversations[{i}]")
        for i, obj in enumerate(raw_convs))
    for i, conv in enumerate(conversations):
        if not conv.messages or len(conv.messages) % 2 != 0:
            raise IncompleteConversation(
                f"conversations[{i}] does not answer every user turn")
    split = _enum(data.get("split", "last_turn"), SPLITS, "split")
    mode = _enum(data.get("mode", "full_rag"), MODES, "mode")
    seed = data.get("random_seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise SchemaViolation("random_seed must be an integer", path="random_seed")
    raw_systems = data.get("systems")
    if not isinstance(raw_systems, list) or not raw_systems:
        raise SchemaViolation("at least one system is required", path="systems")
    systems = []
    seen_names: set[str] = set()
    for i, raw in enumerate(raw_systems):
        spath = f"systems[{i}]"
        if not isinstance(raw, dict):
            raise SchemaViolation("system must be an object", path=spath)
        extras = set(raw) - {"name", "retriever", "generator"}
        if extras:
            raise SchemaViolation(f"unknown key {sorted(extras)[0]!r}", path=spath)
        name = raw.get("name")
        if not isinstance(name, str) or not name:
            raise SchemaViolation("system name must be a non-empty string",
                                  path=f"{spath}.name")
        if name in seen_names:
            raise SchemaViolation(f"duplicate system name {name!r}",
                                  path=f"{spath}.name")
        seen_names.add(name)
        retriever = (parse_retriever_config(raw["retriever"], f"{spath}.retriever")
                     if raw.get("retriever") is not None else None)
        generator = (parse_generator_config(raw["generator"], f"{spath}.generator")
                     if raw.get("generator") is not None else None)
        if mode in ("full_rag", "retrieval_only") and retriever is None:
            raise SchemaViolation(f"mode {mode} requires a retriever",
                                  path=f"{spath}.retriever")
        if mode in ("full_rag", "generation_only") and generator is None:
            raise SchemaViolation(f"mode {mode} requires a generator",
                                  path=f"{spath}.generator")
        systems.append(SystemSpec(name=name, retriever=retriever,
                                  generator=generator))
    raw_metrics = data.get("metrics", ["response_length"])
    if not isinstance(raw_metrics, list) or not raw_metrics:
        raise SchemaViolation("metrics must be a non-empty array", path="metrics")
    metrics = []
    for m in raw_metrics:
        _enum(m, METRICS, "metrics")
        if m not in metrics:
            metrics.append(m)
    judge = (parse_generator_config(data["judge"], "judge")
             if data.get("judge") is not None else None)
    if "llm_judge" in metrics and judge is None:
        raise SchemaViolation("llm_judge requires a judge generator config",
                              path="judge")
    return ExperimentSpec(conversations=conversations, split=split, mode=mode,
                          systems=tuple(systems), metrics=tuple(metrics),
                          random_seed=seed, judge=judge)


# ---------------------------------------------------------------------------
# Task splitting
# ---------------------------------------------------------------------------

def split_tasks(conversations: Sequence[Conversation], split: str,
                seed: int = 0) -> list[Task]:
    """One task per (conversation, chosen user turn).

    Turn t (1-based) keeps messages[:2t-1] as history; the reference is the
    agent reply at that turn, its relevant-marked contexts are gold.
    """
    if not conversations:
        raise EmptyDataset("no conversations to split")
    _enum(split, SPLITS, "split")
    rng = random.Random(seed)
    tasks: list[Task] = []
    for index, conv in enumerate(conversations):
        if not conv.messages or len(conv.messages) % 2 != 0:
            raise IncompleteConversation(
                f"conversation {index} does not answer every user turn")
        n_turns = len(conv.messages) // 2
        if split == "every_turn":
            turns = range(1, n_turns + 1)
        elif split == "last_turn":
            turns = (n_turns,)
        elif split == "first_turn":
            turns = (1,)
        else:  # random_turn: one seeded draw per conversation, in order
            turns = (rng.randint(1, n_turns),)
        for t in turns:
            reference = conv.messages[2 * t - 1]
            if not reference.text:
                raise IncompleteConversation(
                    f"conversation {index} turn {t} has an empty agent reply")
            gold = tuple(c for c in (reference.contexts or ())
                         if c.relevance == "relevant")
            tasks.append(Task(
                task_id=f"c{index}#t{t}",
                conversation_index=index,
                turn=t,
                history=conv.messages[:2 * t - 1],
                reference_response=reference.text,
                gold_contexts=gold,
            ))
    if len(tasks) > TASK_CAP:
        raise TaskCapExceeded(
            f"{len(tasks)} tasks exceed the cap of {TASK_CAP}; "
            "run larger studies offline", count=len(tasks))
    return tasks


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def metric_response_length(prediction: str) -> int:
    return len(prediction.split())


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    m = len(b)
    prev = [0] * (m + 1)
    for token in a:
        cur = [0] * (m + 1)
        for j in range(1, m + 1):
            if token == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[m]


def metric_rouge_l(prediction: str, reference: str) -> RougeScore:
    pred = prediction.lower().split()
    ref = reference.lower().split()
    if not pred or not ref:
        return RougeScore(precision=0.0, recall=0.0, f1=0.0)
    lcs = _lcs_length(pred, ref)
    precision = lcs / len(pred)
    recall = lcs / len(ref)
    f1 = (2 * precision * recall / (precision + recall)) if lcs else 0.0
    return RougeScore(precision=precision, recall=recall, f1=f1)


def metric_retrieval_recall(retrieved: frozenset | set,
                            gold: frozenset | set) -> float | None:
    """None marks not-applicable (no gold passages to recall)."""
    if not gold:
        return None
    return len(set(retrieved) & set(gold)) / len(gold)


INTEGER_RE = re.compile(r"\d+")


def metric_llm_judge(judge: GeneratorConfig, task: Task,
                     prediction: str) -> int | None:
    """Ask the judge for a 1-10 integer; one retry on an unusable reply."""
    passages = "\n".join(f"[{n}] {c.text}"
                         for n, c in enumerate(task.gold_contexts, start=1))
    prompt = JUDGE_PROMPT.format(question=task.question, passages=passages,
                                 reference=task.reference_response,
                                 prediction=prediction)
    for _ in range(2):
        reply = generate(judge, prompt)
        match = INTEGER_RE.search(reply.text)
        if match:
            value = int(match.group(0))
            if 1 <= value <= 10:
                return value
    return None


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

class ExperimentRun:
    """A single experiment execution with thread-safe progress reporting."""

    def __init__(self, spec: ExperimentSpec, store: CorpusStore | None = None,
                 workers: int = 4):
        self.spec = spec
        self.store = store
        self.workers = max(1, workers)
        self.tasks = split_tasks(spec.conversations, spec.split, spec.random_seed)
        self._lock = threading.Lock()
        self._done = 0
        self._failed = 0
        self._total = len(self.tasks) * len(spec.systems)
        self._result: ExperimentResult | None = None

    def progress(self) -> Progress:
        with self._lock:
            return Progress(done=self._done, total=self._total,
                            failed=self._failed)

    @property
    def finished(self) -> bool:
        with self._lock:
            return self._done >= self._total and self._result is not None

    def result(self) -> ExperimentResult:
        if self._result is None:
            raise RuntimeError("experiment has not finished")
        return self._result

    def _preflight(self) -> None:
        if "llm_judge" not in self.spec.metrics:
            return
        assert self.spec.judge is not None
        try:
            generate(self.spec.judge,
                     "Reply with the single integer 1 and nothing else.")
        except RagLoopError as exc:
            raise JudgeUnavailable(f"judge preflight failed: {exc}") from None

    def _run_one(self, system: SystemSpec, task: Task) -> TaskResult:
        prediction: str | None = None
        latency_ms = 0
        if self.spec.mode == "retrieval_only":
            contexts = retrieve(system.retriever, task.history, store=self.store)
        elif self.spec.mode == "generation_only":
            contexts = list(task.gold_contexts)
            prompt = render_prompt(system.generator, task.history, contexts)
            result = generate(system.generator, prompt)
            prediction = result.text
            latency_ms = result.latency_ms
        else:  # full_rag
            contexts = retrieve(system.retriever, task.history, store=self.store)
            prompt = render_prompt(system.generator, task.history, contexts)
            result = generate(system.generator, prompt)
            prediction = result.text
            latency_ms = result.latency_ms
        retrieved_keys = tuple(c.key for c in contexts)
        scores: dict[str, float | None] = {}
        for metric in self.spec.metrics:
            if metric == "response_length":
                scores[metric] = (float(metric_response_length(prediction))
                                  if prediction is not None else None)
            elif metric == "rouge_l":
                scores[metric] = (metric_rouge_l(prediction,
                                                 task.reference_response).f1
                                  if prediction is not None else None)
            elif metric == "retrieval_recall":
                if self.spec.mode == "generation_only":
                    scores[metric] = None
                else:
                    scores[metric] = metric_retrieval_recall(
                        set(retrieved_keys), task.gold_keys)
            elif metric == "llm_judge":
                if prediction is None:
                    scores[metric] = None
                else:
                    value = metric_llm_judge(self.spec.judge, task, prediction)
                    scores[metric] = float(value) if value is not None else None
        return TaskResult(system=system.name, task_id=task.task_id,
                          prediction=prediction, contexts=retrieved_keys,
                          scores=scores, latency_ms=latency_ms)

    def _run_slot(self, s: int, t: int,
                  slots: list[list[TaskResult | None]]) -> None:
        system = self.spec.systems[s]
        task = self.tasks[t]
        try:
            result = self._run_one(system, task)
        except Exception as exc:
            result = TaskResult(system=system.name, task_id=task.task_id,
                                prediction=None, contexts=(),
                                scores={m: None for m in self.spec.metrics},
                                failed=True, error=str(exc))
        slots[s][t] = result
        with self._lock:
            self._done += 1
            if result.failed:
                self._failed += 1

    def run(self) -> ExperimentResult:
        self._preflight()
        slots: list[list[TaskResult | None]] = [
            [None] * len(self.tasks) for _ in self.spec.systems]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            futures = [pool.submit(self._run_slot, s, t, slots)
                       for s in range(len(self.spec.systems))
                       for t in range(len(self.tasks))]
            for future in futures:
                future.result()
        results = tuple(tuple(row) for row in slots)  # type: ignore[arg-type]
        aggregates = compute_aggregates(self.spec, results)
        with self._lock:
            self._result = ExperimentResult(
                spec=self.spec, tasks=tuple(self.tasks), results=results,
                aggregates=aggregates,
                progress=Progress(done=self._done, total=self._total,
                                  failed=self._failed))
        return self._result


def compute_aggregates(spec: ExperimentSpec,
                       results: Sequence[Sequence[TaskResult]]) -> dict:
    aggregates: dict[str, dict[str, dict[str, Any]]] = {}
    for system, row in zip(spec.systems, results):
        per_metric = {}
        for metric in spec.metrics:
            values = [r.scores.get(metric) for r in row
                      if not r.failed and r.scores.get(metric) is not None]
            per_metric[metric] = {
                "mean": (sum(values) / len(values)) if values else None,
                "count": len(values),
            }
        aggregates[system.name] = per_metric
    return aggregates


def run_experiment(spec: ExperimentSpec, store: CorpusStore | None = None,
                   workers: int = 4) -> ExperimentResult:
    return ExperimentRun(spec, store=store, workers=workers).run()


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def export_results(result: ExperimentResult) -> bytes:
    """One self-describing JSON document: models, tasks, predictions, metrics."""
    spec = result.spec
    models = []
    for system in spec.systems:
        entry: dict[str, Any] = {"name": system.name}
        if system.retriever is not None:
            entry["retriever"] = retriever_config_to_obj(system.retriever)
        if system.generator is not None:
            entry["generator"] = generator_config_to_obj(system.generator)
        models.append(entry)
    tasks = [{
        "task_id": task.task_id,
        "conversation_index": task.conversation_index,
        "turn": task.turn,
        "question": task.question,
        "history": [{"speaker": m.speaker, "text": m.text} for m in task.history],
        "reference_response": task.reference_response,
        "gold_contexts": [{"document_id": d, "passage_id": p}
                          for d, p in sorted(task.gold_keys)],
    } for task in result.tasks]
    predictions = []
    per_task_scores = []
    for row in result.results:
        for r in row:
            predictions.append({
                "system": r.system,
                "task_id": r.task_id,
                "prediction": r.prediction,
                "contexts": [{"document_id": d, "passage_id": p}
                             for d, p in r.contexts],
                "latency_ms": r.latency_ms,
                "failed": r.failed,
                "error": r.error,
            })
            per_task_scores.append({
                "system": r.system,
                "task_id": r.task_id,
                "scores": {m: r.scores.get(m) for m in spec.metrics},
            })
    document = {
        "format": "eval-export v1",
        "mode": spec.mode,
        "split": spec.split,
        "random_seed": spec.random_seed,
        "models": models,
        "tasks": tasks,
        "predictions": predictions,
        "metrics": {
            "names": list(spec.metrics),
            "per_task": per_task_scores,
            "aggregates": result.aggregates,
        },
        "progress": {"done": result.progress.done,
                     "total": result.progress.total,
                     "failed": result.progress.failed},
    }
    return (json.dumps(document, ensure_ascii=False, indent=2) + "\n").encode("utf-8")
