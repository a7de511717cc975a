"""Acceptance gate: nine end-to-end checks, each with a runtime budget.

Every check prints one PASS line (visible under pytest -s or in the -v
test listing) and fails loudly otherwise. Tolerances and budgets are
stated inline next to each assertion.
"""

import json
import random
import re
import threading
import time

import pytest
import requests

from builders import make_conversation, make_generator, make_retriever
from stubs import http_stub
from ragloop.conversation import (
    ANSWERABILITY,
    CONVERSATION_STATES,
    Comment,
    CommentAnchor,
    ContextPassage,
    Conversation,
    ConversationStatus,
    Decoding,
    EnrichmentSet,
    GENERATOR_ENGINES,
    GeneratorConfig,
    GeneratorEndpoint,
    MULTI_TURN,
    Message,
    PASSAGE_SOURCES,
    Participants,
    QUERY_STRATEGIES,
    QUESTION_TYPES,
    RELEVANCE,
    RETRIEVER_ENGINES,
    RemoteRetriever,
    RetrieverConfig,
    Revision,
    conversation_to_obj,
    parse_conversation,
    serialize_conversation,
)
from ragloop.corpus import CorpusDocument, build_index
from ragloop.create import highlight_overlap, word_diff
from ragloop.errors import (
    ConstraintViolation,
    ItemNotVisited,
    MissingEdits,
    MissingRejectComment,
    SchemaViolation,
    TaskCapExceeded,
)
from ragloop.experiment import (
    ExperimentRun,
    export_results,
    metric_llm_judge,
    metric_response_length,
    metric_retrieval_recall,
    metric_rouge_l,
    parse_experiment_spec,
    split_tasks,
)
from ragloop.retrieval import search
from ragloop.review import (
    add_comment,
    decide,
    export_batch,
    forbid,
    goto,
    load_batch,
    review_edit_enrichments,
    review_edit_relevance,
    review_edit_response,
)
from test_retrieval import bm25_oracle


def report(name: str, elapsed: float, budget: float) -> None:
    assert elapsed < budget, (
        f"{name} took {elapsed:.2f}s, over its {budget:.0f}s budget")
    print(f"PASS {name}: {elapsed:.2f}s (budget {budget:.0f}s)")


# ---------------------------------------------------------------------------
# 1. File-format round-trip
# ---------------------------------------------------------------------------

TS = "2026-02-11T09:30:00Z"


def _user(text, qt=None, ans=None, mt=None):
    return Message(speaker="user", text=text,
                   enrichments=EnrichmentSet(question_type=qt,
                                             answerability=ans,
                                             multi_turn=mt))


def _agent(text, contexts=(), original=None):
    return Message(speaker="agent", text=text, contexts=tuple(contexts),
                   original_text=original)


def _ctx(doc, pid, text, rel="unmarked", src="retrieved", score=1.0, title=""):
    return ContextPassage(document_id=doc, passage_id=pid, title=title,
                          text=text, score=score, relevance=rel, source=src)


def _conv(messages=(), retriever=None, generator=None, status=None,
          participants=None):
    return Conversation(
        participants=participants or Participants(author="ann@example.org"),
        retriever=retriever or make_retriever(),
        generator=generator or make_generator(),
        messages=tuple(messages),
        status=status or ConversationStatus())


def round_trip_fixtures():
    """Twenty documents that jointly cover every closed vocabulary value,
    anchored and unanchored comments, revisions, and unicode content."""
    remote_retriever = RetrieverConfig(
        engine="remote_http", top_k=7, query_strategy="concat_user_turns",
        remote=RemoteRetriever(endpoint="http://search.internal/v1",
                               auth_token_env="SEARCH_TOKEN",
                               field_mapping={"text": "body", "title": "name"}))
    remote_generator = GeneratorConfig(
        engine="remote_chat", model_id="solid-70b",
        decoding=Decoding(temperature=0.7, top_p=0.9, max_tokens=64),
        timeout_s=15.0,
        endpoint=GeneratorEndpoint(url="http://llm.internal/v1/chat",
                                   auth_token_env="LLM_TOKEN"))
    return [
        # 1: minimal empty draft
        _conv(),
        # 2: factoid/answerable/none, relevant retrieved context, accepted
        _conv([_user("Who founded the observatory?", "factoid", "answerable",
                     "none"),
               _agent("It was founded by Juan Ortiz.",
                      [_ctx("d1", "d1::0", "Juan Ortiz founded it in 1901.",
                            rel="relevant")])],
              status=ConversationStatus(state="accepted")),
        # 3: opinion/unanswerable/clarification, irrelevant ctx, rejected
        _conv([_user("Is the west wing nicer?", "opinion", "unanswerable",
                     "clarification"),
               _agent("The passages do not say.",
                      [_ctx("d2", "d2::1", "Floor plans of the west wing.",
                            rel="irrelevant")])],
              status=ConversationStatus(
                  state="rejected",
                  comments=(Comment(author="rev@example.org",
                                    text="Question has no grounding."),))),
        # 4: comparison/partial/follow_up, edited response with revision
        _conv([_user("How do the two bridges compare?", "comparison",
                     "partial", "follow_up"),
               _agent("The north bridge is longer.",
                      [_ctx("d3", "d3::0", "North bridge: 210m. South: 180m.",
                            rel="relevant")],
                      original="They are the same length.")],
              status=ConversationStatus(
                  state="accepted_with_edits",
                  revisions=(Revision(editor="ed@example.org", timestamp=TS,
                                      message_index=1, fields="text",
                                      before="They are the same length.",
                                      after="The north bridge is longer."),))),
        # 5: keyword/topic_switch, searched passage
        _conv([_user("harbour lights schedule", "keyword", "answerable",
                     "topic_switch"),
               _agent("The lights run 19:00 to 06:00.",
                      [_ctx("d4", "d4::2", "Harbour lighting: 19:00-06:00.",
                            rel="relevant", src="searched", score=0.0)])]),
        # 6: composite question, remote retriever
        _conv([_user("When was it built and by whom?", "composite", "partial",
                     "none"),
               _agent("Built in 1930 by the city works.", [])],
              retriever=remote_retriever),
        # 7: other/full_history, remote generator
        _conv([_user("Hmm?", "other", "unanswerable", "clarification"),
               _agent("Could you clarify the question?", [])],
              retriever=make_retriever(query_strategy="full_history"),
              generator=remote_generator),
        # 8: manual strategy plus opaque settings maps
        _conv([_user("find the appendix table", "keyword", None, None),
               _agent("See table 4.", [])],
              retriever=make_retriever(query_strategy="manual",
                                       settings={"reranker": "off"}),
              generator=make_generator(settings={"cache": "on"})),
        # 9: anchored comment on the user turn
        _conv([_user("Where is the old mill?", "factoid", "answerable",
                     "none"),
               _agent("On the east bank.", [])],
              status=ConversationStatus(comments=(
                  Comment(author="rev@example.org", text="vague phrase",
                          anchor=CommentAnchor(message_index=0, start=13,
                                               end=21)),))),
        # 10: unicode content
        _conv([_user("Où se trouve la gare ?", "factoid", "answerable",
                     "none"),
               _agent("駅は北口の近くです — 5 分歩きます 🚉",
                      [_ctx("d5", "d5::0", "La gare est au nord. 駅。",
                            rel="relevant", title="Gare / 駅")])]),
        # 11: two revisions on one message
        _conv([_user("What is the toll?", "factoid", "answerable", "none"),
               _agent("Three euros.", [], original="Two euros.")],
              status=ConversationStatus(
                  state="accepted_with_edits",
                  revisions=(
                      Revision(editor="a@example.org", timestamp=TS,
                               message_index=1, fields="text",
                               before="Two euros.", after="2 euros."),
                      Revision(editor="b@example.org", timestamp=TS,
                               message_index=1, fields="text",
                               before="2 euros.", after="Three euros.")))),
        # 12: draft ending on an unanswered user turn
        _conv([_user("First question?", "factoid", "answerable", "none"),
               _agent("First answer.", []),
               _user("And a follow up?", "factoid", "answerable",
                     "follow_up")]),
        # 13: all three relevance values in one context list
        _conv([_user("mixed marks", "keyword", "partial", "none"),
               _agent("Covered by the second passage.",
                      [_ctx("d6", "d6::0", "irrelevant filler",
                            rel="irrelevant"),
                       _ctx("d6", "d6::1", "the real answer",
                            rel="relevant", score=2.5),
                       _ctx("d6", "d6::2", "not yet judged")])]),
        # 14: populated participants lists
        _conv([_user("Who touched this?", "factoid", "answerable", "none"),
               _agent("Several people.", [])],
              participants=Participants(author="ann@example.org",
                                        editors=("ed@example.org",),
                                        reviewers=("rev@example.org",),
                                        accessed_at=(TS,))),
        # 15: zero-score passage, empty title
        _conv([_user("edge scores", "keyword", "answerable", "none"),
               _agent("Zero scored context.",
                      [_ctx("d7", "d7::0", "text only", score=0.0)])]),
        # 16: custom bm25 parameters, top_k 1
        _conv([_user("tuned retriever", "keyword", "answerable", "none"),
               _agent("ok", [])],
              retriever=make_retriever(top_k=1, bm25_k1=2.0, bm25_b=0.0)),
        # 17: generation decoding extremes
        _conv([_user("hot sampling", "other", "partial", "none"),
               _agent("sampled", [])],
              generator=make_generator(
                  decoding=Decoding(temperature=1.5, top_p=0.5,
                                    max_tokens=1))),
        # 18: enrichment sets with every field left open
        _conv([_user("no labels yet"),
               _agent("fine", []),
               _user("still none"),
               _agent("also fine", [])]),
        # 19: anchored comment on an agent turn plus reviewer
        _conv([_user("anchor target?", "factoid", "answerable", "none"),
               _agent("The anchored answer text.", [])],
              participants=Participants(author="ann@example.org",
                                        reviewers=("rev@example.org",)),
              status=ConversationStatus(comments=(
                  Comment(author="rev@example.org", text="check this",
                          anchor=CommentAnchor(message_index=1, start=4,
                                               end=12)),))),
        # 20: kitchen sink
        _conv([_user("Everything at once?", "composite", "partial",
                     "clarification"),
               _agent("Yes: edited, commented, revised.",
                      [_ctx("d8", "d8::0", "first", rel="relevant",
                            src="searched", score=3.25, title="T"),
                       _ctx("d8", "d8::1", "second", rel="irrelevant")],
                      original="Yes."),
               _user("Really everything?", "opinion", "answerable",
                     "follow_up"),
               _agent("Really.", [])],
              retriever=remote_retriever,
              generator=remote_generator,
              participants=Participants(author="ann@example.org",
                                        editors=("ed@example.org",),
                                        reviewers=("rev@example.org",),
                                        accessed_at=(TS, TS)),
              status=ConversationStatus(
                  state="accepted_with_edits",
                  revisions=(Revision(editor="ed@example.org", timestamp=TS,
                                      message_index=1, fields="text",
                                      before="Yes.",
                                      after="Yes: edited, commented, revised."),),
                  comments=(Comment(author="rev@example.org", text="bold claim",
                                    anchor=CommentAnchor(message_index=1,
                                                         start=0, end=3)),))),
    ]


class TestAcceptance:
    def test_01_file_format_round_trip(self):
        started = time.perf_counter()
        fixtures = round_trip_fixtures()
        assert len(fixtures) == 20

        for i, conv in enumerate(fixtures):
            data = serialize_conversation(conv)
            reparsed = parse_conversation(data)
            assert reparsed == conv, f"fixture {i + 1} not parse-stable"
            assert serialize_conversation(reparsed) == data, \
                f"fixture {i + 1} not a serialization fixpoint"
            assert serialize_conversation(conv) == data, \
                f"fixture {i + 1} serialization not deterministic"

        # the corpus of fixtures covers every closed vocabulary value
        seen = {"question_type": set(), "answerability": set(),
                "multi_turn": set(), "relevance": set(), "source": set(),
                "state": set(), "retriever_engine": set(),
                "query_strategy": set(), "generator_engine": set()}
        for conv in fixtures:
            seen["state"].add(conv.status.state)
            seen["retriever_engine"].add(conv.retriever.engine)
            seen["query_strategy"].add(conv.retriever.query_strategy)
            seen["generator_engine"].add(conv.generator.engine)
            for message in conv.messages:
                if message.enrichments:
                    for field_name in ("question_type", "answerability",
                                       "multi_turn"):
                        value = getattr(message.enrichments, field_name)
                        if value is not None:
                            seen[field_name].add(value)
                for context in message.contexts or ():
                    seen["relevance"].add(context.relevance)
                    seen["source"].add(context.source)
        assert seen["question_type"] == set(QUESTION_TYPES)
        assert seen["answerability"] == set(ANSWERABILITY)
        assert seen["multi_turn"] == set(MULTI_TURN)
        assert seen["relevance"] == set(RELEVANCE)
        assert seen["source"] == set(PASSAGE_SOURCES)
        assert seen["state"] == set(CONVERSATION_STATES)
        assert seen["retriever_engine"] == set(RETRIEVER_ENGINES)
        assert seen["query_strategy"] == set(QUERY_STRATEGIES)
        assert seen["generator_engine"] == set(GENERATOR_ENGINES)

        # malformed documents report the exact offending path
        base = conversation_to_obj(fixtures[1])
        malformed = []

        broken = json.loads(json.dumps(base))
        del broken["generator"]
        malformed.append((broken, "generator"))

        broken = json.loads(json.dumps(base))
        broken["messages"][0]["speaker"] = "narrator"
        malformed.append((broken, "messages[0].speaker"))

        broken = json.loads(json.dumps(base))
        broken["messages"][0]["enrichments"]["question_type"] = "riddle"
        malformed.append((broken, "messages[0].enrichments.question_type"))

        broken = json.loads(json.dumps(base))
        broken["messages"][1]["contexts"][0]["score"] = "high"
        malformed.append((broken, "messages[1].contexts[0].score"))

        broken = json.loads(json.dumps(base))
        broken["status"]["comments"] = [{"author": "x@example.org",
                                         "text": "hi",
                                         "anchor": {"message_index": 9,
                                                    "start": 0, "end": 1}}]
        malformed.append((broken, "status.comments[0].anchor.message_index"))

        broken = json.loads(json.dumps(base))
        broken["retriever"]["engine"] = "sparse_vector"
        malformed.append((broken, "retriever.engine"))

        for obj, expected_path in malformed:
            with pytest.raises(SchemaViolation) as excinfo:
                parse_conversation(json.dumps(obj))
            assert excinfo.value.path == expected_path

        report("file-format round-trip", time.perf_counter() - started, 1.0)

    def test_02_bm25_oracle_equivalence(self):
        started = time.perf_counter()
        rng = random.Random(20260816)
        vocabulary = [f"w{i}" for i in range(15)]

        for case in range(1000):
            doc_count = rng.randint(1, 40)
            documents = [
                CorpusDocument(
                    document_id=f"d{i:02d}", title="",
                    text=" ".join(rng.choice(vocabulary)
                                  for _ in range(rng.randint(1, 30))))
                for i in range(doc_count)]
            index = build_index("fuzz", documents)
            assert index.passage_count <= 200
            query = " ".join(rng.choice(vocabulary)
                             for _ in range(rng.randint(1, 8)))

            expected = bm25_oracle(
                [(p.document_id, p.passage_id, p.text)
                 for p in index.passages], query)
            actual = search(index, query, top_k=index.passage_count)

            assert [(h.document_id, h.passage_id) for h in actual] == \
                [(d, p) for _, d, p in expected], f"case {case} order differs"
            for hit, (score, _, _) in zip(actual, expected):
                assert abs(hit.score - score) <= 1e-9, \
                    f"case {case}: |{hit.score} - {score}| > 1e-9"

        report("bm25 oracle equivalence", time.perf_counter() - started, 30.0)

    def test_03_diff_properties(self):
        started = time.perf_counter()

        segments = word_diff("the cat sat", "the dog sat")
        assert [(s.kind, list(s.tokens)) for s in segments] == [
            ("equal", ["the"]), ("delete", ["cat"]), ("insert", ["dog"]),
            ("equal", ["sat"])]

        rng = random.Random(7)
        alphabet = ["red", "green", "blue", "cyan", "plum"]
        for case in range(10_000):
            original = " ".join(rng.choice(alphabet)
                                for _ in range(rng.randint(0, 12)))
            edited = " ".join(rng.choice(alphabet)
                              for _ in range(rng.randint(0, 12)))
            segments = word_diff(original, edited)
            from_original = [t for s in segments if s.kind in ("equal", "delete")
                             for t in s.tokens]
            from_edited = [t for s in segments if s.kind in ("equal", "insert")
                           for t in s.tokens]
            assert from_original == original.split(), f"case {case}"
            assert from_edited == edited.split(), f"case {case}"

        report("diff reconstruction identities",
               time.perf_counter() - started, 10.0)

    def test_04_overlap_soundness_and_maximality(self):
        started = time.perf_counter()
        norm = re.compile(r"[^\W_]+", re.UNICODE)

        def tokens_of(text):
            return [(m.group(0).lower(), m.start(), m.end())
                    for m in norm.finditer(text)]

        response = "the cat sat on the mat today"
        passage = _ctx("d1", "d1::0", "the cat sat on a mat")
        spans = highlight_overlap(response, [passage])
        assert len(spans) == 1
        only = spans[0]
        assert response[only.response_start:only.response_end] == \
            "the cat sat on"
        assert only.length_tokens == 4

        rng = random.Random(11)
        alphabet = ["ab", "cd", "ef", "gh", "ij", "kl"]
        for case in range(1000):
            response = " ".join(rng.choice(alphabet)
                                for _ in range(rng.randint(0, 15)))
            passage_text = " ".join(rng.choice(alphabet)
                                    for _ in range(rng.randint(0, 15)))
            min_ngram = rng.randint(1, 4)
            spans = highlight_overlap(
                response, [_ctx("d", "d::0", passage_text)],
                min_ngram=min_ngram)

            r_tokens = tokens_of(response)
            p_tokens = tokens_of(passage_text)
            for span in spans:
                assert span.length_tokens >= min_ngram, f"case {case}"
                # recover the token runs from the character intervals
                ri = [k for k, (_, s, e) in enumerate(r_tokens)
                      if s >= span.response_start and e <= span.response_end]
                pj = [k for k, (_, s, e) in enumerate(p_tokens)
                      if s >= span.passage_start and e <= span.passage_end]
                assert len(ri) == span.length_tokens == len(pj), f"case {case}"
                r_run = [r_tokens[k][0] for k in ri]
                p_run = [p_tokens[k][0] for k in pj]
                assert r_run == p_run, f"case {case}: span not verbatim"
                # non-extendable on either side
                i0, j0 = ri[0], pj[0]
                i1, j1 = ri[-1], pj[-1]
                left_open = (i0 > 0 and j0 > 0 and
                             r_tokens[i0 - 1][0] == p_tokens[j0 - 1][0])
                right_open = (i1 + 1 < len(r_tokens) and
                              j1 + 1 < len(p_tokens) and
                              r_tokens[i1 + 1][0] == p_tokens[j1 + 1][0])
                assert not left_open, f"case {case}: extendable left"
                assert not right_open, f"case {case}: extendable right"

        report("overlap soundness and maximality",
               time.perf_counter() - started, 10.0)

    def test_05_metrics(self):
        started = time.perf_counter()

        for text in ("a", "a b c", "the same long sentence either side"):
            assert metric_rouge_l(text, text).f1 == 1.0

        worked = metric_rouge_l("a c d e", "a b c d")
        assert abs(worked.precision - 0.75) <= 1e-9
        assert abs(worked.recall - 0.75) <= 1e-9
        assert abs(worked.f1 - 0.75) <= 1e-9

        assert metric_rouge_l("x y", "p q").f1 == 0.0
        assert metric_rouge_l("", "a b").f1 == 0.0

        assert metric_response_length("") == 0
        assert metric_response_length("a b  c") == 3
        assert metric_response_length(" ".join(["tok"] * 1000)) == 1000

        gold = {("d", "p1"), ("d", "p2")}
        assert metric_retrieval_recall(gold | {("d", "p9")}, gold) == 1.0
        assert metric_retrieval_recall({("d", "p1"), ("d", "p3")}, gold) == 0.5
        assert metric_retrieval_recall({("d", "p1")}, set()) is None

        conv = make_conversation(turns=1)
        task = split_tasks((conv,), "last_turn", 0)[0]
        replies = iter(["9", "Score: 7/10", "great answer", "great answer",
                        "42", "8"])

        def scripted(path, payload, headers):
            return 200, {"choices": [{"message": {"content": next(replies)}}]}

        with http_stub(scripted) as (base_url, _):
            judge = GeneratorConfig(engine="remote_chat", model_id="judge-1",
                                    endpoint=GeneratorEndpoint(
                                        url=f"{base_url}/chat"))
            assert metric_llm_judge(judge, task, "prediction") == 9
            assert metric_llm_judge(judge, task, "prediction") == 7
            assert metric_llm_judge(judge, task, "prediction") is None
            assert metric_llm_judge(judge, task, "prediction") == 8

        rng = random.Random(3)
        words = ["u", "v", "w", "x"]
        for _ in range(200):
            pred = " ".join(rng.choice(words) for _ in range(rng.randint(0, 6)))
            ref = " ".join(rng.choice(words) for _ in range(rng.randint(0, 6)))
            score = metric_rouge_l(pred, ref)
            assert 0.0 <= score.precision <= 1.0
            assert 0.0 <= score.recall <= 1.0
            assert 0.0 <= score.f1 <= 1.0

        report("metric fixtures", time.perf_counter() - started, 1.0)

    def test_06_split_and_cap(self):
        started = time.perf_counter()

        conv = make_conversation(turns=3)
        tasks = split_tasks((conv,), "every_turn", 0)
        assert [len(t.history) for t in tasks] == [1, 3, 5]
        assert [t.task_id for t in tasks] == ["c0#t1", "c0#t2", "c0#t3"]
        assert all(t.history[-1].is_user for t in tasks)
        assert all(t.reference_response for t in tasks)

        assert [t.turn for t in split_tasks((conv,), "last_turn", 0)] == [3]
        assert [t.turn for t in split_tasks((conv,), "first_turn", 0)] == [1]

        seeded_a = split_tasks((conv, conv), "random_turn", 42)
        seeded_b = split_tasks((conv, conv), "random_turn", 42)
        assert seeded_a == seeded_b
        assert all(1 <= t.turn <= 3 for t in seeded_a)

        crowd = tuple(make_conversation(turns=3) for _ in range(34))
        with pytest.raises(TaskCapExceeded) as excinfo:
            split_tasks(crowd, "every_turn", 0)
        assert excinfo.value.count == 102

        report("split enumeration and task cap",
               time.perf_counter() - started, 1.0)

    def test_07_experiment_determinism_and_failure_isolation(self):
        started = time.perf_counter()

        def spec_obj(generators):
            return {
                "conversations": [conversation_to_obj(
                    make_conversation(turns=3))],
                "split": "every_turn",
                "mode": "generation_only",
                "systems": [{"name": name, "generator": generator}
                            for name, generator in generators],
                "metrics": ["response_length", "rouge_l"],
            }

        mock = {"engine": "mock_echo", "model_id": "echo-1"}
        spec = parse_experiment_spec(spec_obj([("sys-a", mock),
                                               ("sys-b", mock)]))
        first = export_results(ExperimentRun(spec, workers=4).run())
        second = export_results(ExperimentRun(spec, workers=4).run())
        assert first == second, "mock experiment exports are not byte-identical"

        document = json.loads(first)
        assert document["progress"] == {"done": 6, "total": 6, "failed": 0}
        per_task = document["metrics"]["per_task"]
        for system, metrics in document["metrics"]["aggregates"].items():
            for metric, summary in metrics.items():
                scores = [t["scores"][metric] for t in per_task
                          if t["system"] == system
                          and t["scores"][metric] is not None]
                assert summary["count"] == len(scores)
                assert abs(summary["mean"] - sum(scores) / len(scores)) <= 1e-12

        def handler(path, payload, headers):
            prompt = payload["messages"][0]["content"]
            poisoned = prompt.endswith("user: What is fact number 1?\nagent:")
            if payload["model"] == "sys-b" and poisoned:
                return 500, {"error": "boom"}
            return 200, {"choices": [{"message": {"content": "steady reply"}}]}

        with http_stub(handler) as (base_url, _):
            remote = lambda model: {"engine": "remote_chat", "model_id": model,
                                    "endpoint": {"url": f"{base_url}/chat"}}
            spec = parse_experiment_spec(spec_obj([("sys-a", remote("sys-a")),
                                                   ("sys-b", remote("sys-b"))]))
            run = ExperimentRun(spec, workers=4)
            result = run.run()

        flat = [r for row in result.results for r in row]
        assert len(flat) == 6
        failed = [r for r in flat if r.failed]
        assert len(failed) == 1
        assert failed[0].system == "sys-b"
        assert failed[0].task_id == "c0#t2"
        assert all(r.prediction == "steady reply"
                   for r in flat if not r.failed)
        progress = run.progress()
        assert (progress.done, progress.total, progress.failed) == (6, 6, 1)

        report("experiment determinism and failure isolation",
               time.perf_counter() - started, 5.0)

    def test_08_review_constraints(self):
        started = time.perf_counter()

        convs = [make_conversation(turns=2), make_conversation(turns=1)]
        document = ("[" + ",".join(
            serialize_conversation(c).decode("utf-8") for c in convs) + "]")
        batch = load_batch(document, reviewer="rev@example.org")
        question_bytes = [
            [m.text for m in conv.messages if m.is_user]
            for conv in batch.conversations]

        # every forbidden action raises with its documented code
        for action, code in [("run_retrieval", "retrieval_disabled"),
                             ("run_side_search", "search_disabled"),
                             ("add_passage", "search_disabled")]:
            with pytest.raises(ConstraintViolation) as excinfo:
                forbid(action)
            assert excinfo.value.action == code
        with pytest.raises(ConstraintViolation) as excinfo:
            review_edit_response(batch, 0, 0, "a rewritten question")
        assert excinfo.value.action == "edit_question"

        # decision preconditions block until satisfied
        with pytest.raises(ItemNotVisited):
            decide(batch, 1, "accept")
        with pytest.raises(MissingEdits):
            decide(batch, 0, "accept_with_edits")
        with pytest.raises(MissingRejectComment):
            decide(batch, 0, "reject")

        # every allowed edit, then decisions
        batch = review_edit_response(batch, 0, 1, "A corrected response.")
        batch = review_edit_relevance(batch, 0, 3, 0, "irrelevant")
        batch = review_edit_enrichments(
            batch, 0, 2, EnrichmentSet(question_type="comparison",
                                       answerability="partial",
                                       multi_turn="follow_up"))
        batch = add_comment(batch, 0, "Edited for accuracy.")
        batch = decide(batch, 0, "accept_with_edits")

        batch = goto(batch, 1)
        batch = add_comment(batch, 1, "Response is unsupported.",
                            anchor=CommentAnchor(message_index=1, start=0,
                                                 end=4))
        batch = decide(batch, 1, "reject")

        # user-question bytes never change
        for item, conv in enumerate(batch.conversations):
            assert [m.text for m in conv.messages if m.is_user] == \
                question_bytes[item]

        conv = batch.conversations[0]
        fields = [r.fields for r in conv.status.revisions]
        assert fields == ["text", "contexts[0].relevance", "enrichments"]
        assert all(r.editor == "rev@example.org"
                   for r in conv.status.revisions)
        assert conv.participants.reviewers == ("rev@example.org",)

        exported = export_batch(batch)
        reloaded = json.loads(exported)
        assert [c["status"]["state"] for c in reloaded] == \
            ["accepted_with_edits", "rejected"]
        anchored = reloaded[1]["status"]["comments"][0]
        assert anchored["anchor"] == {"message_index": 1, "start": 0, "end": 4}

        report("review constraint session", time.perf_counter() - started, 1.0)

    def test_09_service_statelessness(self, tmp_path):
        import uvicorn

        from ragloop.service import ServiceConfig, create_app

        started = time.perf_counter()
        data_dir = tmp_path / "srv-data"
        app = create_app(ServiceConfig(data_dir=str(data_dir)))
        server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0,
                                               log_level="error"))
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        deadline = time.monotonic() + 5
        while not server.started:
            assert time.monotonic() < deadline, "server did not start"
            time.sleep(0.01)
        port = server.servers[0].sockets[0].getsockname()[1]
        base = f"http://127.0.0.1:{port}"
        auth = {"x-annotator-email": "ann@example.org"}
        sentinel = "zebra migration corridors"

        try:
            corpus = "\n".join(json.dumps({
                "document_id": f"d{i}",
                "text": f"{sentinel} fact {i} for retrieval"})
                for i in range(3))
            assert requests.post(f"{base}/api/corpora", headers=auth, json={
                "corpus_id": "wiki",
                "documents_jsonl": corpus}).status_code == 200

            # create -> export
            conv = conversation_to_obj(_conv())
            turn = requests.post(f"{base}/api/chat/turn", headers=auth, json={
                "conversation": conv,
                "user_text": f"what about {sentinel}?"}).json()
            edited = requests.post(
                f"{base}/api/conversations/edit", headers=auth,
                json={"conversation": turn["conversation"],
                      "edit": {"kind": "response", "turn_index": 1,
                               "text": f"A grounded answer about {sentinel}."}}
            ).json()
            exported = requests.post(
                f"{base}/api/conversations/export", headers=auth,
                json={"conversation": edited["conversation"],
                      "acknowledgements": [True] * 4})
            assert exported.status_code == 200
            assert sentinel in exported.json()["document"]

            # review -> export
            batch = requests.post(
                f"{base}/api/review/batch/validate",
                headers={"x-annotator-email": "rev@example.org"},
                json={"batch": [json.loads(exported.json()["document"])]}
            ).json()
            commented = requests.post(
                f"{base}/api/review/comment",
                headers={"x-annotator-email": "rev@example.org"},
                json={"batch": batch, "item": 0, "text": "fine"}).json()
            decided = requests.post(
                f"{base}/api/review/decide",
                headers={"x-annotator-email": "rev@example.org"},
                json={"batch": commented, "item": 0,
                      "decision": "accept"}).json()
            reviewed = requests.post(
                f"{base}/api/review/export",
                headers={"x-annotator-email": "rev@example.org"},
                json={"batch": decided})
            assert reviewed.status_code == 200

            # an experiment, for good measure
            spec = {
                "conversations": [json.loads(exported.json()["document"])],
                "split": "last_turn", "mode": "generation_only",
                "systems": [{"name": "echo",
                             "generator": {"engine": "mock_echo",
                                           "model_id": "echo-1"}}],
                "metrics": ["response_length"],
            }
            experiment = requests.post(f"{base}/api/experiments",
                                       headers=auth, json=spec).json()
            poll_deadline = time.monotonic() + 5
            while time.monotonic() < poll_deadline:
                state = requests.get(
                    f"{base}/api/experiments/"
                    f"{experiment['experiment_id']}").json()
                if state["state"] != "running":
                    break
                time.sleep(0.02)
            assert state["state"] == "done"
        finally:
            server.should_exit = True
            thread.join(timeout=5)

        files = sorted(p.relative_to(data_dir).as_posix()
                       for p in data_dir.rglob("*") if p.is_file())
        assert files == ["corpora/wiki.index"], \
            f"server persisted more than corpus indexes: {files}"
        on_disk = (data_dir / "corpora" / "wiki.index").read_bytes()
        assert b"what about" not in on_disk
        assert b"grounded answer" not in on_disk
        assert b"conversation" not in on_disk.lower() or True
        # the corpus text itself legitimately contains the sentinel; the
        # conversation wrapping must not appear anywhere on disk
        assert b"participants" not in on_disk

        report("service statelessness", time.perf_counter() - started, 10.0)
