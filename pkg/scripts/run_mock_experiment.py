"""Run a small two-system experiment with the echo generator and print the
aggregate table. Useful for eyeballing the export format without any
model endpoints. Run with: python3 scripts/run_mock_experiment.py [--out F]
"""

import argparse
import json
import threading
import time

from ragloop.conversation import (
    ContextPassage,
    Conversation,
    EnrichmentSet,
    GeneratorConfig,
    Message,
    Participants,
    RetrieverConfig,
)
from ragloop.experiment import ExperimentRun, export_results, parse_experiment_spec


def sample_conversation(topic: str, turns: int) -> Conversation:
    messages = []
    for t in range(turns):
        messages.append(Message(
            speaker="user",
            text=f"What does source {t} say about {topic}?",
            enrichments=EnrichmentSet(question_type="factoid",
                                      answerability="answerable",
                                      multi_turn="none" if t == 0
                                      else "follow_up")))
        messages.append(Message(
            speaker="agent",
            text=f"Source {t} covers {topic} in detail.",
            contexts=(ContextPassage(document_id=topic,
                                     passage_id=f"{topic}::{t}",
                                     title=topic.title(),
                                     text=f"All about {topic}, part {t}.",
                                     score=1.0, relevance="relevant"),)))
    return Conversation(
        participants=Participants(author="demo@example.org"),
        retriever=RetrieverConfig(engine="embedded_bm25", corpus_id="unused"),
        generator=GeneratorConfig(engine="mock_echo", model_id="echo-1"),
        messages=tuple(messages))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="mock_results.json")
    args = parser.parse_args()

    from ragloop.conversation import conversation_to_obj

    spec = parse_experiment_spec({
        "conversations": [conversation_to_obj(sample_conversation("glaciers", 3)),
                          conversation_to_obj(sample_conversation("orchids", 2))],
        "split": "every_turn",
        "mode": "generation_only",
        "systems": [
            {"name": "echo-default",
             "generator": {"engine": "mock_echo", "model_id": "echo-1"}},
            {"name": "echo-terse",
             "generator": {"engine": "mock_echo", "model_id": "echo-1",
                           "prompt_template": "{question}"}},
        ],
        "metrics": ["response_length", "rouge_l", "retrieval_recall"],
    })

    run = ExperimentRun(spec, workers=4)
    watcher = threading.Thread(target=run.run)
    watcher.start()
    while watcher.is_alive():
        progress = run.progress()
        print(f"\rprogress: {progress.done}/{progress.total} "
              f"({progress.failed} failed)", end="", flush=True)
        time.sleep(0.05)
    watcher.join()
    progress = run.progress()
    print(f"\rprogress: {progress.done}/{progress.total} "
          f"({progress.failed} failed)")

    result = run.result()
    print("\naggregates:")
    for system in sorted(result.aggregates):
        for metric, summary in result.aggregates[system].items():
            mean = summary["mean"]
            shown = "n/a" if mean is None else f"{mean:8.4f}"
            print(f"  {system:14s} {metric:18s} {shown}  (n={summary['count']})")

    payload = export_results(result)
    with open(args.out, "wb") as handle:
        handle.write(payload)
    document = json.loads(payload)
    print(f"\nwrote {args.out}: {len(document['tasks'])} tasks, "
          f"{len(document['predictions'])} predictions")


if __name__ == "__main__":
    main()
