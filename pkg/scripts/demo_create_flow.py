"""Walk the whole create-mode loop in one process, no server needed.

Builds a throwaway corpus, chats against it with the echo generator,
edits the response, prints the diff / overlap / hints views, and ends
with the export checklist. Run with: python3 scripts/demo_create_flow.py
"""

import json
import tempfile

from ragloop.conversation import (
    GeneratorConfig,
    RetrieverConfig,
    new_conversation,
    with_agent_message,
    with_user_message,
)
from ragloop.corpus import Chunking, CorpusStore, parse_corpus_jsonl
from ragloop.create import (
    checklist_to_obj,
    compute_hints,
    edit_passage_relevance,
    edit_response,
    export_with_checklist,
    highlight_overlap,
    word_diff,
)
from ragloop.generation import agent_turn

DOCUMENTS = [
    {"document_id": "grenoble", "title": "Grenoble",
     "text": "Grenoble lies at the foot of the French Alps where the Drac "
             "joins the Isere river. The city hosted the 1968 Winter "
             "Olympics and is known for research institutes."},
    {"document_id": "lyon", "title": "Lyon",
     "text": "Lyon sits at the confluence of the Rhone and the Saone. Its "
             "old town is a UNESCO world heritage site."},
]


def main() -> None:
    with tempfile.TemporaryDirectory() as data_dir:
        store = CorpusStore(data_dir)
        docs = parse_corpus_jsonl("\n".join(json.dumps(d) for d in DOCUMENTS))
        index = store.ingest("cities", docs, Chunking(max_tokens=40, overlap=10))
        print(f"corpus ready: {index.stats()}\n")

        conv = new_conversation(
            author="demo@example.org",
            retriever=RetrieverConfig(engine="embedded_bm25",
                                      corpus_id="cities", top_k=2),
            generator=GeneratorConfig(engine="mock_echo", model_id="echo-1"))

        conv = with_user_message(conv, "Which rivers meet near Grenoble?")
        turn = agent_turn(conv.retriever, conv.generator, conv, store=store)
        conv = with_agent_message(conv, turn.response.text,
                                  contexts=turn.contexts)
        print("agent said:", turn.response.text)
        for n, passage in enumerate(turn.contexts, start=1):
            print(f"  context {n}: {passage.passage_id} "
                  f"(score {passage.score:.3f})")

        conv = edit_passage_relevance(conv, 1, 0, "relevant")
        rewritten = ("The Drac joins the Isere river at Grenoble, at the "
                     "foot of the French Alps.")
        conv = edit_response(conv, 1, rewritten, editor="demo@example.org")

        print("\nword diff of the edit:")
        original = conv.messages[1].original_text
        for segment in word_diff(original, rewritten):
            print(f"  {segment.kind:>6}: {' '.join(segment.tokens)}")

        print("\noverlap with the marked passage:")
        spans = highlight_overlap(rewritten, conv.messages[1].contexts)
        for span in spans:
            quoted = rewritten[span.response_start:span.response_end]
            print(f"  {span.length_tokens} tokens from passage "
                  f"{span.passage_index}: \"{quoted}\"")

        hints = compute_hints(conv)
        print("\nhints:" if hints else "\nhints: none")
        for hint in hints:
            print(f"  message {hint.message_index}: {hint.text}")

        result = export_with_checklist(conv, [True, True, True, False])
        checklist = checklist_to_obj(result.checklist)
        print("\nexport checklist:")
        for item in checklist["items"]:
            mark = "x" if item["checked"] else " "
            print(f"  [{mark}] {item['label']}")
        print("statistics:", checklist["statistics"])
        print(f"\nexport document: {len(result.document)} bytes")


if __name__ == "__main__":
    main()
