"""Command-line entry points.

Exit codes: 0 success, 1 validation or runtime failure, 2 usage error
(argparse's own convention).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .conversation import parse_conversation, validate_conversation
from .corpus import Chunking, CorpusStore, parse_corpus_jsonl
from .errors import RagLoopError
from .experiment import export_results, parse_experiment_spec, run_experiment
from .retrieval import search
from .service import create_app, load_service_config


def _store(args) -> CorpusStore:
    return CorpusStore(args.data_dir)


def cmd_corpus_ingest(args) -> int:
    data = Path(args.input).read_bytes()
    documents = parse_corpus_jsonl(data)
    chunking = Chunking(max_tokens=args.max_tokens, overlap=args.overlap).check()
    index = _store(args).ingest(args.id, documents, chunking)
    stats = index.stats()
    print(f"ingested {stats['corpus_id']}: {stats['document_count']} documents, "
          f"{stats['passage_count']} passages, "
          f"{stats['vocabulary_size']} terms")
    return 0


def cmd_corpus_search(args) -> int:
    index = _store(args).get(args.id)
    hits = search(index, args.query, top_k=args.top_k)
    if not hits:
        print("no matches")
        return 0
    for rank, hit in enumerate(hits, start=1):
        title = f" {hit.title}" if hit.title else ""
        print(f"{rank}. {hit.passage_id} score={hit.score:.4f}{title}")
        print(f"   {hit.text}")
    return 0


def cmd_conv_validate(args) -> int:
    conv = parse_conversation(Path(args.file).read_bytes())
    report = validate_conversation(conv)
    if report.is_clean:
        print(f"{args.file}: ok ({len(conv.messages)} messages)")
        return 0
    for entry in report.entries:
        print(f"{args.file}: {entry.kind} at message "
              f"{entry.message_index}: {entry.detail}")
    print(f"{args.file}: {len(report.entries)} finding(s), document is "
          "still structurally valid")
    return 0


def cmd_experiment_run(args) -> int:
    spec = parse_experiment_spec(Path(args.spec).read_bytes())
    result = run_experiment(spec, store=_store(args), workers=args.workers)
    payload = export_results(result)
    Path(args.out).write_bytes(payload)
    progress = result.progress
    print(f"ran {progress.total} tasks ({progress.failed} failed)")
    for system in sorted(result.aggregates):
        for metric, summary in result.aggregates[system].items():
            mean = summary["mean"]
            shown = "n/a" if mean is None else f"{mean:.4f}"
            print(f"  {system} {metric}: {shown} (n={summary['count']})")
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    config = load_service_config(args.config)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragloop",
        description="Build corpora, validate conversation documents, run "
                    "experiments, and serve the HTTP API.")
    parser.add_argument("--data-dir",
                        default=os.environ.get("RAGLOOP_DATA_DIR", "data"),
                        help="directory holding corpus indexes")
    commands = parser.add_subparsers(dest="command", required=True)

    corpus = commands.add_parser("corpus", help="manage corpus indexes")
    corpus_commands = corpus.add_subparsers(dest="subcommand", required=True)

    ingest = corpus_commands.add_parser("ingest",
                                        help="chunk and index a JSONL corpus")
    ingest.add_argument("--id", required=True, help="corpus identifier")
    ingest.add_argument("--input", required=True,
                        help="JSONL file, one document per line")
    ingest.add_argument("--max-tokens", type=int, default=100,
                        help="maximum whitespace tokens per passage")
    ingest.add_argument("--overlap", type=int, default=20,
                        help="tokens shared by consecutive passages")
    ingest.set_defaults(handler=cmd_corpus_ingest)

    query = corpus_commands.add_parser("search", help="query an index")
    query.add_argument("--id", required=True)
    query.add_argument("--query", required=True)
    query.add_argument("--top-k", type=int, default=5)
    query.set_defaults(handler=cmd_corpus_search)

    conv = commands.add_parser("conv", help="conversation document tools")
    conv_commands = conv.add_subparsers(dest="subcommand", required=True)
    validate = conv_commands.add_parser(
        "validate", help="check a .conv.json document")
    validate.add_argument("file")
    validate.set_defaults(handler=cmd_conv_validate)

    experiment = commands.add_parser("experiment", help="batch evaluations")
    experiment_commands = experiment.add_subparsers(dest="subcommand",
                                                    required=True)
    run = experiment_commands.add_parser("run", help="execute a spec file")
    run.add_argument("--spec", required=True, help="experiment spec JSON")
    run.add_argument("--out", required=True, help="where to write results")
    run.add_argument("--workers", type=int, default=4)
    run.set_defaults(handler=cmd_experiment_run)

    serve = commands.add_parser("serve", help="start the HTTP API")
    serve.add_argument("--config", default=None,
                       help="service config JSON file")
    serve.set_defaults(handler=cmd_serve)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except RagLoopError as exc:
        location = f" at {exc.path}" if exc.path else ""
        print(f"error: {exc.code}{location}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())
