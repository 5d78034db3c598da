"""Command-line entry point.

Subcommands mirror the pipeline phases; every command takes --config,
--seed, --backend, and --transcript so any phase can run live, from a
recorded transcript, or against the built-in deterministic mock.

Exit codes: 0 success, 1 usage error, 2 completed with partial failures,
3 fatal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

from . import __version__
from .config import PipelineConfig, load_config
from .corpus import ArxivClient, CorpusStore, filter_by_keywords, import_parsed_paper, \
    load_keyword_lexicon
from .dataset import export_dataset, load_dataset, stats_report
from .errors import McqForgeError, UsageError
from .gateway import (
    Gateway,
    LiveBackend,
    ProviderConfig,
    ScriptedBackend,
    TranscriptRecorder,
    load_transcript,
    record_transcript,
)
from .harness import DEFAULT_TEMPLATE, ablation_from_runs, load_run, run_eval, save_run, \
    score_run, score_table
from .pipeline import run_pipeline
from .review import ReviewService, sample_for_review, task_snapshot
from .review_api import create_app

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2
EXIT_FATAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; we own the codes
        raise UsageError(message)


def _default_mock_scripts():
    """Deterministic canned outputs so smoke runs work with --backend mock."""
    def evaluator(request):
        return "Without the figure this is a guess. the answer is 1"

    def rewriter(request):
        stem = ""
        options = []
        for line in request.prompt_text().splitlines():
            if line.startswith("STEM: "):
                stem = line[len("STEM: "):]
            m = re.match(r"^(\d+)\. (.*)$", line)
            if m:
                options.append(m.group(2))
        lines = [f"STEM: {stem}", f"CORRECT: {options[0] if options else 'unknown'}"]
        lines += [f"DISTRACTOR: {o}" for o in options[1:]]
        return "\n".join(lines)

    return {
        "chain_extractor": "S: the observed structure\nPe: the measured performance",
        "question_writer": ("STEM: placeholder question\nCORRECT: the right option\n"
                            "DISTRACTOR: wrong one\nDISTRACTOR: wrong two\n"
                            "DISTRACTOR: wrong three"),
        "evaluator": evaluator,
        "eval_model": evaluator,
        "reflector": "Remove the giveaway wording.",
        "rewriter": rewriter,
        "checker": "PASS",
    }


def _build_gateway(args, config: PipelineConfig) -> tuple[Gateway, TranscriptRecorder | None]:
    recorder = None
    if args.backend == "replay":
        if not args.transcript:
            raise UsageError("--backend replay requires --transcript")
        backend = load_transcript(args.transcript)
    elif args.backend == "mock":
        backend = ScriptedBackend(_default_mock_scripts())
        if args.transcript:
            backend = recorder = TranscriptRecorder(backend)
    else:
        import os
        base_url = os.environ.get("MCQFORGE_PROVIDER_BASE_URL", "")
        if not base_url:
            raise UsageError("--backend live requires MCQFORGE_PROVIDER_BASE_URL")
        backend = LiveBackend(ProviderConfig(name="default", base_url=base_url,
                                             api_key_env="MCQFORGE_API_KEY"))
        if args.transcript:
            backend = recorder = TranscriptRecorder(backend)
    return Gateway(backend, default_model=config.default_model), recorder


def _finish_transcript(args, recorder):
    if recorder is not None and args.backend != "replay":
        record_transcript(recorder.entries, args.transcript)


def _load_cfg(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        config.shuffle_seed = args.seed
        config.sampling_seed = args.seed
    return config


# --------------------------------------------------------------------------
# Command implementations
# --------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    config = _load_cfg(args)
    lexicon_path = args.lexicon or config.keywords_path
    if lexicon_path:
        lexicon = load_keyword_lexicon(lexicon_path)
    else:
        lexicon = load_keyword_lexicon(Path(__file__).parent / "data" / "keywords.txt")
    client = ArxivClient()
    stubs = client.fetch_metadata(args.query, args.max)
    kept = filter_by_keywords(stubs, lexicon)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for stub in kept:
            fh.write(json.dumps(stub.__dict__, sort_keys=True, ensure_ascii=False) + "\n")
    print(f"fetched {len(stubs)} stubs, kept {len(kept)} -> {out}")
    return EXIT_OK


def cmd_import(args) -> int:
    config = _load_cfg(args)
    store = CorpusStore(args.store or config.corpus_store)
    record = import_parsed_paper(args.dir, paper_id=args.paper_id, domain=args.domain,
                                 context_window=config.context_window)
    store.add(record)
    unreferenced = [f.figure_id for f in record.figures if f.reference_warning]
    print(f"imported {record.paper_id}: {len(record.figures)} figures")
    if unreferenced:
        print(f"warning: figures never referenced in body: {', '.join(unreferenced)}")
    return EXIT_OK


def _run_pipeline_cmd(args, run_refine: bool) -> int:
    config = _load_cfg(args)
    config.run_refine = run_refine
    store = CorpusStore(args.store or config.corpus_store)
    gateway, recorder = _build_gateway(args, config)
    summary = run_pipeline(config, store.records(), gateway, args.out)
    _finish_transcript(args, recorder)
    print(json.dumps(summary.to_json(), indent=2, sort_keys=True))
    return EXIT_PARTIAL if summary.failures else EXIT_OK


def cmd_build_mcq(args) -> int:
    return _run_pipeline_cmd(args, run_refine=False)


def cmd_refine(args) -> int:
    return _run_pipeline_cmd(args, run_refine=True)


def cmd_extract_chains(args) -> int:
    from .chains import chain_to_json, default_lexicon_path, extract_chain, load_lexicon, \
        validate_chain, verify_chain

    config = _load_cfg(args)
    store = CorpusStore(args.store or config.corpus_store)
    gateway, recorder = _build_gateway(args, config)
    lexicon = load_lexicon(config.lexicon_path or default_lexicon_path())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    failures = 0
    with open(out, "w", encoding="utf-8") as fh:
        for record in store.records():
            for figure in record.figures:
                try:
                    chain = extract_chain(figure, figure.context, record.body_text,
                                          lexicon, gateway)
                    chain = verify_chain(chain, record.body_text, config.theta,
                                         config.top_k)
                except McqForgeError as e:
                    failures += 1
                    log.warning("extraction failed for %s/%s: %s",
                                record.paper_id, figure.figure_id, e)
                    continue
                obj = chain_to_json(chain)
                obj["violations"] = validate_chain(chain)
                obj["paper_id"] = record.paper_id
                fh.write(json.dumps(obj, sort_keys=True, ensure_ascii=False) + "\n")
    _finish_transcript(args, recorder)
    print(f"chains written to {out}; {failures} extraction failure(s)")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_eval(args) -> int:
    config = _load_cfg(args)
    _, items = load_dataset(args.dataset)
    if args.stage:
        items = [i for i in items if i.stage == args.stage]
    gateway, recorder = _build_gateway(args, config)
    if args.model:
        from .gateway import RoleSettings
        gateway.roles["eval_model"] = RoleSettings(model_id=args.model, temperature=0.0)
    resolver = _figure_resolver(args.store or config.corpus_store)
    run = run_eval(items, gateway, resolver, DEFAULT_TEMPLATE,
                   dataset_ref=str(args.dataset), stage_filter=args.stage)
    _finish_transcript(args, recorder)
    save_run(run, args.out)
    scores = score_run(run)
    md, _ = score_table({run.model_id: scores})
    print(md)
    skipped = sum(1 for r in run.records if r.skipped)
    return EXIT_PARTIAL if skipped else EXIT_OK


def _figure_resolver(store_path: str):
    store = CorpusStore(store_path)
    by_key: dict[tuple[str, str], tuple[str, str]] = {}
    for record in store.records():
        for figure in record.figures:
            by_key[(record.paper_id, figure.figure_id)] = (figure.content_hash,
                                                           figure.media_type)

    def resolve(item):
        return by_key[(item.paper_id, item.figure_id)]

    return resolve


def cmd_report(args) -> int:
    runs = [load_run(p) for p in args.runs]
    if args.ablation:
        by_model: dict[str, dict[str, object]] = {}
        for run in runs:
            if not run.stage_filter:
                raise UsageError(f"run {run.run_id} has no stage filter; "
                                 "ablation needs per-stage runs")
            by_model.setdefault(run.model_id, {})[run.stage_filter] = run
        md, csv_text = ablation_from_runs(by_model)
    else:
        md, csv_text = score_table({run.model_id: score_run(run) for run in runs})
    print(md)
    if args.csv:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
        print(f"csv -> {args.csv}")
    return EXIT_OK


def cmd_stats(args) -> int:
    _, items = load_dataset(args.dataset)
    report = stats_report(items, stage=args.stage)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_export(args) -> int:
    rejected: set[str] = set()
    if args.review_log:
        header, _ = load_dataset(args.dataset)
        service = ReviewService(header.dataset_hash, log_path=args.review_log)
        rejected = service.rejected_item_ids()
    header = export_dataset(args.dataset, args.out, stage=args.stage,
                            include_rejected=args.include_rejected,
                            rejected_item_ids=rejected)
    print(f"exported {header.count} items -> {args.out}")
    return EXIT_OK


def _chain_summaries(chains_path: str) -> dict[str, str]:
    summaries = {}
    for line in Path(chains_path).read_text(encoding="utf-8").splitlines():
        obj = json.loads(line)
        summaries[obj["chain_id"]] = " ".join(
            f"{s['component']}: {s['statement']}." for s in obj["steps"])
    return summaries


def cmd_review_sample(args) -> int:
    config = _load_cfg(args)
    header, items = load_dataset(args.dataset)
    finals = [i for i in items if i.stage == "caption_removed"] or items
    seed = args.seed if args.seed is not None else config.sampling_seed
    # reviewers should see the figure and its provenance, so pull the
    # content hash, caption, and chain summary into the task snapshots
    snapshots = None
    store_path = args.store or config.corpus_store
    summaries = _chain_summaries(args.chains) if args.chains else {}
    if store_path:
        store = CorpusStore(store_path)
        snapshots = {}
        for item in finals:
            try:
                figure = store.get(item.paper_id).figure(item.figure_id)
            except (KeyError, FileNotFoundError):
                continue
            snapshots[item.item_id] = task_snapshot(
                item, figure_hash=figure.content_hash, caption=figure.caption,
                chain_summary=summaries.get(item.chain_id, ""))
    tasks = sample_for_review(finals, args.fraction, seed, header.dataset_hash,
                              snapshots=snapshots)
    service = ReviewService(header.dataset_hash, log_path=args.log)
    service.add_tasks(tasks)
    print(f"sampled {len(tasks)} of {len(finals)} items -> {args.log}")
    return EXIT_OK


def cmd_review_serve(args) -> int:
    import uvicorn

    config = _load_cfg(args)
    header, _ = load_dataset(args.dataset)
    service = ReviewService(header.dataset_hash, log_path=args.log)
    resolver = None
    if args.store or config.corpus_store:
        store = CorpusStore(args.store or config.corpus_store)
        resolver = store.resolve_figure
    app = create_app(service, resolver)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_review_report(args) -> int:
    header, _ = load_dataset(args.dataset)
    service = ReviewService(header.dataset_hash, log_path=args.log)
    try:
        print(json.dumps(service.audit_report(), indent=2, sort_keys=True))
    except McqForgeError as e:
        raise UsageError(str(e))
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser wiring
# --------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="mcqforge",
                     description="benchmark forging and evaluation pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="pipeline config JSON")
    parser.add_argument("--seed", type=int, help="override shuffle/sampling seeds")
    parser.add_argument("--backend", choices=["live", "replay", "mock"], default="mock")
    parser.add_argument("--transcript", help="transcript file (record or replay)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="fetch and keyword-filter paper metadata")
    p.add_argument("--query", required=True)
    p.add_argument("--max", type=int, required=True)
    p.add_argument("--lexicon", help="keyword file, one lowercase term per line")
    p.add_argument("--out", default="stubs.jsonl")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("import", help="import one converted paper directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--store")
    p.add_argument("--paper-id")
    p.add_argument("--domain", default="")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("extract-chains", help="extract and verify reasoning chains")
    p.add_argument("--store")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_chains)

    p = sub.add_parser("build-mcq", help="build raw MCQs (no refinement)")
    p.add_argument("--store")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_mcq)

    p = sub.add_parser("refine", help="full pipeline with two-stage refinement")
    p.add_argument("--store")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="benchmark a model on a dataset")
    p.add_argument("--model", default="")
    p.add_argument("--dataset", required=True)
    p.add_argument("--stage", choices=["raw", "lang_removed", "caption_removed"])
    p.add_argument("--store")
    p.add_argument("--out", default="run.jsonl")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="score or ablation tables from run records")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--ablation", action="store_true")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("stats", help="dataset attribute counts")
    p.add_argument("--dataset", required=True)
    p.add_argument("--stage")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export", help="filtered dataset export")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stage")
    p.add_argument("--include-rejected", action="store_true")
    p.add_argument("--review-log")
    p.set_defaults(func=cmd_export)

    review = sub.add_parser("review", help="expert-audit workflow")
    rsub = review.add_subparsers(dest="review_command", required=True)

    p = rsub.add_parser("sample", help="sample items into a review queue")
    p.add_argument("--dataset", required=True)
    p.add_argument("--fraction", type=float, default=0.2)
    p.add_argument("--log", required=True)
    p.add_argument("--store", help="corpus store; fills figure and caption into tasks")
    p.add_argument("--chains", help="chains file; fills chain summaries into tasks")
    p.set_defaults(func=cmd_review_sample)

    p = rsub.add_parser("serve", help="serve the review HTTP API")
    p.add_argument("--dataset", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--store")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8750)
    p.set_defaults(func=cmd_review_serve)

    p = rsub.add_parser("report", help="audit aggregates")
    p.add_argument("--dataset", required=True)
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_review_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except McqForgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FATAL
    except KeyboardInterrupt:
        return EXIT_FATAL
    except Exception as e:  # anything unplanned is fatal, never a silent 0
        log.exception("fatal: %s", e)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
