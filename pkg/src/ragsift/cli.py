"""Command-line frontend wiring the modules into runnable pipelines.

Every command writes a manifest next to its outputs recording resolved
parameters, input digests, the seed, and the tool version; re-running with
the same inputs (and replay transcript, when judging) reproduces the output
artifacts byte for byte. Exit codes: 0 success, 1 unusable inputs or
configuration, 2 partial success (some queries aborted).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .annotate import annotate, write_training_files
from .corpus import (
    LoadError,
    evidence_from_qrels,
    load_answers,
    load_corpus,
    load_evidence,
    load_qrels,
    load_queries,
    load_run,
    ranking_to_candidates,
    write_run,
)
from .costsim import parse_profile_spec, ranking_cost, simulate
from .judge import Judge, JudgeEndpointConfig, OracleJudge, RecordingJudge, RemoteJudge, ReplayJudge
from .metrics import (
    MetricsReport,
    evaluate_answers,
    evidence_scores,
    load_predictions,
    ndcg_at_k,
    ndcg_per_query,
    write_report,
)
from .pipeline import BatchResult, rerank_batch, select_batch
from .prompting import PromptBudget, TemplateError, load_templates
from .windowing import (
    SelectionResult,
    WindowConfig,
    cut,
    write_selection_file,
    write_traces,
)

logger = logging.getLogger(__name__)


@dataclass
class RunManifest:
    """Reproducibility sidecar written next to every output artifact."""

    command: str
    parameters: dict
    inputs: dict[str, dict[str, str]]
    seed: int | None = None
    version: str = __version__
    created_utc: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds")
    )

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        doc = {
            "command": self.command,
            "version": self.version,
            "created_utc": self.created_utc,
            "seed": self.seed,
            "parameters": self.parameters,
            "inputs": self.inputs,
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _manifest(args: argparse.Namespace, input_flags: list[str]) -> RunManifest:
    params = {}
    inputs = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command"):
            continue
        params[key] = str(value) if isinstance(value, Path) else value
    for flag in input_flags:
        value = getattr(args, flag, None)
        if value is None:
            continue
        p = Path(value)
        if p.exists() and p.is_file():
            inputs[flag] = {"path": str(p), "sha256": _sha256(p)}
    return RunManifest(
        command=args.command,
        parameters=params,
        inputs=inputs,
        seed=getattr(args, "seed", None),
    )


def _build_judge(args: argparse.Namespace, qrels=None) -> Judge:
    if args.judge == "oracle":
        if qrels is None:
            raise LoadError("--judge oracle requires --qrels")
        judge: Judge = OracleJudge(qrels, selection_threshold=args.threshold)
    elif args.judge == "replay":
        if not args.transcript:
            raise LoadError("--judge replay requires --transcript")
        return ReplayJudge(args.transcript)
    elif args.judge == "endpoint":
        if not args.endpoint_url or not args.model:
            raise LoadError("--judge endpoint requires --endpoint-url and --model")
        judge = RemoteJudge(
            JudgeEndpointConfig(
                base_url=args.endpoint_url,
                model_name=args.model,
                max_in_flight=max(1, args.parallel),
            )
        )
    else:
        raise LoadError(f"unknown judge kind {args.judge!r}")
    if args.transcript:
        # with a live judge, --transcript records instead of replaying
        judge = RecordingJudge(judge, args.transcript)
    return judge


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _window_cfg(args: argparse.Namespace) -> WindowConfig:
    return WindowConfig(depth=args.depth, window_size=args.w, stride=args.s)


def _report_failures(batch: BatchResult) -> int:
    if batch.failures:
        ids = ", ".join(f.query_id for f in batch.failures)
        print(f"aborted queries ({len(batch.failures)}): {ids}", file=sys.stderr)
        return 2
    return 0


def cmd_rerank(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    queries = load_queries(args.queries)
    run = load_run(args.run, max_depth=args.depth)
    qrels = load_qrels(args.qrels) if args.qrels else None
    cfg = _window_cfg(args)
    judge = _build_judge(args, qrels)
    templates = load_templates(args.templates)
    budget = PromptBudget(per_passage_tokens=args.passage_tokens)

    batch = rerank_batch(
        queries, run, corpus, judge, cfg, templates, budget, parallel=args.parallel
    )
    out = _out_dir(args)
    reranked = {
        qid: ranking_to_candidates(qid, res.ranked_ids) for qid, res in batch.results.items()
    }
    write_run(reranked, out / "run.trec", tag=args.tag)
    if args.trace:
        write_traces(batch.traces(), out / "trace.jsonl")
    _manifest(args, ["corpus", "queries", "run", "qrels", "templates", "transcript"]).write(out)
    print(f"reranked {len(batch.results)} queries -> {out / 'run.trec'}")
    return _report_failures(batch)


def cmd_select(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    queries = load_queries(args.queries)
    run = load_run(args.run, max_depth=args.depth)
    qrels = load_qrels(args.qrels) if args.qrels else None
    cfg = _window_cfg(args)
    judge = _build_judge(args, qrels)
    templates = load_templates(args.templates)
    budget = PromptBudget(per_passage_tokens=args.passage_tokens)

    batch = select_batch(
        queries, run, corpus, judge, cfg, templates, budget, parallel=args.parallel
    )
    out = _out_dir(args)
    selections = {
        qid: res for qid, res in batch.results.items() if isinstance(res, SelectionResult)
    }
    write_selection_file(selections, out / "selected.jsonl")
    if args.trace:
        write_traces(batch.traces(), out / "trace.jsonl")
    _manifest(args, ["corpus", "queries", "run", "qrels", "templates", "transcript"]).write(out)
    print(f"selected for {len(batch.results)} queries -> {out / 'selected.jsonl'}")
    return _report_failures(batch)


def cmd_evaluate(args: argparse.Namespace) -> int:
    from .windowing import read_selection_file

    report = MetricsReport()
    qrels = load_qrels(args.qrels) if args.qrels else None

    if args.predictions:
        if not args.answers:
            raise LoadError("EM/F1 requested (--predictions) but no --answers gold file given")
        report.answers = evaluate_answers(load_predictions(args.predictions), load_answers(args.answers))

    selected: dict[str, list[str]] | None = None
    if args.selection:
        selected = read_selection_file(args.selection)
    elif args.run and args.k:
        run = load_run(args.run, max_depth=args.depth)
        selected = {qid: cut(cl.doc_ids(), min(args.k, len(cl))) for qid, cl in run.items()}
    if selected is not None:
        if args.evidence:
            gold = load_evidence(args.evidence)
        elif qrels is not None:
            gold = evidence_from_qrels(qrels, threshold=args.threshold)
        else:
            raise LoadError(
                "evidence metrics requested but neither --evidence nor --qrels was given"
            )
        report.evidence = evidence_scores(selected, gold)

    if args.ndcg_k:
        if not args.run:
            raise LoadError("nDCG requested (--ndcg-k) but no --run file given")
        if qrels is None:
            raise LoadError("nDCG requested (--ndcg-k) but no --qrels file given")
        run = load_run(args.run, max_depth=args.depth)
        report.ndcg = {k: ndcg_at_k(run, qrels, k) for k in args.ndcg_k}
        report.ndcg_queries = {k: ndcg_per_query(run, qrels, k) for k in args.ndcg_k}

    if report.answers is None and report.evidence is None and report.ndcg is None:
        raise LoadError(
            "nothing to evaluate: give --predictions/--answers, --selection or --run with "
            "--k/--ndcg-k"
        )

    out = _out_dir(args)
    json_path, tsv_path = write_report(report, out)
    _manifest(
        args, ["predictions", "answers", "selection", "run", "qrels", "evidence"]
    ).write(out)
    for name, value in report.aggregates().items():
        print(f"{name}\t{100 * value:.2f}")
    print(f"report -> {json_path}, {tsv_path}")
    return 0


def cmd_annotate(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    queries = load_queries(args.queries)
    run = load_run(args.run, max_depth=args.depth)
    qrels = load_qrels(args.qrels) if args.qrels else None
    cfg = WindowConfig(depth=args.depth, window_size=args.w, stride=min(args.s, args.w))
    judge = _build_judge(args, qrels)
    templates = load_templates(args.templates)
    budget = PromptBudget(per_passage_tokens=args.passage_tokens)

    records = annotate(
        queries, run, corpus, judge, args.kind, cfg, templates, budget, parallel=args.parallel
    )
    out = _out_dir(args)
    passed, rejected = write_training_files(
        records, out / "train.jsonl", out / "rejected.jsonl"
    )
    _manifest(args, ["corpus", "queries", "run", "qrels", "templates", "transcript"]).write(out)
    print(f"annotated {passed + rejected} queries: {passed} kept, {rejected} rejected -> {out}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _window_cfg(args)
    profile = parse_profile_spec(args.profile)
    sim = simulate(cfg, profile, trials=args.trials, seed=args.seed, fresh_only=args.fresh_only)
    doc = sim.to_json_dict()
    doc["ranking_windows"] = ranking_cost(cfg)
    out = _out_dir(args)
    (out / "cost_report.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _manifest(args, ["profile"] if Path(args.profile).exists() else []).write(out)
    print(sim.table())
    print(f"ranking windows (fixed)  {doc['ranking_windows']}")
    return 0


def _add_window_flags(p: argparse.ArgumentParser, depth_default: int = 100) -> None:
    p.add_argument("--w", type=int, default=20, help="window size (default 20)")
    p.add_argument("--s", type=int, default=10, help="stride (default 10)")
    p.add_argument(
        "--depth", type=int, default=depth_default, help=f"candidate depth (default {depth_default})"
    )


def _add_judge_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--judge",
        choices=["endpoint", "oracle", "replay"],
        default="oracle",
        help="judge backend (default oracle; API key for endpoint comes from "
        "RAGSIFT_API_KEY or OPENAI_API_KEY)",
    )
    p.add_argument("--endpoint-url", help="chat-completions base URL, e.g. https://host/v1")
    p.add_argument("--model", help="model name sent to the endpoint")
    p.add_argument(
        "--threshold",
        type=int,
        default=1,
        help="oracle selection grade threshold (also used to derive gold evidence from qrels)",
    )
    p.add_argument(
        "--transcript",
        help="transcript JSONL: replayed with --judge replay, recorded otherwise",
    )
    p.add_argument("--templates", help="prompt template file (defaults built in)")
    p.add_argument(
        "--passage-tokens", type=int, default=300, help="per-passage token budget (default 300)"
    )


def _add_io_flags(p: argparse.ArgumentParser, need_qrels: bool = False) -> None:
    p.add_argument("--corpus", required=True, help="passage corpus (JSONL or TSV)")
    p.add_argument("--queries", required=True, help="query file (JSONL or TSV)")
    p.add_argument("--run", required=True, help="first-stage TREC run file")
    p.add_argument("--qrels", required=need_qrels, help="TREC qrels file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--parallel", type=int, default=1, help="concurrent queries (default 1)")
    p.add_argument("--seed", type=int, default=0, help="seed recorded in the manifest")
    p.add_argument("--trace", action="store_true", help="write a per-window audit trace")
    p.add_argument("--tag", default="ragsift", help="run tag for TREC output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragsift",
        description="Sliding-window passage re-ranking and utility-based selection for RAG.",
    )
    parser.add_argument("--version", action="version", version=f"ragsift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rerank", help="back-to-front listwise re-ranking")
    _add_io_flags(p)
    _add_window_flags(p)
    _add_judge_flags(p)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("select", help="forward-propagating utility-based selection")
    _add_io_flags(p)
    _add_window_flags(p)
    _add_judge_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="answer EM/F1, evidence scores, nDCG@k")
    p.add_argument("--predictions", help="answer predictions JSONL {query_id, answer}")
    p.add_argument("--answers", help="gold answers JSONL {query_id, answers: [...]}")
    p.add_argument("--selection", help="selection JSONL produced by the select command")
    p.add_argument("--run", help="TREC run file (for --k evidence cuts and nDCG)")
    p.add_argument("--qrels", help="TREC qrels file")
    p.add_argument("--evidence", help="gold evidence JSONL {query_id, evidence: [...]}")
    p.add_argument("--k", type=int, help="evaluate the top-k run cut as evidence")
    p.add_argument("--ndcg-k", type=int, nargs="+", help="nDCG cutoffs, e.g. --ndcg-k 10")
    p.add_argument("--depth", type=int, default=100, help="run load depth (default 100)")
    p.add_argument("--threshold", type=int, default=1, help="qrels grade treated as positive")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("annotate", help="export teacher annotations for distillation")
    _add_io_flags(p)
    p.add_argument("--kind", choices=["ranking", "selection"], required=True)
    p.add_argument("--w", type=int, default=20, help="window size (default 20)")
    p.add_argument("--s", type=int, default=10, help="stride (unused: annotation is one window)")
    p.add_argument("--depth", type=int, default=20, help="candidates per query (default 20)")
    _add_judge_flags(p)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("simulate", help="Monte Carlo window-count simulation")
    _add_window_flags(p)
    p.add_argument(
        "--profile",
        required=True,
        help="selection profile: never, always, bernoulli:P, or a JSON histogram path",
    )
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--fresh-only",
        action="store_true",
        help="sticky-carry bracket: the profile drives fresh passages only",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LoadError, TemplateError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
