"""Teacher-annotation export for distillation training.

Each training query's top candidates are judged in a single window and the
raw teacher output is validated strictly: unlike inference-time parsing,
nothing is repaired, and any output that would have needed repair is
rejected with defect tags. Passing targets are canonicalized so they
re-parse with zero repairs.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import CandidateList, Corpus, Query, resolve_candidates
from .judge import (
    DEDUP,
    FREE_TEXT_STRIPPED,
    MISSING_APPENDED,
    OUT_OF_RANGE_DROPPED,
    RANKING,
    SELECTION,
    UNPARSEABLE,
    Judge,
    JudgeTransportError,
    canonical_ranking_text,
    canonical_selection_text,
    parse_ranking,
    parse_selection,
)
from .prompting import PromptBudget, PromptTemplate, default_templates, render
from .windowing import WindowConfig

logger = logging.getLogger(__name__)

IMPROPER_FORMAT = "improper_format"
MISSING_IDENTIFIERS = "missing_identifiers"
REPETITIVE = "repetitive"
TRANSPORT = "transport"


@dataclass
class TrainingRecord:
    query_id: str
    kind: str
    system_text: str
    prompt_text: str
    raw_text: str
    target_text: str
    passed: bool
    defects: list[str] = field(default_factory=list)

    def to_messages(self) -> dict:
        return {
            "messages": [
                {"role": "system", "content": self.system_text},
                {"role": "user", "content": self.prompt_text},
                {"role": "assistant", "content": self.target_text},
            ]
        }


def validate_generation(text: str, kind: str, n: int) -> tuple[bool, list[str]]:
    """Strict training-time validation of a raw teacher generation.

    A generation passes only if the unrepaired parse is defect-free:
    ``improper_format`` covers output whose identifiers had to be scavenged
    from free text (or were absent, or sat outside the window, or, for
    selection, came without a pseudo answer); ``missing_identifiers`` flags
    ranking output that does not cover 1..n exactly; ``repetitive`` flags any
    identifier emitted twice.
    """
    defects: set[str] = set()
    if kind == RANKING:
        _, repairs = parse_ranking(text, n)
        tags = set(repairs)
        if tags & {FREE_TEXT_STRIPPED, UNPARSEABLE}:
            defects.add(IMPROPER_FORMAT)
        if tags & {MISSING_APPENDED, OUT_OF_RANGE_DROPPED}:
            defects.add(MISSING_IDENTIFIERS)
        if DEDUP in tags:
            defects.add(REPETITIVE)
    elif kind == SELECTION:
        _, pseudo, repairs = parse_selection(text, n)
        tags = set(repairs)
        if tags & {FREE_TEXT_STRIPPED, UNPARSEABLE, OUT_OF_RANGE_DROPPED}:
            defects.add(IMPROPER_FORMAT)
        if pseudo is None or not pseudo.strip():
            # the training target must teach answer drafting, not just picking
            defects.add(IMPROPER_FORMAT)
        if DEDUP in tags:
            defects.add(REPETITIVE)
    else:
        raise ValueError(f"unknown annotation kind {kind!r}")
    ordered = [d for d in (IMPROPER_FORMAT, MISSING_IDENTIFIERS, REPETITIVE) if d in defects]
    return not ordered, ordered


def _canonical_target(text: str, kind: str, n: int) -> str:
    if kind == RANKING:
        permutation, _ = parse_ranking(text, n)
        return canonical_ranking_text(permutation)
    selected, pseudo, _ = parse_selection(text, n)
    return canonical_selection_text(selected, pseudo)


def annotate(
    queries: Sequence[Query],
    run: Mapping[str, CandidateList],
    corpus: Corpus,
    judge: Judge,
    kind: str,
    cfg: WindowConfig,
    templates: tuple[PromptTemplate, PromptTemplate] | None = None,
    budget: PromptBudget | None = None,
    parallel: int = 1,
) -> list[TrainingRecord]:
    """Judge each query's top candidates once and build training records.

    Annotation uses a single window, so the configured depth must not exceed
    the window size; candidate lists are truncated to the depth. Queries are
    independent and run concurrently up to ``parallel``; records come back
    sorted by query_id regardless. A judge transport failure yields a failed
    record tagged ``transport`` instead of aborting the batch.
    """
    if kind not in (RANKING, SELECTION):
        raise ValueError(f"unknown annotation kind {kind!r}")
    if cfg.depth > cfg.window_size:
        raise ValueError(
            f"annotation is single-window: depth ({cfg.depth}) must be <= "
            f"window_size ({cfg.window_size})"
        )
    ranking_template, selection_template = templates or default_templates()
    template = ranking_template if kind == RANKING else selection_template

    jobs: list[Query] = []
    for query in sorted(queries, key=lambda q: q.query_id):
        candidates = run.get(query.query_id)
        if candidates is None or not candidates.entries:
            logger.warning("no candidates for query %s; skipping", query.query_id)
            continue
        jobs.append(query)

    def _one(query: Query) -> TrainingRecord:
        candidates = run[query.query_id]
        truncated = CandidateList(
            query_id=candidates.query_id, entries=candidates.entries[: cfg.depth]
        )
        window = resolve_candidates(corpus, truncated)
        n = len(window)
        prompt = render(template, query, window, budget)
        try:
            verdict = judge.judge(prompt, kind, n)
        except JudgeTransportError as exc:
            logger.warning("teacher unreachable for query %s: %s", query.query_id, exc)
            return TrainingRecord(
                query_id=query.query_id,
                kind=kind,
                system_text=prompt.system,
                prompt_text=prompt.user,
                raw_text="",
                target_text="",
                passed=False,
                defects=[TRANSPORT],
            )
        passed, defects = validate_generation(verdict.raw_text, kind, n)
        return TrainingRecord(
            query_id=query.query_id,
            kind=kind,
            system_text=prompt.system,
            prompt_text=prompt.user,
            raw_text=verdict.raw_text,
            target_text=_canonical_target(verdict.raw_text, kind, n) if passed else "",
            passed=passed,
            defects=defects,
        )

    if parallel <= 1:
        return [_one(q) for q in jobs]
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_one, jobs))


def write_training_files(
    records: Iterable[TrainingRecord], train_path: str | Path, rejected_path: str | Path
) -> tuple[int, int]:
    """Write passing records as conversation JSONL and failures to a sidecar.

    Returns (passed, rejected) counts.
    """
    train_path = Path(train_path)
    rejected_path = Path(rejected_path)
    passed = rejected = 0
    with train_path.open("w", encoding="utf-8") as train_fh, rejected_path.open(
        "w", encoding="utf-8"
    ) as rej_fh:
        for rec in records:
            if rec.passed:
                train_fh.write(json.dumps(rec.to_messages(), ensure_ascii=False) + "\n")
                passed += 1
            else:
                rej_fh.write(
                    json.dumps(
                        {
                            "query_id": rec.query_id,
                            "kind": rec.kind,
                            "defects": rec.defects,
                            "raw_text": rec.raw_text,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
                rejected += 1
    return passed, rejected
