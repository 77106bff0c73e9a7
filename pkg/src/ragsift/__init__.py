"""Passage re-ranking and utility-based selection for RAG pipelines."""

from .corpus import (
    CandidateEntry,
    CandidateList,
    Corpus,
    LoadError,
    Passage,
    Qrels,
    Query,
    evidence_from_qrels,
    load_answers,
    load_corpus,
    load_evidence,
    load_qrels,
    load_queries,
    load_run,
    write_run,
)
from .judge import (
    Judge,
    JudgeEndpointConfig,
    JudgeTransportError,
    JudgeVerdict,
    OracleJudge,
    RecordingJudge,
    RemoteJudge,
    ReplayJudge,
    judge_window,
    parse_ranking,
    parse_selection,
)
from .metrics import (
    MetricsReport,
    answer_em_f1,
    evaluate_answers,
    evidence_scores,
    ndcg_at_k,
    normalize_answer,
)
from .prompting import PromptBudget, PromptTemplate, RenderedPrompt, load_templates, render
from .windowing import (
    PreselectedQueue,
    WindowConfig,
    WindowTrace,
    cut,
    plan_ranking_windows,
    rerank,
    select,
    window_count_bounds,
)

__version__ = "0.1.0"

__all__ = [
    "CandidateEntry",
    "CandidateList",
    "Corpus",
    "Judge",
    "JudgeEndpointConfig",
    "JudgeTransportError",
    "JudgeVerdict",
    "LoadError",
    "MetricsReport",
    "OracleJudge",
    "Passage",
    "PreselectedQueue",
    "PromptBudget",
    "PromptTemplate",
    "Qrels",
    "Query",
    "RecordingJudge",
    "RemoteJudge",
    "RenderedPrompt",
    "ReplayJudge",
    "WindowConfig",
    "WindowTrace",
    "answer_em_f1",
    "cut",
    "evaluate_answers",
    "evidence_from_qrels",
    "evidence_scores",
    "judge_window",
    "load_answers",
    "load_corpus",
    "load_evidence",
    "load_qrels",
    "load_queries",
    "load_run",
    "load_templates",
    "ndcg_at_k",
    "normalize_answer",
    "parse_ranking",
    "parse_selection",
    "plan_ranking_windows",
    "render",
    "rerank",
    "select",
    "window_count_bounds",
    "write_run",
]
