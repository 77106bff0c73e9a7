from __future__ import annotations

import logging

import pytest

from ragsift.corpus import (
    CandidateEntry,
    CandidateList,
    Corpus,
    LoadError,
    Passage,
    check_run_resolves,
    evidence_from_qrels,
    load_answers,
    load_corpus,
    load_evidence,
    load_qrels,
    load_queries,
    load_run,
    ranking_to_candidates,
    resolve_candidates,
    write_run,
)


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCorpus:
    def test_jsonl_three_docs(self, tmp_path):
        path = _write(
            tmp_path,
            "c.jsonl",
            '{"doc_id": "d1", "text": "one"}\n'
            '{"doc_id": "d2", "text": "two", "title": "T"}\n'
            '{"doc_id": "d3", "text": "three"}\n',
        )
        corpus = load_corpus(path)
        assert len(corpus) == 3
        assert corpus["d2"].title == "T"

    def test_duplicate_doc_id_names_line(self, tmp_path):
        path = _write(
            tmp_path,
            "c.jsonl",
            '{"doc_id": "d1", "text": "one"}\n{"doc_id": "d1", "text": "again"}\n',
        )
        with pytest.raises(LoadError, match="duplicate doc_id d1 at line 2"):
            load_corpus(path)

    def test_tsv_row_maps_fields(self, tmp_path):
        path = _write(tmp_path, "c.tsv", "d9\tHello world\n")
        corpus = load_corpus(path)
        assert corpus["d9"] == Passage(doc_id="d9", text="Hello world")

    def test_missing_text_field(self, tmp_path):
        path = _write(tmp_path, "c.jsonl", '{"doc_id": "d1"}\n')
        with pytest.raises(LoadError, match="missing text field at line 1"):
            load_corpus(path)

    def test_underscore_id_accepted(self, tmp_path):
        path = _write(tmp_path, "c.jsonl", '{"_id": "d1", "text": "one"}\n')
        assert "d1" in load_corpus(path)

    def test_empty_text_rejected(self, tmp_path):
        path = _write(tmp_path, "c.jsonl", '{"doc_id": "d1", "text": "   "}\n')
        with pytest.raises(LoadError, match="empty text"):
            load_corpus(path)


class TestLoadRun:
    def test_line_maps_fields(self, tmp_path):
        path = _write(tmp_path, "r.trec", "q1 Q0 d7 1 12.5 bm25\n")
        run = load_run(path)
        assert run["q1"].entries == (CandidateEntry(doc_id="d7", score=12.5, rank=1),)

    def test_truncates_to_max_depth(self, tmp_path):
        lines = "".join(f"q1 Q0 d{i} {i} {1000 - i} x\n" for i in range(1, 151))
        run = load_run(_write(tmp_path, "r.trec", lines), max_depth=100)
        assert len(run["q1"]) == 100
        assert run["q1"].entries[-1].doc_id == "d100"

    def test_non_contiguous_rank_rejected(self, tmp_path):
        path = _write(tmp_path, "r.trec", "q1 Q0 d1 1 2.0 x\nq1 Q0 d2 3 1.0 x\n")
        with pytest.raises(LoadError, match="non-contiguous rank"):
            load_run(path)

    def test_non_numeric_rank_rejected(self, tmp_path):
        path = _write(tmp_path, "r.trec", "q1 Q0 d1 one 2.0 x\n")
        with pytest.raises(LoadError, match="non-numeric"):
            load_run(path)

    def test_duplicate_pair_rejected(self, tmp_path):
        path = _write(tmp_path, "r.trec", "q1 Q0 d1 1 2.0 x\nq1 Q0 d1 2 1.0 x\n")
        with pytest.raises(LoadError, match="duplicate"):
            load_run(path)

    def test_out_of_order_lines_sorted_and_flagged(self, tmp_path, caplog):
        path = _write(tmp_path, "r.trec", "q1 Q0 d2 2 1.0 x\nq1 Q0 d1 1 2.0 x\n")
        with caplog.at_level(logging.WARNING):
            run = load_run(path)
        assert run["q1"].doc_ids() == ["d1", "d2"]
        assert any("line order disagrees" in r.message for r in caplog.records)

    def test_score_inversion_warns_but_rank_wins(self, tmp_path, caplog):
        path = _write(tmp_path, "r.trec", "q1 Q0 d1 1 1.0 x\nq1 Q0 d2 2 5.0 x\n")
        with caplog.at_level(logging.WARNING):
            run = load_run(path)
        assert run["q1"].doc_ids() == ["d1", "d2"]
        assert any("score increases" in r.message for r in caplog.records)

    def test_round_trip(self, tmp_path):
        original = _write(
            tmp_path,
            "r.trec",
            "q1 Q0 d7 1 12.5 bm25\nq1 Q0 d3 2 10 bm25\nq2 Q0 d9 1 3.25 bm25\n",
        )
        run = load_run(original)
        out = tmp_path / "out.trec"
        write_run(run, out, tag="bm25")
        assert load_run(out) == run


class TestLoadQrels:
    def test_maps_grades(self, tmp_path):
        qrels = load_qrels(_write(tmp_path, "q.txt", "q1 0 d7 2\n"))
        assert qrels.grade("q1", "d7") == 2

    def test_absent_pair_grade_zero(self, tmp_path):
        qrels = load_qrels(_write(tmp_path, "q.txt", "q1 0 d7 2\n"))
        assert qrels.grade("q1", "d9") == 0

    def test_negative_grade_rejected(self, tmp_path):
        with pytest.raises(LoadError, match="negative grade"):
            load_qrels(_write(tmp_path, "q.txt", "q1 0 d7 -1\n"))

    def test_grade_zero_lines_retained(self, tmp_path):
        qrels = load_qrels(_write(tmp_path, "q.txt", "q1 0 d7 0\n"))
        assert "d7" in qrels.grades_for("q1")
        assert qrels.positives("q1") == set()


class TestGoldFiles:
    def test_answers(self, tmp_path):
        path = _write(tmp_path, "a.jsonl", '{"query_id": "q1", "answers": ["x", "y"]}\n')
        assert load_answers(path) == {"q1": ["x", "y"]}

    def test_answers_must_be_non_empty(self, tmp_path):
        path = _write(tmp_path, "a.jsonl", '{"query_id": "q1", "answers": []}\n')
        with pytest.raises(LoadError, match="non-empty"):
            load_answers(path)

    def test_evidence(self, tmp_path):
        path = _write(tmp_path, "e.jsonl", '{"query_id": "q1", "evidence": ["d1", "d2"]}\n')
        assert load_evidence(path) == {"q1": {"d1", "d2"}}

    def test_evidence_from_qrels_threshold(self, tmp_path):
        qrels = load_qrels(_write(tmp_path, "q.txt", "q1 0 d1 2\nq1 0 d2 1\nq1 0 d3 0\nq2 0 d4 0\n"))
        assert evidence_from_qrels(qrels) == {"q1": {"d1", "d2"}}
        assert evidence_from_qrels(qrels, threshold=2) == {"q1": {"d1"}}


class TestResolution:
    def test_resolve_in_rank_order(self):
        corpus = Corpus([Passage("d1", "a"), Passage("d2", "b")])
        cl = CandidateList(
            query_id="q1",
            entries=(
                CandidateEntry("d2", 2.0, 1),
                CandidateEntry("d1", 1.0, 2),
            ),
        )
        assert [p.doc_id for p in resolve_candidates(corpus, cl)] == ["d2", "d1"]

    def test_fail_fast_lists_all_unresolved(self):
        corpus = Corpus([Passage("d1", "a")])
        run = {
            "q1": ranking_to_candidates("q1", ["d1", "dX"]),
            "q2": ranking_to_candidates("q2", ["dY"]),
        }
        with pytest.raises(LoadError) as exc:
            check_run_resolves(corpus, run)
        assert "q1:dX" in str(exc.value) and "q2:dY" in str(exc.value)

    def test_queries_loader(self, tmp_path):
        path = _write(tmp_path, "q.jsonl", '{"query_id": "q1", "text": "hello"}\n')
        queries = load_queries(path)
        assert queries[0].query_id == "q1" and queries[0].text == "hello"
