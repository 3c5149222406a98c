import json

import pytest

from mmrag.answerer import NOT_ANSWERABLE, AnswerRecord, AnswerType
from mmrag.errors import MMRagError
from mmrag.evalharness import (
    BenchmarkFormatError,
    PageScope,
    QAItem,
    aggregate,
    format_report_table,
    load_benchmark,
    score_answer,
)


def record(final) -> AnswerRecord:
    return AnswerRecord(
        step_by_step_analysis="a",
        reasoning_summary="r",
        relevant_pages=[1],
        final_answer=final,
        raw_response="raw",
    )


def item(
    qid: str,
    answer_type: AnswerType,
    gold,
    scope: PageScope = PageScope.SINGLE,
    sources=("TXT",),
) -> QAItem:
    return QAItem(
        qid=qid,
        doc_id="doc",
        question="q?",
        answer_type=answer_type,
        gold=gold,
        evidence_sources=frozenset(sources),
        page_scope=scope,
    )


def una_item(qid: str) -> QAItem:
    return item(qid, AnswerType.STRING, None, scope=PageScope.UNANSWERABLE)


# --- loading -------------------------------------------------------------------


def write_items(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")


def base_row(qid="q1", **overrides):
    row = {
        "qid": qid,
        "doc_id": "doc",
        "question": "what?",
        "answer_type": "Integer",
        "gold": 5,
        "evidence_sources": ["TXT"],
        "page_scope": "Single",
    }
    row.update(overrides)
    return row


def test_load_benchmark_reads_valid_lines(tmp_path):
    path = tmp_path / "items.jsonl"
    write_items(path, [base_row("q1"), base_row("q2"), base_row("q3")])
    items = load_benchmark(path)
    assert [i.qid for i in items] == ["q1", "q2", "q3"]


def test_load_benchmark_rejects_unknown_answer_type_with_line(tmp_path):
    path = tmp_path / "items.jsonl"
    write_items(path, [base_row("q1"), base_row("q2", answer_type="Bool")])
    with pytest.raises(BenchmarkFormatError, match="line 2"):
        load_benchmark(path)


def test_load_benchmark_empty_file(tmp_path):
    path = tmp_path / "items.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_benchmark(path) == []


def test_load_benchmark_enforces_unanswerable_gold_null(tmp_path):
    path = tmp_path / "items.jsonl"
    write_items(path, [base_row(page_scope="Unanswerable")])
    with pytest.raises(BenchmarkFormatError, match="Unanswerable"):
        load_benchmark(path)


def test_load_benchmark_rejects_unknown_source(tmp_path):
    path = tmp_path / "items.jsonl"
    write_items(path, [base_row(evidence_sources=["VID"])])
    with pytest.raises(BenchmarkFormatError, match="VID"):
        load_benchmark(path)


# --- scoring --------------------------------------------------------------------


def test_integer_exact_match():
    gold = item("q", AnswerType.INTEGER, 127855)
    assert score_answer(record(127855), gold) == 1
    assert score_answer(record(127854), gold) == 0


def test_float_tolerance():
    gold = item("q", AnswerType.FLOAT, 53.60)
    assert score_answer(record(53.6), gold) == 1
    assert score_answer(record(53.1), gold) == 1  # within 1% of 53.6
    assert score_answer(record(55.0), gold) == 0
    near_zero = item("q", AnswerType.FLOAT, 0.0)
    assert score_answer(record(0.005), near_zero) == 1
    assert score_answer(record(0.5), near_zero) == 0


def test_string_normalization_and_containment():
    gold = item("q", AnswerType.STRING, "Less well off")
    assert score_answer(record("Less well off."), gold) == 1
    assert score_answer(record("less WELL off"), gold) == 1
    assert score_answer(record("They are less well off overall"), gold) == 1
    assert score_answer(record("Better off"), gold) == 0


def test_list_multiset_match():
    gold = item("q", AnswerType.LIST, [123.9, 97.3, 82.96, 90.15])
    assert score_answer(record([90.15, 123.9, 82.96, 97.3]), gold) == 1
    assert score_answer(record([123.9, 97.3, 82.96]), gold) == 0
    assert score_answer(record([123.9, 97.3, 82.96, 95.0]), gold) == 0


def test_unanswerable_scoring():
    gold = una_item("q")
    assert score_answer(record(NOT_ANSWERABLE), gold) == 1
    assert score_answer(record("an answer"), gold) == 0


def test_gold_against_itself_scores_one():
    cases = [
        item("a", AnswerType.INTEGER, 7),
        item("b", AnswerType.FLOAT, 1.25),
        item("c", AnswerType.STRING, "Some Answer"),
        item("d", AnswerType.LIST, [1, "two", 3.5]),
    ]
    for gold in cases:
        assert score_answer(record(gold.gold), gold) == 1


# --- aggregation -----------------------------------------------------------------


def test_accuracy_mean():
    items = [item(f"q{i}", AnswerType.INTEGER, 1) for i in range(4)]
    preds = [record(1), record(0), record(1), record(1)]
    report = aggregate(items, preds)
    assert report.accuracy == 0.75


def test_all_unanswerable_all_sentinel():
    items = [una_item(f"q{i}") for i in range(3)]
    preds = [record(NOT_ANSWERABLE)] * 3
    report = aggregate(items, preds)
    assert report.accuracy == 1.0
    assert report.f1 == 1.0


def test_f1_hand_count():
    # 2 answerable (1 right, 1 wrong non-sentinel) + 1 unanswerable answered
    # wrong: TP=1, FP=2, FN=0 -> F1 = 2/(2+2) = 0.5
    items = [item("a", AnswerType.INTEGER, 1), item("b", AnswerType.INTEGER, 2), una_item("c")]
    preds = [record(1), record(99), record("wrong")]
    report = aggregate(items, preds)
    assert report.f1 == 0.5


def test_all_correct_and_all_wrong_edges():
    items = [item("a", AnswerType.INTEGER, 1), item("b", AnswerType.STRING, "x")]
    assert aggregate(items, [record(1), record("x")]).accuracy == 1.0
    assert aggregate(items, [record(1), record("x")]).f1 == 1.0
    wrong = aggregate(items, [record(9), record("zzz")])
    assert wrong.accuracy == 0.0
    assert wrong.f1 == 0.0


def test_aggregate_length_mismatch():
    with pytest.raises(MMRagError):
        aggregate([item("a", AnswerType.INTEGER, 1)], [])


def test_breakdowns_by_source_and_scope():
    items = [
        item("a", AnswerType.INTEGER, 1, sources=("TXT", "TAB")),
        item("b", AnswerType.INTEGER, 2, sources=("TAB",), scope=PageScope.MULTI),
        una_item("c"),
    ]
    preds = [record(1), record(99), record(NOT_ANSWERABLE)]
    report = aggregate(items, preds)
    assert report.by_source["TXT"] == 1.0
    assert report.by_source["TAB"] == 0.5
    assert "CHA" not in report.by_source
    assert report.by_scope == {"SIN": 1.0, "MUL": 0.0, "UNA": 1.0}


def test_report_table_layout():
    items = [item("a", AnswerType.INTEGER, 1)]
    table = format_report_table(aggregate(items, [record(1)]))
    header, row = table.splitlines()
    assert [c.strip() for c in header.split("|")] == [
        "TXT", "LAY", "CHA", "TAB", "FIG", "SIN", "MUL", "UNA", "Acc.", "F1",
    ]
    assert "100.0" in row


def test_report_json_shape():
    items = [item("a", AnswerType.INTEGER, 1)]
    payload = aggregate(items, [record(1)]).to_dict()
    assert payload["version"] == "mmrag-eval/1"
    assert payload["per_item"] == [{"qid": "a", "correct": 1}]
