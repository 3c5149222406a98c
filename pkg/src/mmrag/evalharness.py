"""Benchmark loading, rule-based answer scoring, and metric aggregation.

Items arrive as JSON lines in one normalized schema. Scoring is purely
rule-based on the typed final answer (there is no LLM answer-extraction
step: the engine already emits typed answers), and the report breaks
accuracy down by evidence source and page scope alongside a generalized
F1 that rewards calibrated abstention.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .answerer import NOT_ANSWERABLE, AnswerRecord, AnswerType
from .errors import MMRagError

REPORT_FORMAT_VERSION = "mmrag-eval/1"

EVIDENCE_SOURCES = ("TXT", "LAY", "CHA", "TAB", "FIG")


class PageScope(str, Enum):
    SINGLE = "Single"
    MULTI = "Multi"
    UNANSWERABLE = "Unanswerable"


_SCOPE_COLUMNS = {PageScope.SINGLE: "SIN", PageScope.MULTI: "MUL", PageScope.UNANSWERABLE: "UNA"}


@dataclass(frozen=True)
class QAItem:
    qid: str
    doc_id: str
    question: str
    answer_type: AnswerType
    gold: object
    evidence_sources: frozenset[str] = frozenset()
    page_scope: PageScope = PageScope.SINGLE

    @property
    def answerable(self) -> bool:
        return self.page_scope is not PageScope.UNANSWERABLE


@dataclass
class ScoreReport:
    per_item: list[tuple[str, int]]
    accuracy: float
    f1: float
    by_source: dict[str, float] = field(default_factory=dict)
    by_scope: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "version": REPORT_FORMAT_VERSION,
            "per_item": [{"qid": q, "correct": c} for q, c in self.per_item],
            "accuracy": self.accuracy,
            "f1": self.f1,
            "by_source": self.by_source,
            "by_scope": self.by_scope,
        }


class BenchmarkFormatError(MMRagError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


def load_benchmark(path) -> list[QAItem]:
    """Read JSON-lines items, validating every field with line numbers."""
    items = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BenchmarkFormatError(line_no, f"invalid JSON: {exc}") from exc
        try:
            answer_type = AnswerType(data["answer_type"])
        except (KeyError, ValueError):
            raise BenchmarkFormatError(line_no, f"unknown answer_type {data.get('answer_type')!r}")
        try:
            scope = PageScope(data.get("page_scope", "Single"))
        except ValueError:
            raise BenchmarkFormatError(line_no, f"unknown page_scope {data.get('page_scope')!r}")
        sources = frozenset(data.get("evidence_sources", []))
        unknown = sources - set(EVIDENCE_SOURCES)
        if unknown:
            raise BenchmarkFormatError(line_no, f"unknown evidence sources {sorted(unknown)}")
        for key in ("qid", "doc_id", "question"):
            if not data.get(key):
                raise BenchmarkFormatError(line_no, f"missing {key}")
        gold = data.get("gold")
        if (gold is None) != (scope is PageScope.UNANSWERABLE):
            raise BenchmarkFormatError(line_no, "gold must be null exactly when page_scope is Unanswerable")
        items.append(
            QAItem(
                qid=data["qid"],
                doc_id=data["doc_id"],
                question=data["question"],
                answer_type=answer_type,
                gold=gold,
                evidence_sources=sources,
                page_scope=scope,
            )
        )
    return items


# --- Scoring ----------------------------------------------------------------

_PUNCT_RE = re.compile(f"[{re.escape(string.punctuation)}]")


def _normalize_text(text: str) -> str:
    return re.sub(r"\s+", " ", _PUNCT_RE.sub(" ", text.lower())).strip()


def _strings_match(pred: str, gold: str) -> bool:
    p, g = _normalize_text(pred), _normalize_text(gold)
    if not p or not g:
        return p == g
    return p == g or p in g or g in p


def _floats_match(pred: float, gold: float) -> bool:
    return abs(pred - gold) <= max(0.01 * abs(gold), 0.01)


def _element_match(pred, gold) -> bool:
    if isinstance(gold, list) or isinstance(pred, list):
        return isinstance(gold, list) and isinstance(pred, list) and _lists_match(pred, gold)
    if isinstance(gold, bool) or isinstance(pred, bool):
        return pred == gold
    if isinstance(gold, int):
        return isinstance(pred, (int, float)) and float(pred) == float(gold)
    if isinstance(gold, float):
        return isinstance(pred, (int, float)) and _floats_match(float(pred), gold)
    if isinstance(gold, str):
        return isinstance(pred, str) and _strings_match(pred, gold)
    return pred == gold


def _lists_match(pred: list, gold: list) -> bool:
    """Order-insensitive multiset match under the element rules."""
    if len(pred) != len(gold):
        return False

    remaining = list(pred)

    def backtrack(i: int) -> bool:
        if i == len(gold):
            return True
        for j, candidate in enumerate(remaining):
            if candidate is _TAKEN:
                continue
            if _element_match(candidate, gold[i]):
                remaining[j] = _TAKEN
                if backtrack(i + 1):
                    return True
                remaining[j] = candidate
        return False

    return backtrack(0)


_TAKEN = object()


def score_answer(pred: AnswerRecord, gold: QAItem) -> int:
    """1 if the typed prediction matches the gold answer, else 0."""
    sentinel = pred.final_answer == NOT_ANSWERABLE
    if not gold.answerable:
        return 1 if sentinel else 0
    if sentinel:
        return 0
    value = pred.final_answer
    if gold.answer_type is AnswerType.INTEGER:
        return 1 if isinstance(value, (int, float)) and float(value) == float(gold.gold) else 0
    if gold.answer_type is AnswerType.FLOAT:
        return 1 if isinstance(value, (int, float)) and _floats_match(float(value), float(gold.gold)) else 0
    if gold.answer_type is AnswerType.STRING:
        return 1 if isinstance(value, str) and _strings_match(value, str(gold.gold)) else 0
    return 1 if isinstance(value, list) and isinstance(gold.gold, list) and _lists_match(value, gold.gold) else 0


def aggregate(items: list[QAItem], preds: list[AnswerRecord]) -> ScoreReport:
    """Score every (item, prediction) pair and assemble the report.

    F1 counts a correct non-sentinel answer on an answerable item as TP,
    any wrong non-sentinel answer as FP, and an abstention on an
    answerable item as FN; an empty confusion (all correct abstentions)
    scores 1.0 by convention.
    """
    if len(items) != len(preds):
        raise MMRagError(f"{len(items)} items but {len(preds)} predictions")
    per_item: list[tuple[str, int]] = []
    tp = fp = fn = 0
    for item, pred in zip(items, preds):
        correct = score_answer(pred, item)
        per_item.append((item.qid, correct))
        sentinel = pred.final_answer == NOT_ANSWERABLE
        if item.answerable and not sentinel and correct:
            tp += 1
        elif not sentinel and not correct:
            fp += 1
        elif item.answerable and sentinel:
            fn += 1

    n = len(items)
    accuracy = sum(c for _, c in per_item) / n if n else 0.0
    denominator = 2 * tp + fp + fn
    f1 = 1.0 if denominator == 0 else 2 * tp / denominator

    correct_by_qid = dict(per_item)
    by_source: dict[str, float] = {}
    for source in EVIDENCE_SOURCES:
        tagged = [item for item in items if source in item.evidence_sources]
        if tagged:
            by_source[source] = sum(correct_by_qid[item.qid] for item in tagged) / len(tagged)
    by_scope: dict[str, float] = {}
    for scope, column in _SCOPE_COLUMNS.items():
        tagged = [item for item in items if item.page_scope is scope]
        if tagged:
            by_scope[column] = sum(correct_by_qid[item.qid] for item in tagged) / len(tagged)

    return ScoreReport(per_item=per_item, accuracy=accuracy, f1=f1, by_source=by_source, by_scope=by_scope)


def format_report_table(report: ScoreReport) -> str:
    """Fixed-width table with source/scope breakdowns plus Acc. and F1."""
    columns = list(EVIDENCE_SOURCES) + list(_SCOPE_COLUMNS.values()) + ["Acc.", "F1"]
    values = []
    for col in columns[:-2]:
        value = report.by_source.get(col) if col in EVIDENCE_SOURCES else report.by_scope.get(col)
        values.append(f"{value * 100:.1f}" if value is not None else "-")
    values.append(f"{report.accuracy * 100:.1f}")
    values.append(f"{report.f1 * 100:.1f}")
    header = " | ".join(f"{c:>5}" for c in columns)
    row = " | ".join(f"{v:>5}" for v in values)
    return f"{header}\n{row}"
