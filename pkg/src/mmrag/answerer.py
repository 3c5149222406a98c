"""Answer generation: prompt assembly, chat call, structured-output parsing.

The prompt asks for a JSON object with four fields (analysis, reasoning
summary, relevant pages, typed final answer). Parsing coerces the final
answer to the declared type and never lets a mistyped value through; a
malformed reply earns one repair retry before the record falls back to
the "Not answerable" sentinel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

from . import prompts
from .errors import StructuredOutputError
from .jsonextract import extract_json_object

logger = logging.getLogger(__name__)

ANSWER_FORMAT_VERSION = "mmrag-ans/1"
NOT_ANSWERABLE = "Not answerable"


class AnswerType(str, Enum):
    LIST = "List"
    INTEGER = "Integer"
    STRING = "String"
    FLOAT = "Float"


@dataclass(frozen=True)
class PromptBundle:
    context_block: str
    question: str
    guidelines: str
    response_format: str
    examples: str

    def render(self) -> str:
        filled = prompts.ANSWER_TEMPLATE.replace("{context}", "\n" + self.context_block + "\n").replace(
            "{question}", self.question
        )
        return "\n\n".join([self.guidelines, self.response_format, self.examples, filled])


@dataclass
class AnswerRecord:
    step_by_step_analysis: str
    reasoning_summary: str
    relevant_pages: list[int]
    final_answer: object
    raw_response: str

    @property
    def is_answerable(self) -> bool:
        return self.final_answer != NOT_ANSWERABLE

    def to_dict(self) -> dict:
        return {
            "version": ANSWER_FORMAT_VERSION,
            "step_by_step_analysis": self.step_by_step_analysis,
            "reasoning_summary": self.reasoning_summary,
            "relevant_pages": self.relevant_pages,
            "final_answer": self.final_answer,
            "raw_response": self.raw_response,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnswerRecord":
        return cls(
            step_by_step_analysis=data["step_by_step_analysis"],
            reasoning_summary=data["reasoning_summary"],
            relevant_pages=list(data["relevant_pages"]),
            final_answer=data["final_answer"],
            raw_response=data["raw_response"],
        )


def format_context(context) -> str:
    """Render a RetrievalContext with provenance labels, pages first."""
    sections = []
    for page_no, text in context.pages:
        sections.append(f"[Page {page_no}]\n{text}")
    for ev in context.visual_evidence:
        sections.append(f"[Image p{ev.page_no}/{ev.asset_id}]\n{ev.evidence}")
    for hit in context.summaries:
        lo, hi = min(hit.source_pages), max(hit.source_pages)
        sections.append(f"[Summary pages {lo}-{hi}]\n{hit.text}")
    return "\n\n".join(sections)


def build_prompt(query: str, context, answer_type: AnswerType) -> PromptBundle:
    """Deterministic prompt assembly for one question."""
    response_format = "\n\n".join(
        [
            "Response format:",
            prompts.STEP_BY_STEP_FORMAT,
            prompts.REASONING_SUMMARY_FORMAT,
            prompts.RELEVANT_PAGES_FORMAT,
            prompts.FINAL_ANSWER_FORMATS[answer_type.value],
            prompts.JSON_OUTPUT_INSTRUCTION,
        ]
    )
    return PromptBundle(
        context_block=format_context(context),
        question=query,
        guidelines=prompts.ANSWER_GUIDELINES,
        response_format=response_format,
        examples="Example:\n\n" + prompts.ANSWER_EXAMPLES[answer_type.value],
    )


def _is_sentinel(value) -> bool:
    return isinstance(value, str) and value.strip().lower() == "not answerable"


def _coerce_integer(value):
    if isinstance(value, bool):
        raise StructuredOutputError("boolean is not an integer answer")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value.is_integer():
            return int(value)
        raise StructuredOutputError(f"non-integral number {value!r} for Integer answer")
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError as exc:
            raise StructuredOutputError(f"cannot read {value!r} as an integer") from exc
    raise StructuredOutputError(f"cannot read {type(value).__name__} as an integer")


def _coerce_float(value):
    if isinstance(value, bool):
        raise StructuredOutputError("boolean is not a numeric answer")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value.strip())
        except ValueError as exc:
            raise StructuredOutputError(f"cannot read {value!r} as a number") from exc
    raise StructuredOutputError(f"cannot read {type(value).__name__} as a number")


def _coerce_string(value):
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        raise StructuredOutputError("boolean is not a string answer")
    if isinstance(value, (int, float)):
        return str(value)
    raise StructuredOutputError(f"cannot read {type(value).__name__} as a string")


def _coerce_list_element(value):
    if isinstance(value, list):
        return [_coerce_list_element(v) for v in value]
    if isinstance(value, bool):
        raise StructuredOutputError("boolean is not a list element")
    if isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        text = value.strip()
        try:
            return int(text)
        except ValueError:
            pass
        try:
            return float(text)
        except ValueError:
            return value
    raise StructuredOutputError(f"cannot read {type(value).__name__} as a list element")


def coerce_final_answer(value, answer_type: AnswerType):
    """Typed coercion; raises StructuredOutputError rather than mistyping."""
    if _is_sentinel(value):
        return NOT_ANSWERABLE
    if answer_type is AnswerType.INTEGER:
        return _coerce_integer(value)
    if answer_type is AnswerType.FLOAT:
        return _coerce_float(value)
    if answer_type is AnswerType.STRING:
        return _coerce_string(value)
    if not isinstance(value, list):
        raise StructuredOutputError(f"expected a list, got {type(value).__name__}")
    return [_coerce_list_element(v) for v in value]


def _coerce_pages(value) -> list[int]:
    if not isinstance(value, list):
        return []
    pages = []
    for entry in value:
        if isinstance(entry, bool):
            continue
        if isinstance(entry, int):
            pages.append(entry)
        elif isinstance(entry, float) and entry.is_integer():
            pages.append(int(entry))
        elif isinstance(entry, str):
            try:
                pages.append(int(entry.strip()))
            except ValueError:
                continue
    return pages


def parse_structured_output(text: str, answer_type: AnswerType) -> AnswerRecord:
    """Parse a chat reply into record fields; raise on unusable replies."""
    obj = extract_json_object(text)
    if obj is None:
        raise StructuredOutputError("no JSON object found in reply")
    if "final_answer" not in obj:
        raise StructuredOutputError("reply JSON lacks final_answer")
    final = coerce_final_answer(obj["final_answer"], answer_type)
    return AnswerRecord(
        step_by_step_analysis=str(obj.get("step_by_step_analysis", "")),
        reasoning_summary=str(obj.get("reasoning_summary", "")),
        relevant_pages=_coerce_pages(obj.get("relevant_pages", [])),
        final_answer=final,
        raw_response=text,
    )


def generate_answer(query: str, context, answer_type: AnswerType, chat) -> AnswerRecord:
    """One chat call, one repair retry on parse failure, sentinel fallback."""
    prompt = build_prompt(query, context, answer_type).render()
    reply = chat.chat(prompt, expect_json=True)
    try:
        record = parse_structured_output(reply, answer_type)
    except StructuredOutputError:
        repair = prompt + "\n\nReturn valid JSON only."
        reply = chat.chat(repair, expect_json=True)
        try:
            record = parse_structured_output(reply, answer_type)
        except StructuredOutputError as exc:
            logger.warning("structured output unusable after repair retry: %s", exc)
            return AnswerRecord(
                step_by_step_analysis="",
                reasoning_summary="",
                relevant_pages=[],
                final_answer=NOT_ANSWERABLE,
                raw_response=reply,
            )
    context_pages = {page_no for page_no, _ in context.pages}
    stray = [p for p in record.relevant_pages if p not in context_pages]
    if stray:
        logger.warning("answer cites pages outside the retrieved context: %s", stray)
    return record
