"""Prompt templates for answer generation, re-ranking, summarization, vision.

These strings are part of the engine's behavior contract: tests assert on
their exact content, and the deterministic mock providers recognize prompt
families by their opening lines (see `providers`). Edit with care.
"""

from __future__ import annotations

import json

# --- Answer generation ----------------------------------------------------

ANSWER_TEMPLATE = "Here is the context:{context} Here is the question:{question}"

ANSWER_GUIDELINES = """\
You are a RAG (Retrieval-Augmented Generation) answering system.
Your task is to answer the given question based only on information from the pdf report, which is uploaded in the format of relevant evidences extracted using RAG.

Before giving a final answer, carefully think out loud and step by step. Pay special attention to the wording of the question.
- Keep in mind that the content containing the answer may be worded differently than the question.
- The question was autogenerated from a template, so it may be meaningless or not applicable to the given report."""

STEP_BY_STEP_FORMAT = (
    "step_by_step_analysis: Detailed step-by-step analysis of the answer with at least 5 steps "
    "and at least 150 words. Pay special attention to the wording of the question to avoid being tricked."
)

REASONING_SUMMARY_FORMAT = (
    "reasoning_summary: Concise summary of the step-by-step reasoning process. Around 50 words."
)

RELEVANT_PAGES_FORMAT = """\
relevant_pages: List of page numbers containing information directly used to answer the question. Include only:
- Pages with direct answers or explicit statements.
- Pages with key information that strongly supports the answer.
Do not include pages with only tangentially related information or weak connections to the answer. At least one page should be included in the list."""

FINAL_ANSWER_FORMATS = {
    "List": """\
final_answer: A list of values extracted from the context. Each value should be:
- For strings: exactly as it appears in the context
- For numbers: converted to appropriate type (int or float)
- For nested lists: maintain the original structure
- Return 'Not answerable' if information is not available in the context""",
    "Integer": """\
final_answer: An integer value is expected as the answer.
- Pay attention to units (thousands, millions, etc.) and adjust accordingly
- Round to nearest integer if necessary
- Return 'Not answerable' if:
  - The value is not an integer
  - Information is not available
  - Currency mismatch occurs""",
    "String": """\
final_answer: A string value is expected as the answer.
- Extract exactly as it appears in the context
- Do not modify or summarize the text
- Return 'Not answerable' if information is not available in the context""",
    "Float": """\
final_answer: A floating-point number is expected as the answer.
- Maintain original decimal precision from the context
- Pay attention to units (thousands, millions, etc.) and adjust accordingly
- Return 'Not answerable' if:
  - The value is not a number
  - Information is not available
  - Currency mismatch occurs""",
}

JSON_OUTPUT_INSTRUCTION = (
    "Respond with a single JSON object with exactly these keys: "
    '"step_by_step_analysis", "reasoning_summary", "relevant_pages", "final_answer".'
)


def _example(question: str, analysis: str, summary: str, pages: list[int], final) -> str:
    answer = json.dumps(
        {
            "step_by_step_analysis": analysis,
            "reasoning_summary": summary,
            "relevant_pages": pages,
            "final_answer": final,
        },
        indent=2,
    )
    return f"Question:\n{question}\nAnswer:\n{answer}"


ANSWER_EXAMPLES = {
    "List": _example(
        "What are the quarterly revenue figures for Apple Inc. in 2022?",
        "1. The question asks for quarterly revenue figures for Apple Inc. in 2022, which implies "
        "we need to find four distinct values corresponding to each quarter. 2. Examining the "
        "context, we find a table titled 'Quarterly Financial Results' on page 45 that lists "
        "revenue figures for each quarter of 2022. 3. The table shows: Q1(123.9B), Q2(97.3B), "
        "Q3(82.96B), Q4(90.15B). 4. We verify these are indeed revenue figures by checking the "
        "column header and accompanying notes. 5. The values are extracted exactly as presented, "
        "converted to float type for consistency.",
        "The 'Quarterly Financial Results' table on page 45 provides the exact quarterly revenue "
        "figures for 2022, which are extracted and converted to float values.",
        [45],
        [123.9, 97.3, 82.96, 90.15],
    ),
    "Integer": _example(
        "How many employees did Tesla Inc have at the end of 2022?",
        "1. The question asks for the number of Tesla Inc. employees at the end of 2022, which "
        "should be a whole number. 2. On page 56 of the annual report, we find the statement: "
        "'As of December 31, 2022, we employed approximately 127,855 full-time employees "
        "worldwide.' 3. The number 127,855 is explicitly stated as the employee count. 4. We "
        "verify this is a global total by checking the context which mentions 'worldwide'. "
        "5. No unit conversion is needed as this is already a direct count.",
        "Page 56 explicitly states Tesla employed 127,855 full-time employees worldwide as of "
        "December 31, 2022.",
        [56],
        127855,
    ),
    "String": _example(
        "What's the percentage of people who are democrats and voted in the last election "
        "compared to the entire population in 2024?",
        "1. Question requires two precise data points: democrat voters and total population "
        "2. Searched for '2024 election' references - none found 3. Checked all demographic "
        "sections - no voting breakdown by party 4. Verified document metadata - report finalized "
        "Q3 2023 (pre-election) 5. Attempted alternative queries - no matching tables/charts "
        "6. Conclusion: Data unavailable in this report",
        "Document contains no 2024 election data (pre-dates election) and lacks democrat-specific "
        "voting percentages, making question unanswerable.",
        [],
        "Not Answerable",
    ),
    "Float": _example(
        "What was the gross profit margin percentage for NVIDIA Corporation in Q3 2022?",
        "1. The question asks for NVIDIA's gross profit margin percentage in Q3 2022, which "
        "should be a decimal number. 2. On page 32 of the quarterly report, we find the "
        "statement: 'Gross margin for the quarter was 53.6%, down from 56.1% in the prior "
        "quarter.' 3. The value 53.6% is explicitly stated as the gross margin for the quarter. "
        "4. We verify this is for Q3 2022 by checking the report header and date. 5. The "
        "percentage is converted to its decimal equivalent (53.6).",
        "Page 32 states NVIDIA's Q3 2022 gross margin was 53.6%, which is converted to the "
        "decimal value 53.6.",
        [32],
        53.6,
    ),
}

# --- LLM-based page re-ranking ---------------------------------------------

RERANK_TEMPLATE = "Here is the query: {query}  Here is the retrieved text block: {retrieved_page}"

RERANK_GUIDELINES = """\
You are a RAG (Retrieval-Augmented Generation) retrievals ranker. You will receive a query and retrieved text block related to that query. Your task is to evaluate and score the block based on its relevance to the query provided.

Instructions:

1. Reasoning:
   Analyze the block by identifying key information and how it relates to the query. Consider whether the block provides direct answers, partial insights, or background context relevant to the query. Explain your reasoning in a few sentences, referencing specific elements of the block to justify your evaluation. Avoid assumptions - focus solely on the content provided.

2. Relevance Score (0 to 1, in increments of 0.1):
   0 = Completely Irrelevant: The block has no connection or relation to the query.
   0.1 = Virtually Irrelevant: Only a very slight or vague connection to the query.
   0.2 = Very Slightly Relevant: Contains an extremely minimal or tangential connection.
   0.3 = Slightly Relevant: Addresses a very small aspect of the query but lacks substantive detail.
   0.4 = Somewhat Relevant: Contains partial information that is somewhat related but not comprehensive.
   0.5 = Moderately Relevant: Addresses the query but with limited or partial relevance.
   0.6 = Fairly Relevant: Provides relevant information, though lacking depth or specificity.
   0.7 = Relevant: Clearly relates to the query, offering substantive but not fully comprehensive information.
   0.8 = Very Relevant: Strongly relates to the query and provides significant information.
   0.9 = Highly Relevant: Almost completely answers the query with detailed and specific information.
   1 = Perfectly Relevant: Directly and comprehensively answers the query with all the necessary specific information.

3. Additional Guidance:
   - Objectivity: Evaluate block based only on their content relative to the query.
   - Clarity: Be clear and concise in your justifications.
   - No assumptions: Do not infer information beyond what's explicitly stated in the block.

Respond with a single JSON object with keys "reasoning" and "relevance_score"."""


def build_rerank_prompt(query: str, page_text: str) -> str:
    filled = RERANK_TEMPLATE.replace("{query}", query).replace("{retrieved_page}", page_text)
    return f"{RERANK_GUIDELINES}\n\n{filled}"


# --- Summarization and vision ----------------------------------------------

SUMMARIZE_PREFIX = (
    "Write a concise summary of the following passages, preserving entities, numbers, and claims:"
)


def build_summary_prompt(member_texts: list[str]) -> str:
    passages = "\n\n".join(member_texts)
    return f"{SUMMARIZE_PREFIX}\n\n{passages}"


DESCRIBE_IMAGE_INSTRUCTION = "Describe this image, chart, or table in detail for retrieval."

NO_EVIDENCE = "NO_EVIDENCE"


def visual_evidence_instruction(query: str) -> str:
    return f"Extract any evidence from this image relevant to: {query}. If none, reply {NO_EVIDENCE}."
