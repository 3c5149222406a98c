"""Multi-granularity retrieval: parent pages, re-ranking, visual evidence,
and cross-page summaries assembled into one context bundle.

Chunk hits are lifted to their parent pages (the page is the unit that
carries a question's text, tables, and images together), optionally
re-ranked pointwise by the chat provider, then joined by vision-extracted
evidence from the surviving pages and by collapsed-tree summary hits.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum

from . import prompts
from .crosspage import SummaryTree, node_id, topk_nodes
from .docmodel import ParsedDocument, asset_bytes, find_page, page_text
from .errors import ConfigurationError, ProviderError
from .inpage import Chunk, InPageIndex, topk_chunks
from .jsonextract import extract_json_object
from .providers import ProviderSet

logger = logging.getLogger(__name__)

TRACE_FORMAT_VERSION = "mmrag-trace/1"


@dataclass(frozen=True)
class RetrievalConfig:
    chunk_top_k: int = 20
    final_pages: int = 10
    final_summaries: int = 10
    rerank_enabled: bool = True
    visual_enabled: bool = True
    summary_enabled: bool = True
    parent_page_enabled: bool = True

    def validate(self) -> None:
        for name in ("chunk_top_k", "final_pages", "final_summaries"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")


class RankBasis(str, Enum):
    EMBEDDING = "Embedding"
    LLM_RERANK = "LlmRerank"


@dataclass
class ScoredPage:
    page_no: int
    embed_score: float
    llm_score: float | None = None
    rank_basis: RankBasis = RankBasis.EMBEDDING

    def effective_score(self) -> float:
        return self.llm_score if self.llm_score is not None else self.embed_score


@dataclass(frozen=True)
class VisualEvidence:
    asset_id: str
    page_no: int
    evidence: str


@dataclass(frozen=True)
class SummaryHit:
    node_id: str
    text: str
    source_pages: frozenset[int]
    score: float


@dataclass
class RetrievalContext:
    pages: list[tuple[int, str]] = field(default_factory=list)
    visual_evidence: list[VisualEvidence] = field(default_factory=list)
    summaries: list[SummaryHit] = field(default_factory=list)
    trace: dict = field(default_factory=dict)


def parent_pages(scored_chunks: list[tuple[Chunk, float]]) -> list[ScoredPage]:
    """Lift chunk hits to distinct pages, keeping each page's best score."""
    best: dict[int, float] = {}
    for chunk, score in scored_chunks:
        if chunk.page_no not in best or score > best[chunk.page_no]:
            best[chunk.page_no] = score
    pages = [ScoredPage(page_no=p, embed_score=s) for p, s in best.items()]
    pages.sort(key=lambda sp: (-sp.embed_score, sp.page_no))
    return pages


def rerank_pages(
    query: str,
    pages: list[tuple[int, str]],
    chat,
    final_pages: int,
    embed_scores: dict[int, float] | None = None,
) -> list[ScoredPage]:
    """Pointwise LLM scoring of each candidate page, one chat call apiece.

    A page whose reply cannot be parsed (after one retry) falls back to
    its embedding score. The kept pages are the top `final_pages` by
    (llm score desc, embed score desc, page number asc), where a fallback
    page competes with its embedding score.
    """
    if not pages:
        raise ValueError("rerank_pages requires at least one page")
    embed_scores = embed_scores or {}

    def score_one(item: tuple[int, str]) -> ScoredPage:
        page_no, text = item
        base = ScoredPage(page_no=page_no, embed_score=embed_scores.get(page_no, 0.0))
        prompt = prompts.build_rerank_prompt(query, text)
        for _ in range(2):
            reply = chat.chat(prompt, expect_json=True)
            obj = extract_json_object(reply)
            if obj is not None and isinstance(obj.get("relevance_score"), (int, float)):
                base.llm_score = min(1.0, max(0.0, float(obj["relevance_score"])))
                base.rank_basis = RankBasis.LLM_RERANK
                return base
        logger.warning("rerank reply unparsable for page %d; using embedding score", page_no)
        return base

    scored: list[ScoredPage] = []
    failure: ProviderError | None = None
    with ThreadPoolExecutor(max_workers=4) as pool:
        futures = {pool.submit(score_one, item): item[0] for item in pages}
        for future in as_completed(futures):
            try:
                scored.append(future.result())
            except ProviderError as exc:
                failure = exc
    if failure is not None:
        partial = {sp.page_no: sp.llm_score for sp in sorted(scored, key=lambda sp: sp.page_no)}
        raise ProviderError(
            f"re-ranking aborted, partial scores {partial}: {failure}",
            attempts=getattr(failure, "attempts", 1),
        ) from failure

    scored.sort(key=lambda sp: (-sp.effective_score(), -sp.embed_score, sp.page_no))
    return scored[:final_pages]


def visual_evidence(
    query: str,
    pages: list[int],
    doc: ParsedDocument,
    vision,
    trace: dict | None = None,
) -> list[VisualEvidence]:
    """Query the vision provider for every asset on the retrieved pages.

    Replies equal to the NO_EVIDENCE sentinel are dropped; per-asset
    provider failures skip the asset and are recorded in the trace.
    """
    instruction = prompts.visual_evidence_instruction(query)
    tasks = []
    for page_no in pages:
        page = find_page(doc, page_no)
        for asset in page.assets:
            tasks.append(asset)

    skipped: list[str] = []
    dropped: list[str] = []

    def extract(asset) -> VisualEvidence | None:
        try:
            data = asset_bytes(doc, asset)
            reply = vision.describe_image(data, instruction, media_type=asset.media_type)
        except Exception as exc:
            logger.warning("visual evidence failed for asset %s: %s", asset.asset_id, exc)
            skipped.append(asset.asset_id)
            return None
        if reply.strip() == prompts.NO_EVIDENCE:
            dropped.append(asset.asset_id)
            return None
        return VisualEvidence(asset_id=asset.asset_id, page_no=asset.page_no, evidence=reply)

    results: list[VisualEvidence] = []
    if tasks:
        with ThreadPoolExecutor(max_workers=4) as pool:
            results = [ev for ev in pool.map(extract, tasks) if ev is not None]
    if trace is not None:
        trace["visual"] = {
            "queried": [a.asset_id for a in tasks],
            "skipped": skipped,
            "no_evidence": dropped,
        }
    return results


def retrieve(
    query: str,
    in_index: InPageIndex,
    tree: SummaryTree,
    doc: ParsedDocument,
    providers: ProviderSet,
    config: RetrievalConfig,
) -> RetrievalContext:
    """Run the enabled retrieval stages and assemble the context bundle."""
    config.validate()
    if in_index.doc_id != doc.doc_id:
        raise ConfigurationError(f"in-page index is for {in_index.doc_id!r}, document is {doc.doc_id!r}")
    if tree.doc_id and tree.doc_id != doc.doc_id:
        raise ConfigurationError(f"summary tree is for {tree.doc_id!r}, document is {doc.doc_id!r}")

    trace: dict = {"version": TRACE_FORMAT_VERSION, "query": query}
    query_vector = providers.embedder.embed([query])[0]

    context = RetrievalContext(trace=trace)

    if config.parent_page_enabled:
        chunk_hits = topk_chunks(in_index, query_vector, config.chunk_top_k)
        trace["chunks"] = [
            {"chunk_id": c.chunk_id, "page_no": c.page_no, "score": s} for c, s in chunk_hits
        ]
        candidates = parent_pages(chunk_hits)
        trace["parent_pages"] = [
            {"page_no": sp.page_no, "embed_score": sp.embed_score} for sp in candidates
        ]
        texts = {sp.page_no: page_text(find_page(doc, sp.page_no)) for sp in candidates}
        if config.rerank_enabled:
            final = rerank_pages(
                query,
                [(sp.page_no, texts[sp.page_no]) for sp in candidates],
                providers.chat,
                config.final_pages,
                embed_scores={sp.page_no: sp.embed_score for sp in candidates},
            )
        else:
            final = candidates[: config.final_pages]
        trace["final_pages"] = [
            {
                "page_no": sp.page_no,
                "embed_score": sp.embed_score,
                "llm_score": sp.llm_score,
                "rank_basis": sp.rank_basis.value,
            }
            for sp in final
        ]
        context.pages = [(sp.page_no, texts[sp.page_no]) for sp in final]

        if config.visual_enabled:
            context.visual_evidence = visual_evidence(
                query, [sp.page_no for sp in final], doc, providers.vision, trace=trace
            )

    if config.summary_enabled:
        node_hits = topk_nodes(tree, query_vector, config.final_summaries)
        trace["summaries"] = [
            {"id": node_id(n), "layer": n.layer, "score": s} for n, s in node_hits
        ]
        context.summaries = [
            SummaryHit(node_id=node_id(n), text=n.text, source_pages=frozenset(n.source_pages), score=s)
            for n, s in node_hits
        ]

    return context
