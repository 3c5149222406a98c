"""Shared fixtures: documents, the 5-page multi-modal corpus, providers."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from mmrag.docmodel import (
    Page,
    ParsedDocument,
    SegmentKind,
    TextSegment,
    VisualAsset,
    document_to_dict,
    load_document,
)
from mmrag.providers import MockChat, MockEmbedder, MockVision, ProviderSet


def seg(text: str, kind: SegmentKind = SegmentKind.PURE_TEXT, linked: str | None = None) -> TextSegment:
    return TextSegment(kind=kind, text=text, linked_asset=linked)


def simple_doc(doc_id: str = "doc", page_texts: list[str] | None = None) -> ParsedDocument:
    page_texts = page_texts if page_texts is not None else ["alpha beta", "gamma delta"]
    pages = tuple(
        Page(page_no=i + 1, segments=(seg(text),) if text else ())
        for i, text in enumerate(page_texts)
    )
    return ParsedDocument(doc_id=doc_id, pages=pages)


# The cross-page scenario: the concrete value lives in a table on page 2,
# the instruction explaining how to use it on page 4, and a chart asset on
# page 2 carries extra visual context. Pages 1/3/5 are off-topic filler.
HOTLINE_QUERY = "which support hotline number should customers in norway call for warranty service"

_FILLER_1 = (
    "ferns and mosses thrive in damp shaded woodland soil. spores drift on the wind and settle "
    "between rocks. gardeners prize the feathered fronds for their texture in border plantings."
)
_TABLE_TEXT = (
    "country | support hotline\n"
    "denmark | 800 100 200\n"
    "norway | 800 555 0199\n"
    "sweden | 800 300 400"
)
_TABLE_CAPTION = "support hotline numbers for customers in each nordic country"
_FILLER_3 = (
    "slow braising renders the onions sweet and translucent. a heavy pot keeps the stew at a "
    "gentle simmer while the crust of bread toasts beside the fire."
)
_EXPLAIN_4 = (
    "warranty claims: to obtain warranty service customers should call the support hotline "
    "number listed for their country in the support table of this guide."
)
_FILLER_5 = (
    "the comet brightened as it crossed perihelion and observers with small telescopes traced "
    "its dust tail across the northern sky for several weeks."
)


def build_hotline_doc(base_dir: Path, with_description: bool = True) -> ParsedDocument:
    """Write the 5-page fixture document and its image beside `base_dir`."""
    images = base_dir / "images"
    images.mkdir(parents=True, exist_ok=True)
    (images / "chart-p2.bin").write_bytes(b"img-p2-chart")

    chart = VisualAsset(
        asset_id="img-p2-chart", page_no=2, image_ref="images/chart-p2.bin", media_type="image/png"
    )
    page2_segments = [
        seg(_TABLE_CAPTION),
        seg(_TABLE_TEXT, kind=SegmentKind.TABLE),
    ]
    if with_description:
        page2_segments.append(
            seg(
                "bar chart comparing call volume for each country support hotline",
                kind=SegmentKind.IMAGE_DESCRIPTION,
                linked="img-p2-chart",
            )
        )
    doc = ParsedDocument(
        doc_id="hotline",
        title="service guide",
        pages=(
            Page(page_no=1, segments=(seg(_FILLER_1),)),
            Page(page_no=2, segments=tuple(page2_segments), assets=(chart,)),
            Page(page_no=3, segments=(seg(_FILLER_3),)),
            Page(page_no=4, segments=(seg(_EXPLAIN_4),)),
            Page(page_no=5, segments=(seg(_FILLER_5),)),
        ),
    )
    path = base_dir / "hotline.json"
    path.write_text(json.dumps(document_to_dict(doc), sort_keys=True, indent=2), encoding="utf-8")
    return load_document(path)


@pytest.fixture
def hotline_doc(tmp_path: Path) -> ParsedDocument:
    return build_hotline_doc(tmp_path)


@pytest.fixture
def mock_providers() -> ProviderSet:
    return ProviderSet.mocks(seed=7)


@pytest.fixture
def embedder() -> MockEmbedder:
    return MockEmbedder(seed=7)


@pytest.fixture
def chat() -> MockChat:
    return MockChat(seed=7)


@pytest.fixture
def vision() -> MockVision:
    return MockVision(seed=7)
