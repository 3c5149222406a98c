"""Canonical parsed-document model and its textual/visual corpus views.

A document is a page-ordered list of typed text segments plus raw visual
assets. Everything downstream (chunking, indexing, retrieval) consumes
documents through `textual_corpus` / `visual_corpus` / `page_text`, so this
module is the single place that defines what "the text of a page" means.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import DocumentValidationError

DOCUMENT_FORMAT_VERSION = "mmdoc/1"


class SegmentKind(str, Enum):
    PURE_TEXT = "PureText"
    TABLE = "Table"
    LAYOUT_TEXT = "LayoutText"
    IMAGE_DESCRIPTION = "ImageDescription"


@dataclass(frozen=True)
class TextSegment:
    kind: SegmentKind
    text: str
    linked_asset: str | None = None


@dataclass(frozen=True)
class VisualAsset:
    asset_id: str
    page_no: int
    image_ref: str
    media_type: str


@dataclass(frozen=True)
class Page:
    page_no: int
    segments: tuple[TextSegment, ...] = ()
    assets: tuple[VisualAsset, ...] = ()


@dataclass(frozen=True)
class ParsedDocument:
    doc_id: str
    pages: tuple[Page, ...] = ()
    title: str | None = None
    source_path: str | None = None


@dataclass(frozen=True)
class Violation:
    """One invariant violation: where it is and what is wrong."""

    path: str
    message: str
    page_no: int | None = None

    def __str__(self) -> str:
        where = f"page {self.page_no}, " if self.page_no is not None else ""
        return f"{where}{self.path}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, path: str, message: str, page_no: int | None = None) -> None:
        self.violations.append(Violation(path=path, message=message, page_no=page_no))


def validate_document(doc: ParsedDocument) -> ValidationReport:
    """Check every document invariant; an empty report means valid.

    Violations are data, not exceptions: callers that require validity
    (e.g. `textual_corpus`) convert a non-empty report into an error.
    """
    report = ValidationReport()

    if not doc.doc_id:
        report.add("doc_id", "doc_id must be non-empty")

    seen_pages: set[int] = set()
    prev = 0
    for page in doc.pages:
        if page.page_no < 1:
            report.add("pages.page_no", f"page number {page.page_no} is not positive", page.page_no)
            continue
        if page.page_no in seen_pages:
            report.add("pages.page_no", f"duplicate page {page.page_no}", page.page_no)
        seen_pages.add(page.page_no)
        if page.page_no != prev + 1:
            report.add("pages.page_no", f"page gap after {prev}", page.page_no)
        prev = page.page_no

    asset_ids: set[str] = set()
    for page in doc.pages:
        page_asset_ids = {a.asset_id for a in page.assets}
        for asset in page.assets:
            if asset.asset_id in asset_ids:
                report.add(f"assets[{asset.asset_id}]", f"duplicate asset_id {asset.asset_id!r}", page.page_no)
            asset_ids.add(asset.asset_id)
            if asset.page_no != page.page_no:
                report.add(
                    f"assets[{asset.asset_id}].page_no",
                    f"asset page_no {asset.page_no} disagrees with containing page {page.page_no}",
                    page.page_no,
                )
        for i, seg in enumerate(page.segments):
            if not seg.text:
                report.add(f"segments[{i}].text", "segment text must be non-empty", page.page_no)
            if seg.kind is SegmentKind.IMAGE_DESCRIPTION:
                if not seg.linked_asset:
                    report.add(f"segments[{i}].linked_asset", "ImageDescription requires linked_asset", page.page_no)
                elif seg.linked_asset not in page_asset_ids:
                    report.add(
                        f"segments[{i}].linked_asset",
                        f"linked_asset {seg.linked_asset!r} does not resolve to an asset on this page",
                        page.page_no,
                    )

    return report


def require_valid(doc: ParsedDocument) -> None:
    report = validate_document(doc)
    if not report.ok:
        raise DocumentValidationError(report.violations)


def textual_corpus(doc: ParsedDocument) -> list[tuple[int, TextSegment]]:
    """All text segments (all four kinds) in page order then segment order."""
    require_valid(doc)
    return [(page.page_no, seg) for page in doc.pages for seg in page.segments]


def visual_corpus(doc: ParsedDocument) -> list[VisualAsset]:
    """All raw visual assets, page order preserved."""
    require_valid(doc)
    return [asset for page in doc.pages for asset in page.assets]


def page_text(page: Page) -> str:
    """Canonical flat text of one page: the chunking and re-ranking unit.

    Segments are joined by newlines in original order, except that image
    descriptions sort after the other kinds so they sit next to (not
    interleaved with) the page's textual content.
    """
    textual = [s.text for s in page.segments if s.kind is not SegmentKind.IMAGE_DESCRIPTION]
    described = [s.text for s in page.segments if s.kind is SegmentKind.IMAGE_DESCRIPTION]
    return "\n".join(textual + described)


def find_page(doc: ParsedDocument, page_no: int) -> Page:
    for page in doc.pages:
        if page.page_no == page_no:
            return page
    raise KeyError(f"document {doc.doc_id!r} has no page {page_no}")


def asset_bytes(doc: ParsedDocument, asset: VisualAsset) -> bytes:
    """Read an asset's raw bytes; relative refs resolve beside the doc JSON."""
    ref = Path(asset.image_ref)
    if not ref.is_absolute() and doc.source_path:
        ref = Path(doc.source_path).parent / ref
    return ref.read_bytes()


# --- JSON interchange (version "mmdoc/1") --------------------------------


def document_to_dict(doc: ParsedDocument) -> dict:
    return {
        "version": DOCUMENT_FORMAT_VERSION,
        "doc_id": doc.doc_id,
        "title": doc.title,
        "pages": [
            {
                "page_no": page.page_no,
                "segments": [
                    {"kind": seg.kind.value, "text": seg.text, "linked_asset": seg.linked_asset}
                    for seg in page.segments
                ],
                "assets": [
                    {
                        "asset_id": a.asset_id,
                        "page_no": a.page_no,
                        "image_ref": a.image_ref,
                        "media_type": a.media_type,
                    }
                    for a in page.assets
                ],
            }
            for page in doc.pages
        ],
    }


def document_from_dict(data: dict, source_path: str | None = None) -> ParsedDocument:
    version = data.get("version")
    if version != DOCUMENT_FORMAT_VERSION:
        raise ValueError(f"unsupported document version {version!r}, expected {DOCUMENT_FORMAT_VERSION!r}")
    pages = []
    for p in data.get("pages", []):
        segments = tuple(
            TextSegment(kind=SegmentKind(s["kind"]), text=s["text"], linked_asset=s.get("linked_asset"))
            for s in p.get("segments", [])
        )
        assets = tuple(
            VisualAsset(
                asset_id=a["asset_id"],
                page_no=a["page_no"],
                image_ref=a["image_ref"],
                media_type=a["media_type"],
            )
            for a in p.get("assets", [])
        )
        pages.append(Page(page_no=p["page_no"], segments=segments, assets=assets))
    return ParsedDocument(
        doc_id=data["doc_id"],
        title=data.get("title"),
        pages=tuple(pages),
        source_path=source_path,
    )


def save_document(doc: ParsedDocument, path: str | os.PathLike) -> None:
    """Write the document JSON atomically (tmp file + rename)."""
    path = Path(path)
    payload = json.dumps(document_to_dict(doc), indent=2, sort_keys=True) + "\n"
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(payload, encoding="utf-8")
    os.replace(tmp, path)


def load_document(path: str | os.PathLike) -> ParsedDocument:
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    return document_from_dict(data, source_path=str(path))
