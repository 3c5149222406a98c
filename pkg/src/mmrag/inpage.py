"""Flattened in-page index: overlapping per-page chunks plus top-K search.

Each page's text is split into fixed-size token windows (default 300
tokens, 50-token overlap), embedded, and kept with a pointer back to its
source page so chunk hits can be lifted to full pages later.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .docmodel import ParsedDocument, page_text, require_valid
from .errors import ConfigurationError, IndexArtifactError
from .providers import EmbeddingVector, cosine

INPAGE_FORMAT_VERSION = "mmrag-in/1"
DEFAULT_CHUNK_SIZE = 300
DEFAULT_OVERLAP = 50


def tokenize(text: str) -> list[str]:
    """The artifact's token unit: whitespace-delimited words."""
    return text.split()


def chunk_page(page_text: str, chunk_size: int, overlap: int) -> list[tuple[str, tuple[int, int]]]:
    """Split one page's token stream into overlapping windows.

    Windows start at multiples of stride = chunk_size - overlap and stop
    as soon as one reaches the end of the page, so every token is covered
    and consecutive full windows overlap by exactly `overlap` tokens.
    """
    if chunk_size <= overlap or overlap < 0:
        raise ConfigurationError(f"need chunk_size > overlap >= 0, got ({chunk_size}, {overlap})")
    tokens = tokenize(page_text)
    n = len(tokens)
    if n == 0:
        return []
    stride = chunk_size - overlap
    chunks = []
    start = 0
    while True:
        end = min(start + chunk_size, n)
        chunks.append((" ".join(tokens[start:end]), (start, end)))
        if end >= n:
            return chunks
        start += stride


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    page_no: int
    ordinal: int
    text: str
    token_span: tuple[int, int]
    vector: EmbeddingVector


@dataclass
class InPageIndex:
    doc_id: str
    chunks: list[Chunk]
    dim: int
    chunk_size: int = DEFAULT_CHUNK_SIZE
    overlap: int = DEFAULT_OVERLAP


def build_inpage_index(
    doc: ParsedDocument,
    embedder,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> InPageIndex:
    require_valid(doc)
    pending: list[tuple[int, int, str, tuple[int, int]]] = []
    for page in doc.pages:
        pieces = chunk_page(page_text(page), chunk_size, overlap)
        for ordinal, (text, span) in enumerate(pieces):
            pending.append((page.page_no, ordinal, text, span))

    def embed_one(item):
        page_no, ordinal, text, span = item
        try:
            vector = embedder.embed([text])[0]
        except Exception as exc:
            raise IndexArtifactError(f"embedding failed for chunk {_chunk_id(doc.doc_id, page_no, ordinal)}: {exc}") from exc
        return Chunk(
            chunk_id=_chunk_id(doc.doc_id, page_no, ordinal),
            page_no=page_no,
            ordinal=ordinal,
            text=text,
            token_span=span,
            vector=vector,
        )

    if pending:
        with ThreadPoolExecutor(max_workers=8) as pool:
            chunks = list(pool.map(embed_one, pending))
    else:
        chunks = []

    dim = chunks[0].vector.dim if chunks else getattr(embedder, "dim", 0)
    for c in chunks:
        if c.vector.dim != dim:
            raise IndexArtifactError(f"chunk {c.chunk_id} has dim {c.vector.dim}, index dim is {dim}")
    return InPageIndex(doc_id=doc.doc_id, chunks=chunks, dim=dim, chunk_size=chunk_size, overlap=overlap)


def _chunk_id(doc_id: str, page_no: int, ordinal: int) -> str:
    return f"{doc_id}:p{page_no:04d}:c{ordinal:03d}"


def topk_chunks(index: InPageIndex, query_vector: EmbeddingVector, k: int) -> list[tuple[Chunk, float]]:
    """Exact cosine top-K over all chunks; ties break by (page_no, ordinal)."""
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    if index.chunks and query_vector.dim != index.dim:
        raise ConfigurationError(f"query dim {query_vector.dim} does not match index dim {index.dim}")
    q = query_vector.as_array()
    scored = [(chunk, cosine(chunk.vector.as_array(), q)) for chunk in index.chunks]
    scored.sort(key=lambda cs: (-cs[1], cs[0].page_no, cs[0].ordinal))
    return scored[:k]


# --- Persistence ------------------------------------------------------------


def _index_payload(index: InPageIndex) -> dict:
    return {
        "doc_id": index.doc_id,
        "dim": index.dim,
        "chunk_size": index.chunk_size,
        "overlap": index.overlap,
        "chunks": [
            {
                "chunk_id": c.chunk_id,
                "page_no": c.page_no,
                "ordinal": c.ordinal,
                "text": c.text,
                "token_span": list(c.token_span),
                "vector": list(c.vector.values),
            }
            for c in index.chunks
        ],
    }


def _payload_checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_inpage_index(index: InPageIndex, path: str | os.PathLike) -> None:
    payload = _index_payload(index)
    doc = {"version": INPAGE_FORMAT_VERSION, "checksum": _payload_checksum(payload), **payload}
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def load_inpage_index(path: str | os.PathLike) -> InPageIndex:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("version") != INPAGE_FORMAT_VERSION:
        raise IndexArtifactError(f"unsupported in-page index version {data.get('version')!r}")
    stored_checksum = data.pop("checksum", None)
    data.pop("version", None)
    if stored_checksum != _payload_checksum(data):
        raise IndexArtifactError(f"in-page index checksum mismatch in {path}")
    chunks = [
        Chunk(
            chunk_id=c["chunk_id"],
            page_no=c["page_no"],
            ordinal=c["ordinal"],
            text=c["text"],
            token_span=tuple(c["token_span"]),
            vector=EmbeddingVector(values=tuple(c["vector"])),
        )
        for c in data["chunks"]
    ]
    dim = data["dim"]
    for c in chunks:
        if c.vector.dim != dim:
            raise IndexArtifactError(f"chunk {c.chunk_id} dim {c.vector.dim} != index dim {dim}")
    return InPageIndex(
        doc_id=data["doc_id"],
        chunks=chunks,
        dim=dim,
        chunk_size=data["chunk_size"],
        overlap=data["overlap"],
    )
