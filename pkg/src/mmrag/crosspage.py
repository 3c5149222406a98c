"""Topological cross-page index: clustered, summarized, re-embedded blocks.

The whole document's text is partitioned into small blocks (default 100
tokens). Layer by layer, block/node embeddings are PCA-reduced, clustered
with a diagonal-covariance Gaussian mixture (EM, k-means++ init, BIC model
selection), each cluster is summarized by the chat provider, and the
summaries are re-embedded to form the next layer. Retrieval scores the
collapsed tree: blocks and summary nodes at every layer compete in one
candidate pool.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .docmodel import TextSegment
from .errors import ConfigurationError, IndexArtifactError, MMRagError
from .prompts import build_summary_prompt
from .providers import EmbeddingVector, cosine

TREE_FORMAT_VERSION = "mmrag-tree/1"
DEFAULT_BLOCK_SIZE = 100


@dataclass(frozen=True)
class TreeConfig:
    block_size: int = DEFAULT_BLOCK_SIZE
    k_max: int = 8
    pca_dim: int = 10
    max_layers: int = 5
    em_iters: int = 100
    em_tol: float = 1e-4
    variance_floor: float = 1e-6
    seed: int = 0

    def validate(self) -> None:
        if self.k_max < 1:
            raise ConfigurationError("k_max must be >= 1")
        if self.pca_dim < 2:
            raise ConfigurationError("pca_dim must be >= 2")
        if self.block_size < 1:
            raise ConfigurationError("block_size must be >= 1")
        if self.max_layers < 1:
            raise ConfigurationError("max_layers must be >= 1")


@dataclass(frozen=True)
class Block:
    block_id: str
    text: str
    source_pages: frozenset[int]
    layer: int = 0
    vector: EmbeddingVector | None = None


@dataclass(frozen=True)
class SummaryNode:
    node_id: str
    layer: int
    text: str
    children: tuple[str, ...]
    source_pages: frozenset[int]
    vector: EmbeddingVector | None = None


@dataclass
class SummaryTree:
    doc_id: str
    layers: list[list]  # layers[0]: list[Block]; layers[l>=1]: list[SummaryNode]
    config: TreeConfig

    def all_nodes(self) -> list:
        return [node for layer in self.layers for node in layer]

    @property
    def root(self):
        return self.layers[-1][0]


def node_id(node) -> str:
    return node.block_id if isinstance(node, Block) else node.node_id


def chunk_document(corpus: list[tuple[int, TextSegment]], block_size: int) -> list[Block]:
    """Partition the whole document's token stream into contiguous blocks.

    Blocks do not overlap; a block whose tokens straddle a page boundary
    records every contributing page in source_pages.
    """
    if block_size < 1:
        raise ConfigurationError(f"block_size must be >= 1, got {block_size}")
    stream: list[tuple[str, int]] = []
    for page_no, segment in corpus:
        for token in segment.text.split():
            stream.append((token, page_no))
    blocks = []
    for i, start in enumerate(range(0, len(stream), block_size)):
        window = stream[start : start + block_size]
        blocks.append(
            Block(
                block_id=f"b{i:04d}",
                text=" ".join(tok for tok, _ in window),
                source_pages=frozenset(page for _, page in window),
            )
        )
    return blocks


def reduce_dims(vectors: np.ndarray, pca_dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic PCA projection to min(pca_dim, n-1, dim) dimensions.

    Exact SVD is deterministic, so `seed` is unused; the parameter stays
    for interface stability should a randomized variant ever be needed.
    Fewer than two vectors pass through unchanged.
    """
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        return x
    r = min(pca_dim, n - 1, x.shape[1])
    mean = x.mean(axis=0)
    centered = x - mean
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:r]
    # Fix the SVD sign ambiguity: largest-magnitude loading is positive.
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    return centered @ components.T


@dataclass
class GmmFit:
    assignments: list[int]
    log_likelihood: float
    trajectory: list[float] = field(default_factory=list)
    means: np.ndarray | None = None
    variances: np.ndarray | None = None
    weights: np.ndarray | None = None


def _log_gaussian_diag(points: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """log N(x | mu_k, diag(var_k)) for every (point, component) pair."""
    n, d = points.shape
    k = means.shape[0]
    out = np.empty((n, k))
    for j in range(k):
        diff = points - means[j]
        out[:, j] = -0.5 * (d * math.log(2 * math.pi) + np.log(variances[j]).sum() + (diff**2 / variances[j]).sum(axis=1))
    return out


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(
            np.stack([((points - c) ** 2).sum(axis=1) for c in centers]),
            axis=0,
        )
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(points[idx])
    return np.stack(centers)


def fit_gmm(points: np.ndarray, k: int, config: TreeConfig) -> GmmFit:
    """EM for a diagonal-covariance mixture with hard final assignment.

    Per-iteration log-likelihood is recorded in `trajectory` and is
    non-decreasing (up to float noise). Clusters left empty by the hard
    assignment are re-seeded with the lowest-likelihood points so every
    cluster is non-empty on return.
    """
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    if not 1 <= k <= n:
        raise ConfigurationError(f"need 1 <= k <= n, got k={k}, n={n}")

    rng = np.random.default_rng(config.seed)
    means = _kmeanspp_init(points, k, rng)
    global_var = np.maximum(points.var(axis=0), config.variance_floor)
    variances = np.tile(global_var, (k, 1))
    weights = np.full(k, 1.0 / k)

    trajectory: list[float] = []
    log_resp = None
    for _ in range(config.em_iters):
        # E-step under current parameters; the same pass yields the LL.
        log_prob = _log_gaussian_diag(points, means, variances) + np.log(weights)
        row_max = log_prob.max(axis=1, keepdims=True)
        log_norm = row_max[:, 0] + np.log(np.exp(log_prob - row_max).sum(axis=1))
        log_resp = log_prob - log_norm[:, None]
        ll = float(log_norm.sum())
        trajectory.append(ll)
        if len(trajectory) > 1 and abs(trajectory[-1] - trajectory[-2]) < config.em_tol:
            break

        # M-step; components with vanishing responsibility keep mean/var.
        resp = np.exp(log_resp)
        nk = resp.sum(axis=0)
        for j in range(k):
            if nk[j] >= 1e-12:
                means[j] = resp[:, j] @ points / nk[j]
                diff = points - means[j]
                variances[j] = np.maximum(resp[:, j] @ (diff**2) / nk[j], config.variance_floor)
        weights = np.maximum(nk / n, 1e-300)

    assignments = np.argmax(log_resp, axis=1)
    point_ll = _point_log_likelihood(points, means, variances, weights)
    assignments = _fill_empty_clusters(assignments, k, point_ll)

    return GmmFit(
        assignments=[int(a) for a in assignments],
        log_likelihood=trajectory[-1],
        trajectory=trajectory,
        means=means,
        variances=variances,
        weights=weights,
    )


def _point_log_likelihood(points, means, variances, weights) -> np.ndarray:
    log_prob = _log_gaussian_diag(points, means, variances) + np.log(weights)
    row_max = log_prob.max(axis=1, keepdims=True)
    return row_max[:, 0] + np.log(np.exp(log_prob - row_max).sum(axis=1))


def _fill_empty_clusters(assignments: np.ndarray, k: int, point_ll: np.ndarray) -> np.ndarray:
    """Move worst-explained points from multi-member clusters into empty ones."""
    assignments = assignments.copy()
    order = np.argsort(point_ll, kind="stable")  # lowest likelihood first
    for j in range(k):
        if (assignments == j).any():
            continue
        counts = np.bincount(assignments, minlength=k)
        for idx in order:
            if counts[assignments[idx]] >= 2:
                counts[assignments[idx]] -= 1
                assignments[idx] = j
                break
    return assignments


def bic_score(log_likelihood: float, k: int, n: int, d: int) -> float:
    """BIC for a diagonal GMM: k means + k variances per dim + k-1 weights."""
    p = k * (2 * d + 1) - 1
    return -2.0 * log_likelihood + p * math.log(n)


def select_k(points: np.ndarray, k_max: int, config: TreeConfig) -> int:
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    if n < 1:
        raise ConfigurationError("select_k requires at least one point")
    best_k, best_bic = 1, math.inf
    for k in range(1, min(k_max, n) + 1):
        fit = fit_gmm(points, k, config)
        bic = bic_score(fit.log_likelihood, k, n, d)
        if bic < best_bic:
            best_k, best_bic = k, bic
    return best_k


def summarize_cluster(member_texts: list[str], chat_provider) -> str:
    """One chat call over the cluster's members in reading order."""
    if not member_texts:
        raise ValueError("summarize_cluster requires at least one member")
    return chat_provider.chat(build_summary_prompt(member_texts))


def build_tree(blocks: list[Block], embedder, chat, config: TreeConfig, doc_id: str = "") -> "SummaryTree":
    """Stack clustering + summarization layers until a single root remains.

    Layer l clusters the embeddings of layer l-1, so every node except the
    top has exactly one parent. A layer that would not shrink is forced to
    k = max(1, ceil(n/2)); hitting max_layers forces a single root.
    """
    config.validate()
    if not blocks:
        raise MMRagError("cannot build a summary tree from zero blocks")

    unembedded = [b for b in blocks if b.vector is None]
    if unembedded:
        vectors = embedder.embed([b.text for b in unembedded])
        by_id = {b.block_id: v for b, v in zip(unembedded, vectors)}
        blocks = [b if b.vector is not None else replace(b, vector=by_id[b.block_id]) for b in blocks]

    layers: list[list] = [list(blocks)]
    current: list = layers[0]

    for layer_no in range(1, config.max_layers + 1):
        n = len(current)
        if n == 1:
            break
        points = reduce_dims(np.stack([node.vector.as_array() for node in current]), config.pca_dim, config.seed)
        if layer_no == config.max_layers:
            k = 1
        else:
            k = select_k(points, config.k_max, config)
            if k >= n:
                k = max(1, math.ceil(n / 2))
        fit = fit_gmm(points, k, config)

        members: dict[int, list[int]] = {}
        for idx, cluster in enumerate(fit.assignments):
            members.setdefault(cluster, []).append(idx)
        # Reading order: clusters sorted by their first member's position.
        ordered = sorted(members.values(), key=lambda idxs: idxs[0])

        def summarize(idxs: list[int]) -> str:
            try:
                return summarize_cluster([current[i].text for i in idxs], chat)
            except Exception as exc:
                raise MMRagError(f"summarization failed for layer {layer_no} cluster {idxs[0]}: {exc}") from exc

        with ThreadPoolExecutor(max_workers=4) as pool:
            summaries = list(pool.map(summarize, ordered))
        vectors = embedder.embed(summaries)

        next_layer = []
        for j, (idxs, summary, vector) in enumerate(zip(ordered, summaries, vectors)):
            next_layer.append(
                SummaryNode(
                    node_id=f"l{layer_no}n{j:03d}",
                    layer=layer_no,
                    text=summary,
                    children=tuple(node_id(current[i]) for i in idxs),
                    source_pages=frozenset().union(*(current[i].source_pages for i in idxs)),
                    vector=vector,
                )
            )
        layers.append(next_layer)
        current = next_layer

    return SummaryTree(doc_id=doc_id, layers=layers, config=config)


def topk_nodes(tree: SummaryTree, query_vector: EmbeddingVector, k: int):
    """Collapsed-tree retrieval: blocks and every summary layer compete.

    Ties break by (layer ascending, node id).
    """
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    q = query_vector.as_array()
    scored = [(node, cosine(node.vector.as_array(), q)) for node in tree.all_nodes()]
    scored.sort(key=lambda ns: (-ns[1], ns[0].layer, node_id(ns[0])))
    return scored[:k]


# --- Persistence ------------------------------------------------------------


def _tree_payload(tree: SummaryTree) -> dict:
    cfg = tree.config
    layers = []
    for layer in tree.layers:
        nodes = []
        for node in layer:
            entry = {
                "id": node_id(node),
                "layer": node.layer,
                "text": node.text,
                "source_pages": sorted(node.source_pages),
                "vector": list(node.vector.values),
            }
            if isinstance(node, SummaryNode):
                entry["children"] = list(node.children)
            nodes.append(entry)
        layers.append(nodes)
    return {
        "doc_id": tree.doc_id,
        "config": {
            "block_size": cfg.block_size,
            "k_max": cfg.k_max,
            "pca_dim": cfg.pca_dim,
            "max_layers": cfg.max_layers,
            "em_iters": cfg.em_iters,
            "em_tol": cfg.em_tol,
            "variance_floor": cfg.variance_floor,
            "seed": cfg.seed,
        },
        "layers": layers,
    }


def tree_to_bytes(tree: SummaryTree) -> bytes:
    return json.dumps(_tree_payload(tree), sort_keys=True, indent=1).encode("utf-8")


def save_tree(tree: SummaryTree, path: str | os.PathLike) -> None:
    payload = _tree_payload(tree)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    checksum = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    doc = {"version": TREE_FORMAT_VERSION, "checksum": checksum, **payload}
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def load_tree(path: str | os.PathLike) -> SummaryTree:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("version") != TREE_FORMAT_VERSION:
        raise IndexArtifactError(f"unsupported tree version {data.get('version')!r}")
    stored = data.pop("checksum", None)
    data.pop("version", None)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    if stored != hashlib.sha256(canonical.encode("utf-8")).hexdigest():
        raise IndexArtifactError(f"tree checksum mismatch in {path}")
    cfg = TreeConfig(**data["config"])
    layers: list[list] = []
    for layer_no, layer in enumerate(data["layers"]):
        nodes: list = []
        for entry in layer:
            vector = EmbeddingVector(values=tuple(entry["vector"]))
            pages = frozenset(entry["source_pages"])
            if layer_no == 0:
                nodes.append(Block(block_id=entry["id"], text=entry["text"], source_pages=pages, vector=vector))
            else:
                nodes.append(
                    SummaryNode(
                        node_id=entry["id"],
                        layer=entry["layer"],
                        text=entry["text"],
                        children=tuple(entry["children"]),
                        source_pages=pages,
                        vector=vector,
                    )
                )
        layers.append(nodes)
    return SummaryTree(doc_id=data["doc_id"], layers=layers, config=cfg)
