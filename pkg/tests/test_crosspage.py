import json
import math
import random

import numpy as np
import pytest

from conftest import seg
from mmrag.crosspage import (
    Block,
    SummaryNode,
    TreeConfig,
    bic_score,
    build_tree,
    chunk_document,
    fit_gmm,
    load_tree,
    node_id,
    reduce_dims,
    save_tree,
    select_k,
    summarize_cluster,
    topk_nodes,
    tree_to_bytes,
)
from mmrag.errors import ConfigurationError, MMRagError
from mmrag.providers import MockChat, MockEmbedder, script_key, unit_vector


# --- document blocking -------------------------------------------------------


def corpus_of(page_token_counts: dict[int, int]):
    return [
        (page, seg(" ".join(f"p{page}t{i}" for i in range(count))))
        for page, count in sorted(page_token_counts.items())
    ]


def test_chunk_document_partitions_exactly():
    blocks = chunk_document(corpus_of({1: 250}), 100)
    sizes = [len(b.text.split()) for b in blocks]
    assert sizes == [100, 100, 50]
    rebuilt = " ".join(b.text for b in blocks)
    assert rebuilt == " ".join(f"p1t{i}" for i in range(250))


def test_chunk_document_records_straddled_pages():
    blocks = chunk_document(corpus_of({3: 150, 4: 60}), 100)
    assert blocks[0].source_pages == frozenset({3})
    assert blocks[1].source_pages == frozenset({3, 4})
    assert blocks[2].source_pages == frozenset({4})


def test_chunk_document_single_tiny_doc():
    blocks = chunk_document(corpus_of({1: 5}), 100)
    assert len(blocks) == 1
    assert blocks[0].source_pages == frozenset({1})


def test_chunk_document_empty_corpus():
    assert chunk_document([], 100) == []


# --- PCA ----------------------------------------------------------------------


def test_reduce_dims_preserves_geometry_of_planar_data():
    rng = np.random.default_rng(0)
    basis = rng.normal(size=(2, 64))
    coords = rng.normal(size=(40, 2))
    x = coords @ basis
    reduced = reduce_dims(x, 2)
    assert reduced.shape == (40, 2)
    for i in range(0, 40, 7):
        for j in range(1, 40, 11):
            original = np.linalg.norm(x[i] - x[j])
            projected = np.linalg.norm(reduced[i] - reduced[j])
            assert abs(original - projected) < 1e-8


def test_reduce_dims_passthrough_below_two_vectors():
    x = np.ones((1, 8))
    assert np.array_equal(reduce_dims(x, 4), x)


def test_reduce_dims_deterministic():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(30, 16))
    assert np.array_equal(reduce_dims(x, 5), reduce_dims(x, 5))


# --- GMM ------------------------------------------------------------------------


def two_far_clusters(n_per: int = 10, sigma: float = 0.1, seed: int = 0):
    rng = np.random.default_rng(seed)
    a = rng.normal(loc=0.0, scale=sigma, size=(n_per, 2))
    b = rng.normal(loc=100.0, scale=sigma, size=(n_per, 2))
    return np.vstack([a, b])


def test_fit_gmm_recovers_separated_partition():
    points = two_far_clusters()
    fit = fit_gmm(points, 2, TreeConfig(seed=3))
    first, second = set(fit.assignments[:10]), set(fit.assignments[10:])
    assert len(first) == 1 and len(second) == 1 and first != second


def single_gaussian_log_likelihood(points: np.ndarray, floor: float) -> float:
    """Closed form for k=1: MLE mean/variance (floored), diagonal."""
    mean = points.mean(axis=0)
    var = np.maximum(points.var(axis=0), floor)
    total = 0.0
    for x in points:
        for d in range(points.shape[1]):
            total += -0.5 * (math.log(2 * math.pi * var[d]) + (x[d] - mean[d]) ** 2 / var[d])
    return total


def test_fit_gmm_k1_equals_single_gaussian():
    rng = np.random.default_rng(5)
    points = rng.normal(size=(25, 3))
    config = TreeConfig(seed=0)
    fit = fit_gmm(points, 1, config)
    assert set(fit.assignments) == {0}
    want = single_gaussian_log_likelihood(points, config.variance_floor)
    assert abs(fit.log_likelihood - want) < 1e-6


def test_fit_gmm_k_equals_n_all_clusters_non_empty():
    rng = np.random.default_rng(6)
    points = rng.normal(size=(8, 2))
    fit = fit_gmm(points, 8, TreeConfig(seed=1))
    assert sorted(set(fit.assignments)) == list(range(8))


def test_fit_gmm_trajectory_non_decreasing():
    rng = random.Random(9)
    for trial in range(30):
        n = rng.randrange(4, 40)
        d = rng.randrange(2, 6)
        k = rng.randrange(1, min(6, n) + 1)
        data = np.random.default_rng(trial).normal(size=(n, d))
        fit = fit_gmm(data, k, TreeConfig(seed=trial))
        for earlier, later in zip(fit.trajectory, fit.trajectory[1:]):
            assert later >= earlier - 1e-9


def test_fit_gmm_rejects_bad_k():
    points = np.zeros((3, 2))
    with pytest.raises(ConfigurationError):
        fit_gmm(points, 4, TreeConfig())
    with pytest.raises(ConfigurationError):
        fit_gmm(points, 0, TreeConfig())


# --- model selection -------------------------------------------------------------


def three_clusters(sep: float = 100.0, sigma: float = 1.0, n_per: int = 15, seed: int = 0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [sep, 0.0], [0.0, sep]])
    return np.vstack([rng.normal(loc=c, scale=sigma, size=(n_per, 2)) for c in centers])


def test_select_k_finds_three_separated_clusters():
    points = three_clusters()
    assert select_k(points, 6, TreeConfig(seed=2)) == 3


def test_select_k_single_point():
    assert select_k(np.zeros((1, 3)), 8, TreeConfig(seed=0)) == 1


def test_select_k_identical_points_prefers_one_cluster():
    points = np.tile([2.0, -1.0], (12, 1))
    config = TreeConfig(seed=0)
    assert select_k(points, 4, config) == 1
    # Hand check: identical points give identical per-point density under
    # the floored variance for any k, so BIC differs only in the penalty.
    ll1 = fit_gmm(points, 1, config).log_likelihood
    ll2 = fit_gmm(points, 2, config).log_likelihood
    assert abs(ll1 - ll2) < 1e-6
    assert bic_score(ll1, 1, 12, 2) < bic_score(ll2, 2, 12, 2)


# --- summarization + tree ---------------------------------------------------------


def make_topic_blocks(n_topics: int = 3, per_topic: int = 4) -> list[Block]:
    vocab = {
        0: "glacier ice moraine crevasse firn serac ablation",
        1: "sonata cadenza allegro crescendo motif counterpoint",
        2: "enzyme substrate catalysis kinase inhibitor residue",
        3: "harvest plough furrow silage pasture fallow",
        4: "voltage capacitor inductor impedance resistor circuit",
    }
    blocks = []
    for t in range(n_topics):
        for j in range(per_topic):
            i = t * per_topic + j
            blocks.append(
                Block(
                    block_id=f"b{i:04d}",
                    text=f"{vocab[t % len(vocab)]} item {i}",
                    source_pages=frozenset({i + 1}),
                )
            )
    return blocks


def test_summarize_cluster_uses_fixed_prompt_and_order():
    from mmrag.prompts import build_summary_prompt

    members = ["first passage", "second passage"]
    chat = MockChat(seed=0, script={script_key(build_summary_prompt(members)): "scripted summary"})
    assert summarize_cluster(members, chat) == "scripted summary"


def test_summarize_cluster_single_member(chat):
    reply = summarize_cluster(["only one passage"], chat)
    assert reply == "only one passage"


def test_build_tree_single_block_is_its_own_top(embedder, chat):
    blocks = make_topic_blocks(1, 1)
    tree = build_tree(blocks, embedder, chat, TreeConfig(seed=0))
    assert [len(layer) for layer in tree.layers] == [1]


def test_build_tree_structure_invariants(embedder, chat):
    blocks = make_topic_blocks(3, 4)
    tree = build_tree(blocks, embedder, chat, TreeConfig(seed=0), doc_id="d")
    sizes = [len(layer) for layer in tree.layers]
    assert all(later < earlier for earlier, later in zip(sizes, sizes[1:]))
    assert sizes[-1] == 1

    # Single root, exact provenance union, every block reachable.
    by_id = {node_id(n): n for layer in tree.layers for n in layer}
    reached = set()
    stack = [tree.root]
    while stack:
        node = stack.pop()
        reached.add(node_id(node))
        if isinstance(node, SummaryNode):
            children = [by_id[c] for c in node.children]
            assert node.source_pages == frozenset().union(*(c.source_pages for c in children))
            for child in children:
                assert child.layer == node.layer - 1
                stack.append(child)
    assert {b.block_id for b in tree.layers[0]} <= reached

    parents: dict[str, int] = {}
    for layer in tree.layers[1:]:
        for node in layer:
            for child in node.children:
                parents[child] = parents.get(child, 0) + 1
    for layer in tree.layers[:-1]:
        for node in layer:
            assert parents.get(node_id(node), 0) == 1


def test_build_tree_rebuild_is_bit_identical():
    blocks = make_topic_blocks(3, 4)
    one = build_tree(blocks, MockEmbedder(seed=4), MockChat(seed=4), TreeConfig(seed=4), doc_id="d")
    two = build_tree(blocks, MockEmbedder(seed=4), MockChat(seed=4), TreeConfig(seed=4), doc_id="d")
    assert tree_to_bytes(one) == tree_to_bytes(two)


def test_build_tree_rejects_empty_input(embedder, chat):
    with pytest.raises(MMRagError):
        build_tree([], embedder, chat, TreeConfig())


def test_build_tree_respects_max_layers(embedder, chat):
    blocks = make_topic_blocks(5, 8)
    tree = build_tree(blocks, embedder, chat, TreeConfig(seed=0, max_layers=2))
    assert len(tree.layers) <= 3
    assert len(tree.layers[-1]) == 1


def test_topk_nodes_exact_block_scores_one(embedder, chat):
    blocks = make_topic_blocks(2, 3)
    tree = build_tree(blocks, embedder, chat, TreeConfig(seed=0))
    target = tree.layers[0][2]
    results = topk_nodes(tree, target.vector, 4)
    assert node_id(results[0][0]) == target.block_id
    assert abs(results[0][1] - 1.0) < 1e-6


def test_topk_nodes_k_larger_than_pool(embedder, chat):
    blocks = make_topic_blocks(2, 2)
    tree = build_tree(blocks, embedder, chat, TreeConfig(seed=0))
    pool = tree.all_nodes()
    assert len(topk_nodes(tree, blocks[0].vector or tree.layers[0][0].vector, 999)) == len(pool)


def brute_force_topk_nodes(tree, query, k):
    q = np.asarray(query.values)
    qn = np.linalg.norm(q)
    scored = []
    for layer in tree.layers:
        for node in layer:
            v = np.asarray(node.vector.values)
            score = float(np.dot(q, v) / (qn * np.linalg.norm(v)))
            scored.append((node, score))
    scored.sort(key=lambda ns: (-ns[1], ns[0].layer, node_id(ns[0])))
    return scored[:k]


def test_topk_nodes_matches_brute_force(embedder, chat):
    rng = np.random.default_rng(12)
    blocks = make_topic_blocks(5, 6)
    tree = build_tree(blocks, embedder, chat, TreeConfig(seed=1))
    for _ in range(20):
        query = unit_vector(rng.normal(size=embedder.dim))
        got = topk_nodes(tree, query, 10)
        want = brute_force_topk_nodes(tree, query, 10)
        assert [node_id(n) for n, _ in got] == [node_id(n) for n, _ in want]


def test_tree_persistence_round_trip(tmp_path, embedder, chat):
    blocks = make_topic_blocks(3, 3)
    tree = build_tree(blocks, embedder, chat, TreeConfig(seed=0), doc_id="d")
    path = tmp_path / "d.tree.json"
    save_tree(tree, path)
    loaded = load_tree(path)
    assert tree_to_bytes(loaded) == tree_to_bytes(tree)
    assert loaded.config == tree.config


def test_tree_persistence_detects_tampering(tmp_path, embedder, chat):
    from mmrag.errors import IndexArtifactError

    blocks = make_topic_blocks(2, 2)
    tree = build_tree(blocks, embedder, chat, TreeConfig(seed=0), doc_id="d")
    path = tmp_path / "d.tree.json"
    save_tree(tree, path)
    data = json.loads(path.read_text())
    data["layers"][0][0]["text"] = "tampered"
    path.write_text(json.dumps(data))
    with pytest.raises(IndexArtifactError, match="checksum"):
        load_tree(path)
