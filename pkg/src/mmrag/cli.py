"""Command-line front end: ingest, index, query, eval, inspect.

Exit codes: 0 success, 1 provider/runtime failure, 2 usage or config
error. Every command is deterministic under `--mock --seed S`.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import crosspage, docmodel, inpage, prompts
from .answerer import AnswerRecord, AnswerType, generate_answer
from .docmodel import ParsedDocument, SegmentKind, TextSegment, load_document, save_document
from .errors import ConfigurationError, MMRagError
from .evalharness import QAItem, aggregate, format_report_table, load_benchmark
from .providers import ProviderConfig, ProviderKind, ProviderSet, build_chat, build_embedder, build_vision
from .retriever import RetrievalConfig, retrieve

logger = logging.getLogger(__name__)

MANIFEST_FORMAT_VERSION = "mmrag-run/1"


# --- Config file ------------------------------------------------------------


def parse_config_file(path: str | os.PathLike) -> dict[str, object]:
    """Flat `section.key = value` file; values coerce to int/float/bool."""
    values: dict[str, object] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{line_no}: expected key = value")
        key, _, value = line.partition("=")
        values[key.strip()] = _coerce_config_value(value.strip().strip('"'))
    return values


def _coerce_config_value(text: str) -> object:
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _provider_config(values: dict[str, object], role: str) -> ProviderConfig:
    prefix = role + "."
    fields = {k[len(prefix):]: v for k, v in values.items() if k.startswith(prefix)}
    if "kind" not in fields:
        raise ConfigurationError(f"provider config missing {role}.kind")
    kind = ProviderKind(str(fields.pop("kind")))
    allowed = {f.name for f in dataclasses.fields(ProviderConfig)} - {"kind"}
    unknown = set(fields) - allowed
    if unknown:
        raise ConfigurationError(f"unknown {role} provider settings: {sorted(unknown)}")
    return ProviderConfig(kind=kind, **fields)  # type: ignore[arg-type]


def build_providers(args) -> ProviderSet:
    if args.mock:
        return ProviderSet.mocks(seed=args.seed)
    if not args.config:
        raise ConfigurationError("provide --config with provider settings, or use --mock")
    values = parse_config_file(args.config)
    return ProviderSet(
        embedder=build_embedder(_provider_config(values, "embed")),
        chat=build_chat(_provider_config(values, "chat")),
        vision=build_vision(_provider_config(values, "vision")),
    )


# --- Manifest ---------------------------------------------------------------


@dataclass
class RunManifest:
    doc_id: str
    document: str
    inpage_index: str | None
    tree: str | None
    seed: int
    retrieval: dict
    created_at: str
    checksum: str
    base_dir: Path

    def document_path(self) -> Path:
        return self.base_dir / self.document

    def inpage_path(self) -> Path | None:
        return self.base_dir / self.inpage_index if self.inpage_index else None

    def tree_path(self) -> Path | None:
        return self.base_dir / self.tree if self.tree else None


def write_manifest(
    out_dir: Path,
    doc_id: str,
    document: str,
    inpage_index: str | None,
    tree: str | None,
    seed: int,
    retrieval: dict,
) -> Path:
    artifact_hash = hashlib.sha256()
    for name in (document, inpage_index, tree):
        if name:
            artifact_hash.update((out_dir / name).read_bytes())
    data = {
        "version": MANIFEST_FORMAT_VERSION,
        "doc_id": doc_id,
        "document": document,
        "inpage_index": inpage_index,
        "tree": tree,
        "seed": seed,
        "retrieval": retrieval,
        "checksum": artifact_hash.hexdigest(),
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    path = out_dir / f"{doc_id}.manifest.json"
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


def load_manifest(path: str | os.PathLike) -> RunManifest:
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    if data.get("version") != MANIFEST_FORMAT_VERSION:
        raise ConfigurationError(f"unsupported manifest version {data.get('version')!r}")
    manifest = RunManifest(
        doc_id=data["doc_id"],
        document=data["document"],
        inpage_index=data.get("inpage_index"),
        tree=data.get("tree"),
        seed=data.get("seed", 0),
        retrieval=data.get("retrieval", {}),
        created_at=data.get("created_at", ""),
        checksum=data.get("checksum", ""),
        base_dir=path.parent,
    )
    for p in (manifest.document_path(), manifest.inpage_path(), manifest.tree_path()):
        if p is not None and not p.exists():
            raise ConfigurationError(f"manifest references missing file: {p}")
    return manifest


# --- ingest -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    providers = build_providers(args)
    doc = load_document(args.document)
    described = {
        seg.linked_asset
        for page in doc.pages
        for seg in page.segments
        if seg.kind is SegmentKind.IMAGE_DESCRIPTION and seg.linked_asset
    }

    added = 0
    failures = 0
    attempted = 0
    new_pages = []
    for page in doc.pages:
        segments = list(page.segments)
        for asset in page.assets:
            if asset.asset_id in described:
                continue
            attempted += 1
            try:
                data = docmodel.asset_bytes(doc, asset)
                text = providers.vision.describe_image(
                    data, prompts.DESCRIBE_IMAGE_INSTRUCTION, media_type=asset.media_type
                )
            except Exception as exc:
                logger.warning("could not describe asset %s: %s", asset.asset_id, exc)
                print(f"warning: asset {asset.asset_id}: {exc}", file=sys.stderr)
                failures += 1
                continue
            segments.append(
                TextSegment(kind=SegmentKind.IMAGE_DESCRIPTION, text=text, linked_asset=asset.asset_id)
            )
            added += 1
        new_pages.append(dataclasses.replace(page, segments=tuple(segments)))

    if added:
        save_document(dataclasses.replace(doc, pages=tuple(new_pages)), args.document)
    print(f"described {added} asset(s); {attempted - failures} ok, {failures} failed")
    if attempted > 0 and failures == attempted:
        return 1
    return 0


# --- index ------------------------------------------------------------------


def cmd_index(args) -> int:
    providers = build_providers(args)
    doc = load_document(args.document)
    docmodel.require_valid(doc)
    for page in doc.pages:
        for asset in page.assets:
            try:
                docmodel.asset_bytes(doc, asset)
            except OSError as exc:
                print(f"warning: asset {asset.asset_id} is unreadable: {exc}", file=sys.stderr)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    inpage_name = f"{doc.doc_id}.inpage.json"
    tree_name = None if args.inpage_only else f"{doc.doc_id}.tree.json"
    written: list[Path] = []
    try:
        index = inpage.build_inpage_index(doc, providers.embedder, chunk_size=args.chunk_size, overlap=args.overlap)
        inpage.save_inpage_index(index, out_dir / inpage_name)
        written.append(out_dir / inpage_name)

        if tree_name:
            corpus = docmodel.textual_corpus(doc)
            blocks = crosspage.chunk_document(corpus, args.block_size)
            if not blocks:
                raise MMRagError("document has no text to build a summary tree from")
            tree_config = crosspage.TreeConfig(block_size=args.block_size, k_max=args.kmax, seed=args.seed)
            tree = crosspage.build_tree(blocks, providers.embedder, providers.chat, tree_config, doc_id=doc.doc_id)
            crosspage.save_tree(tree, out_dir / tree_name)
            written.append(out_dir / tree_name)

        # The document stays where it is (its image refs resolve beside it);
        # the manifest points back at it relatively.
        doc_ref = os.path.relpath(Path(args.document).resolve(), out_dir.resolve())
        retrieval = {
            "chunk_top_k": args.chunk_top_k,
            "final_pages": args.pages,
            "final_summaries": args.summaries,
        }
        manifest_path = write_manifest(
            out_dir, doc.doc_id, doc_ref, inpage_name, tree_name, args.seed, retrieval
        )
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    print(f"wrote {manifest_path}")
    return 0


# --- query ------------------------------------------------------------------


def _retrieval_config(manifest: RunManifest, args) -> RetrievalConfig:
    defaults = manifest.retrieval
    if args.pages is None:
        pages = defaults.get("final_pages", 10)
    else:
        try:
            pages = int(args.pages)
        except (TypeError, ValueError):
            raise ConfigurationError(f"--pages expects an integer here, got {args.pages!r}")
    config = RetrievalConfig(
        chunk_top_k=defaults.get("chunk_top_k", 20),
        final_pages=pages,
        final_summaries=args.summaries if args.summaries is not None else defaults.get("final_summaries", 10),
        rerank_enabled=not args.no_rerank,
        visual_enabled=not args.no_visual,
        summary_enabled=not args.no_summary,
        parent_page_enabled=not args.no_parent,
    )
    if not config.parent_page_enabled and not config.summary_enabled:
        raise ConfigurationError("both parent-page and summary retrieval disabled: context would be empty")
    config.validate()
    return config


def _load_artifacts(manifest: RunManifest):
    doc = load_document(manifest.document_path())
    index = inpage.load_inpage_index(manifest.inpage_path()) if manifest.inpage_index else None
    tree = crosspage.load_tree(manifest.tree_path()) if manifest.tree else None
    return doc, index, tree


def cmd_query(args) -> int:
    providers = build_providers(args)
    manifest = load_manifest(args.manifest)
    config = _retrieval_config(manifest, args)
    if config.summary_enabled and manifest.tree is None:
        raise ConfigurationError("manifest has no summary tree; re-index without --inpage-only or pass --no-summary")
    doc, index, tree = _load_artifacts(manifest)

    context = retrieve(args.question, index, tree, doc, providers, config)
    record = generate_answer(args.question, context, AnswerType(args.answer_type), providers.chat)
    if args.trace:
        Path(args.trace).write_text(json.dumps(context.trace, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(record.to_dict(), sort_keys=True, indent=2))
    return 0


# --- eval -------------------------------------------------------------------


def _manifests_for(path: Path) -> dict[str, RunManifest]:
    if path.is_dir():
        manifests = {}
        for mf in sorted(path.glob("*.manifest.json")):
            manifest = load_manifest(mf)
            manifests[manifest.doc_id] = manifest
        if not manifests:
            raise ConfigurationError(f"no *.manifest.json files under {path}")
        return manifests
    manifest = load_manifest(path)
    return {manifest.doc_id: manifest}


def _cache_key(manifest: RunManifest, item: QAItem, config: RetrievalConfig) -> str:
    parts = json.dumps(
        {
            "checksum": manifest.checksum,
            "question": item.question,
            "answer_type": item.answer_type.value,
            "config": dataclasses.asdict(config),
        },
        sort_keys=True,
    )
    return hashlib.sha256(parts.encode("utf-8")).hexdigest()


def run_eval(
    manifests: dict[str, RunManifest],
    items: list[QAItem],
    providers: ProviderSet,
    config_for: "callable",
    cache_dir: Path | None,
    parallel: int = 4,
):
    """Answer and score every item; returns (report, errored qids).

    `config_for(manifest)` supplies the retrieval config. Answers are
    cached per (manifest checksum, question, config) so re-runs make no
    provider calls.
    """
    if cache_dir:
        cache_dir.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, tuple] = {}
    errored: list[str] = []

    def answer_item(item: QAItem) -> AnswerRecord:
        manifest = manifests.get(item.doc_id)
        if manifest is None:
            errored.append(item.qid)
            return AnswerRecord(
                step_by_step_analysis="",
                reasoning_summary="",
                relevant_pages=[],
                final_answer=None,
                raw_response=f"error: unknown doc_id {item.doc_id!r}",
            )
        config = config_for(manifest)
        cache_path = cache_dir / f"{_cache_key(manifest, item, config)}.json" if cache_dir else None
        if cache_path and cache_path.exists():
            return AnswerRecord.from_dict(json.loads(cache_path.read_text(encoding="utf-8")))
        if item.doc_id not in artifacts:
            artifacts[item.doc_id] = _load_artifacts(manifest)
        doc, index, tree = artifacts[item.doc_id]
        context = retrieve(item.question, index, tree, doc, providers, config)
        record = generate_answer(item.question, context, item.answer_type, providers.chat)
        if cache_path:
            cache_path.write_text(json.dumps(record.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return record

    if parallel > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            preds = list(pool.map(answer_item, items))
    else:
        preds = [answer_item(item) for item in items]

    report = aggregate(items, preds)
    return report, sorted(errored)


def cmd_eval(args) -> int:
    providers = build_providers(args)
    manifests = _manifests_for(Path(args.manifest))
    items = load_benchmark(args.items)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    page_counts = [int(p) for p in str(args.pages).split(",")] if args.pages is not None else [None]

    def make_config_for(page_count):
        def config_for(manifest: RunManifest) -> RetrievalConfig:
            ns = argparse.Namespace(
                pages=page_count,
                summaries=args.summaries,
                no_rerank=args.no_rerank,
                no_visual=args.no_visual,
                no_summary=args.no_summary,
                no_parent=args.no_parent,
            )
            return _retrieval_config(manifest, ns)

        return config_for

    sweep_rows = []
    last_table = ""
    for page_count in page_counts:
        report, errored = run_eval(
            manifests,
            items,
            providers,
            make_config_for(page_count),
            cache_dir=out_dir / "cache",
            parallel=args.parallel,
        )
        payload = report.to_dict()
        if errored:
            payload["errors"] = errored
        name = "report.json" if len(page_counts) == 1 else f"report_p{page_count}.json"
        (out_dir / name).write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        last_table = format_report_table(report)
        (out_dir / name.replace(".json", ".txt")).write_text(last_table + "\n", encoding="utf-8")
        sweep_rows.append((page_count, report.accuracy, report.f1))

    if len(page_counts) > 1:
        lines = ["pages |  Acc. |    F1"]
        for pages, acc, f1 in sweep_rows:
            lines.append(f"{pages:>5} | {acc * 100:>5.1f} | {f1 * 100:>5.1f}")
        sweep = "\n".join(lines)
        (out_dir / "sweep.txt").write_text(sweep + "\n", encoding="utf-8")
        print(sweep)
    else:
        print(last_table)
    return 0


# --- inspect ------------------------------------------------------------------


def cmd_inspect(args) -> int:
    manifest = load_manifest(args.manifest)
    doc, index, tree = _load_artifacts(manifest)
    summary = {
        "doc_id": manifest.doc_id,
        "pages": len(doc.pages),
        "assets": sum(len(p.assets) for p in doc.pages),
        "chunks": len(index.chunks) if index else 0,
        "tree_layers": [len(layer) for layer in tree.layers] if tree else [],
        "seed": manifest.seed,
    }
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


# --- argument parsing ---------------------------------------------------------


def _add_provider_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mock", action="store_true", help="use deterministic mock providers")
    parser.add_argument("--seed", type=int, default=0, help="seed for mock providers and clustering")
    parser.add_argument("--config", help="provider/retrieval config file (key = value lines)")


def _add_toggle_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--pages", default=None, help="final page count (eval accepts a comma list, e.g. 1,4,10)")
    parser.add_argument("--summaries", type=int, default=None, help="final summary count")
    parser.add_argument("--no-rerank", action="store_true", help="rank pages by embedding score only")
    parser.add_argument("--no-visual", action="store_true", help="skip visual evidence extraction")
    parser.add_argument("--no-summary", action="store_true", help="skip summary retrieval")
    parser.add_argument("--no-parent", action="store_true", help="skip parent-page retrieval")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmrag", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="add image descriptions to a document JSON")
    p.add_argument("document")
    _add_provider_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="build the in-page index and summary tree")
    p.add_argument("document")
    p.add_argument("--out", required=True)
    p.add_argument("--chunk-size", type=int, default=inpage.DEFAULT_CHUNK_SIZE)
    p.add_argument("--overlap", type=int, default=inpage.DEFAULT_OVERLAP)
    p.add_argument("--block-size", type=int, default=crosspage.DEFAULT_BLOCK_SIZE)
    p.add_argument("--kmax", type=int, default=8)
    p.add_argument("--chunk-top-k", type=int, default=20)
    p.add_argument("--pages", type=int, default=10)
    p.add_argument("--summaries", type=int, default=10)
    p.add_argument("--inpage-only", action="store_true")
    _add_provider_flags(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="answer one question against an indexed document")
    p.add_argument("manifest")
    p.add_argument("question")
    p.add_argument("--answer-type", default="String", choices=[t.value for t in AnswerType])
    p.add_argument("--trace", help="write the retrieval trace JSON here")
    _add_toggle_flags(p)
    _add_provider_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="run a benchmark file and write a score report")
    p.add_argument("manifest", help="manifest file or directory of manifests")
    p.add_argument("items", help="benchmark items.jsonl")
    p.add_argument("--out", required=True)
    p.add_argument("--parallel", type=int, default=4)
    _add_toggle_flags(p)
    _add_provider_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="summarize an indexed document's artifacts")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MMRagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
