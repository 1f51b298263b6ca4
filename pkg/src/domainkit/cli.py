"""Command-line interface: one subcommand per operation plus the two
end-to-end pipelines (``analyze`` for layer sweeps and projections,
``adapt`` for cluster-based corpus partitioning).

Every randomized operation takes an explicit --seed. Pipeline runs write a
``run.json`` capturing the resolved config, seed, input checksums and tool
version; a rerun with identical inputs reproduces identical output bytes,
so no timestamps or other hidden entropy appear in any artifact.

Exit codes: 0 success, 1 validation/input error, 2 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import traceback
from pathlib import Path

from . import __version__, corpusprep, evaluation, kmeans, pooling, projection, router
from . import embstore
from .errors import DomainkitError


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _input_checksums(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        out[str(p)] = _sha256_file(p)
        sidecar = embstore.meta_path(p)
        if sidecar.exists():
            out[str(sidecar)] = _sha256_file(sidecar)
    return out


def _kmeans_config(args, k=None) -> kmeans.KMeansConfig:
    return kmeans.KMeansConfig(
        k=k if k is not None else args.k,
        restarts=args.restarts,
        max_iters=args.max_iters,
        tol=args.tol,
        seed=args.seed,
        normalize=not args.no_normalize,
    )


def _add_kmeans_options(p, require_k=True):
    if require_k:
        p.add_argument("--k", type=int, required=True, help="number of clusters")
    p.add_argument("--restarts", type=int, default=10, help="independent fits, best kept")
    p.add_argument("--max-iters", type=int, default=300, dest="max_iters")
    p.add_argument("--tol", type=float, default=1e-6, help="relative inertia improvement threshold")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--no-normalize",
        action="store_true",
        help="skip L2 row normalization (default normalizes, i.e. cosine ranking)",
    )


# ---------------------------------------------------------------------------
# plain subcommands

def cmd_validate(args) -> int:
    problems = embstore.validate_file(args.file)
    for msg in problems:
        print(msg, file=sys.stderr)
    if not problems:
        emb = embstore.read_embeddings(args.file, mmap=True, validate=False)
        print(f"{args.file}: ok ({len(emb)} records, dim {emb.dim})")
    return 1 if problems else 0


def cmd_pool_docs(args) -> int:
    sentences = embstore.read_embeddings(args.infile, mmap=True)
    docs = pooling.pool_documents(sentences)
    embstore.write_embeddings(docs, args.outfile)
    print(f"pooled {len(sentences)} sentences into {len(docs)} documents")
    return 0


def cmd_kmeans_fit(args) -> int:
    data = embstore.read_embeddings(args.infile, mmap=True)
    model = kmeans.fit(data, _kmeans_config(args))
    kmeans.save_model(model, args.model)
    print(
        f"k={model.k} inertia={model.inertia!r} iterations={model.iterations_run} "
        f"restarts={len(model.restart_inertias)}"
    )
    return 0


def cmd_kmeans_assign(args) -> int:
    model = kmeans.load_model(args.model)
    data = embstore.read_embeddings(args.infile, mmap=True)
    assignment = kmeans.assign(model, data)
    kmeans.write_labels_tsv(assignment, args.labels)
    print(f"assigned {len(assignment)} items to {model.k} clusters")
    return 0


def cmd_pca(args) -> int:
    data = embstore.read_embeddings(args.infile, mmap=True)
    result = projection.pca_project(
        data, args.dims, sample_cap=args.sample_cap, seed=args.seed
    )
    projection.write_projection_tsv(result, args.outfile)
    ratios = [float(v) for v in result.explained_variance_ratio]
    print(f"explained variance ratios: {ratios}", file=sys.stderr)
    _write_json(
        {"explained_variance_ratio": ratios, "dims": args.dims,
         "sample_cap": args.sample_cap, "seed": args.seed},
        str(args.outfile) + ".meta.json",
    )
    return 0


def _load_assignment(path, emb_path) -> kmeans.ClusterAssignment:
    if str(path).endswith(".json"):
        model = kmeans.load_model(path)
        data = embstore.read_embeddings(emb_path, mmap=True)
        return kmeans.assign(model, data)
    return kmeans.read_labels_tsv(path)


def cmd_purity(args) -> int:
    data = embstore.read_embeddings(args.infile, mmap=True)
    assignment = _load_assignment(args.source, args.infile)
    report = evaluation.purity(evaluation.contingency(assignment, data))
    _write_json(report.to_json_dict(), args.report)
    print(
        f"purity_majority={report.purity_majority!r} "
        f"purity_matched={report.purity_matched!r}"
    )
    return 0


def _write_confusion_tsv(table, path, domain_names) -> None:
    report = evaluation.purity(table)
    order = evaluation.display_row_order(table, report.matching)
    evaluation.write_table_tsv(
        evaluation.confusion_percent(table), table, path,
        domain_names=domain_names, row_order=order,
    )


def cmd_confusion(args) -> int:
    data = embstore.read_embeddings(args.infile, mmap=True)
    assignment = kmeans.read_labels_tsv(args.labels)
    table = evaluation.contingency(assignment, data)
    _write_confusion_tsv(table, args.table, data.meta.domain_names)
    return 0


def cmd_layer_sweep(args) -> int:
    config = _kmeans_config(args)
    reports = evaluation.layer_sweep(args.files, config)
    _write_json(
        {
            "k": config.k,
            "seed": config.seed,
            "layers": [r.to_json_dict() for r in reports],
        },
        args.report,
    )
    for r in reports:
        print(
            f"{r.extra['file']}\tlayer={r.extra['layer']}\t"
            f"purity_majority={r.purity_majority!r}"
        )
    return 0


def cmd_clean(args) -> int:
    corpus = corpusprep.read_corpus_prefix(args.in_prefix)
    cleaned, counts = corpusprep.clean(
        corpus, max_tokens=args.max_tokens, ratio=args.ratio, alpha_frac=args.alpha_frac
    )
    corpusprep.write_corpus_prefix(cleaned, args.out_prefix)
    print(json.dumps({"kept": len(cleaned), "discarded": counts}, sort_keys=True))
    return 0


def cmd_dedup_eval(args) -> int:
    train = corpusprep.read_corpus_prefix(args.train_prefix)
    eval_corpus = corpusprep.read_corpus_prefix(args.eval_prefix)
    deduped = corpusprep.dedup_eval(train, eval_corpus)
    corpusprep.write_corpus_prefix(deduped, args.out_prefix)
    print(f"kept {len(deduped)} of {len(eval_corpus)} eval pairs")
    return 0


def cmd_split_docs(args) -> int:
    fractions = tuple(float(x) for x in args.fractions.split(","))
    corpus = corpusprep.read_corpus_prefix(args.in_prefix)
    train, dev, test = corpusprep.split_documents(corpus, fractions, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("dev", dev), ("test", test)):
        corpusprep.write_corpus_prefix(part, out / name)
    print(f"train={len(train)} dev={len(dev)} test={len(test)}")
    return 0


def cmd_sample(args) -> int:
    corpus = corpusprep.read_corpus_prefix(args.in_prefix)
    sampled = corpusprep.sample_per_domain(corpus, args.per_domain, args.seed)
    corpusprep.write_corpus_prefix(sampled, args.out_prefix)
    print(f"sampled {len(sampled)} pairs")
    return 0


def _plan_from_labels(labels_path, corpus, level, k=None) -> corpusprep.PartitionPlan:
    assignment = kmeans.read_labels_tsv(labels_path)
    n_clusters = k if k is not None else int(assignment.labels.max()) + 1
    if level == "document":
        doc_label = {
            int(i): int(c) for i, c in zip(assignment.item_ids, assignment.labels)
        }
        mapping = {}
        for p in corpus.pairs:
            if p.doc_id not in doc_label:
                raise pooling.MissingDocumentError(
                    f"doc_id {p.doc_id} has no document-level label"
                )
            mapping[p.sentence_id] = doc_label[p.doc_id]
        return corpusprep.PartitionPlan(mapping, n_clusters, "document")
    return corpusprep.PartitionPlan.from_cluster_assignment(
        assignment, n_clusters, "sentence"
    )


def cmd_partition(args) -> int:
    corpus = corpusprep.read_corpus_prefix(args.in_prefix)
    plan = _plan_from_labels(args.labels, corpus, args.level, args.k)
    manifest = corpusprep.partition_by_cluster(corpus, plan, args.out_dir)
    sizes = {c: info["count"] for c, info in sorted(manifest["clusters"].items())}
    print(json.dumps({"k": plan.k, "sizes": sizes}, sort_keys=True))
    return 0


def cmd_route(args) -> int:
    model = kmeans.load_model(args.model)
    table = router.load_routing_table(args.routing)
    if args.stream:
        router.route_stream(model, table, sys.stdin.buffer, sys.stdout)
        return 0
    if args.infile is None:
        raise DomainkitError("route requires an embedding file unless --stream is set")
    data = embstore.read_embeddings(args.infile, mmap=True)
    sys.stdout.write("item_id\tcluster\tmodel_id\tsqdist\n")
    for item_id, cluster, model_id, sqdist in router.route_batch(model, table, data):
        sys.stdout.write(f"{item_id}\t{cluster}\t{model_id}\t{sqdist!r}\n")
    return 0


# ---------------------------------------------------------------------------
# pipelines

def _load_config(path, overrides: dict) -> dict:
    with open(path, encoding="utf-8") as f:
        config = json.load(f)
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    return config


def _pipeline_kmeans_config(config: dict) -> kmeans.KMeansConfig:
    return kmeans.KMeansConfig(
        k=int(config["k"]),
        restarts=int(config.get("restarts", 10)),
        max_iters=int(config.get("max_iters", 300)),
        tol=float(config.get("tol", 1e-6)),
        seed=int(config.get("seed", 0)),
        normalize=bool(config.get("normalize", True)),
    )


def cmd_analyze(args) -> int:
    config = _load_config(
        args.config,
        {"k": args.k, "seed": args.seed, "restarts": args.restarts, "out_dir": args.out},
    )
    files = config["files"]
    if not isinstance(files, list):
        raise DomainkitError("analyze config: 'files' must be a list of embedding paths")
    kconf = _pipeline_kmeans_config(config)
    out_dir = Path(config["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    reports = evaluation.layer_sweep(files, kconf)
    for i, report in enumerate(reports):
        table = report.table
        names = embstore.read_meta(files[i]).domain_names
        evaluation.write_table_tsv(
            table.counts, table, out_dir / f"layer_{i}.contingency.tsv",
            domain_names=names,
        )
        _write_confusion_tsv(table, out_dir / f"layer_{i}.confusion.tsv", names)

    best = max(range(len(reports)), key=lambda i: (reports[i].purity_majority, -i))
    best_file = files[best]
    best_data = embstore.read_embeddings(best_file, mmap=True)
    model = kmeans.fit(best_data, kconf)  # deterministic re-fit of the winner
    kmeans.save_model(model, out_dir / "model.json")
    assignment = kmeans.assign(model, best_data)
    kmeans.write_labels_tsv(assignment, out_dir / "labels.tsv")

    pca_dims = int(config.get("pca_dims", 2))
    result = projection.pca_project(
        best_data,
        pca_dims,
        sample_cap=int(config.get("pca_sample_cap", projection.DEFAULT_SAMPLE_CAP)),
        seed=kconf.seed,
    )
    projection.write_projection_tsv(result, out_dir / "pca.tsv")
    ratios = [float(v) for v in result.explained_variance_ratio]
    print(f"explained variance ratios: {ratios}", file=sys.stderr)
    _write_json(
        {"explained_variance_ratio": ratios, "dims": pca_dims,
         "sample_cap": int(config.get("pca_sample_cap", projection.DEFAULT_SAMPLE_CAP)),
         "seed": kconf.seed},
        str(out_dir / "pca.tsv") + ".meta.json",
    )

    _write_json(
        {
            "k": kconf.k,
            "seed": kconf.seed,
            "layers": [r.to_json_dict() for r in reports],
            "best": {
                "index": best,
                "file": str(best_file),
                "layer": reports[best].extra["layer"],
                "purity_majority": reports[best].purity_majority,
                "purity_matched": reports[best].purity_matched,
            },
        },
        out_dir / "report.json",
    )
    _write_json(
        {
            "pipeline": "analyze",
            "config": config,
            "inputs": _input_checksums(files),
            "version": __version__,
        },
        out_dir / "run.json",
    )
    for i, r in enumerate(reports):
        marker = " *" if i == best else ""
        print(f"layer {r.extra['layer']}: purity_majority={r.purity_majority!r}{marker}")
    return 0


def cmd_adapt(args) -> int:
    config = _load_config(
        args.config,
        {
            "k": args.k,
            "seed": args.seed,
            "restarts": args.restarts,
            "level": args.level,
            "out_dir": args.out,
        },
    )
    level = config["level"]
    if level not in corpusprep.PARTITION_LEVELS:
        raise DomainkitError(f"adapt config: unknown level {level!r}")
    kconf = _pipeline_kmeans_config(config)

    if "corpus_prefix" in config:
        src, tgt, ids = corpusprep.corpus_paths(config["corpus_prefix"])
    else:
        c = config["corpus"]
        src, tgt, ids = Path(c["src"]), Path(c["tgt"]), Path(c["ids"])
    corpus = corpusprep.read_corpus(src, tgt, ids)
    emb_path = config["embeddings"]
    sentences = embstore.read_embeddings(emb_path, mmap=True)

    # fail on any corpus/embedding inconsistency before writing anything
    if sentences.meta.level != embstore.LEVEL_SENTENCE:
        raise DomainkitError(
            f"adapt requires sentence-level embeddings, got {sentences.meta.level!r}"
        )
    emb_ids = {int(i) for i in sentences.sentence_ids}
    missing = [p.sentence_id for p in corpus.pairs if p.sentence_id not in emb_ids]
    if missing:
        raise DomainkitError(
            f"{len(missing)} corpus sentences have no embedding (first: {missing[0]})"
        )
    if level == "document":
        emb_doc = {
            int(s): int(d)
            for s, d in zip(sentences.sentence_ids, sentences.doc_ids)
        }
        for p in corpus.pairs:
            if emb_doc[p.sentence_id] != p.doc_id:
                raise DomainkitError(
                    f"sentence {p.sentence_id}: doc_id {p.doc_id} in corpus but "
                    f"{emb_doc[p.sentence_id]} in embeddings"
                )

    out_dir = Path(config["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    if level == "document":
        docs = pooling.pool_documents(sentences)
        model = kmeans.fit(docs, kconf)
        doc_assignment = kmeans.assign(model, docs)
        sentence_assignment = pooling.broadcast_labels(doc_assignment, sentences)
    else:
        model = kmeans.fit(sentences, kconf)
        sentence_assignment = kmeans.assign(model, sentences)

    plan = corpusprep.PartitionPlan.from_cluster_assignment(
        sentence_assignment, model.k, level
    )
    manifest = corpusprep.partition_by_cluster(corpus, plan, out_dir / "clusters")
    kmeans.save_model(model, out_dir / "model.json")
    kmeans.write_labels_tsv(sentence_assignment, out_dir / "labels.tsv")
    router.save_routing_table(
        router.RoutingTable(
            model_for_cluster={c: f"model-cluster-{c}" for c in range(model.k)},
            default_model=None,
        ),
        out_dir / "routing.json",
    )
    _write_json(
        {
            "pipeline": "adapt",
            "config": config,
            "inputs": _input_checksums([src, tgt, ids, emb_path]),
            "version": __version__,
        },
        out_dir / "run.json",
    )
    sizes = {c: info["count"] for c, info in sorted(manifest["clusters"].items())}
    print(json.dumps({"k": model.k, "level": level, "sizes": sizes}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="domainkit",
        description="Discover latent text domains in embedding space: pool, "
        "cluster, evaluate purity, project, partition corpora and route inputs.",
    )
    parser.add_argument("--version", action="version", version=f"domainkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an embedding file against the format")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("pool-docs", help="mean-pool sentence vectors into document vectors")
    p.add_argument("infile")
    p.add_argument("outfile")
    p.set_defaults(func=cmd_pool_docs)

    p = sub.add_parser("kmeans-fit", help="fit k-means with restarts, save the best model")
    _add_kmeans_options(p)
    p.add_argument("infile")
    p.add_argument("model")
    p.set_defaults(func=cmd_kmeans_fit)

    p = sub.add_parser("kmeans-assign", help="label items with their nearest centroid")
    p.add_argument("model")
    p.add_argument("infile")
    p.add_argument("labels")
    p.set_defaults(func=cmd_kmeans_assign)

    p = sub.add_parser("pca", help="cosine-based PCA projection to low dimension")
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--sample-cap", type=int, default=projection.DEFAULT_SAMPLE_CAP,
                   dest="sample_cap", help="fit components on at most this many rows")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("infile")
    p.add_argument("outfile")
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("purity", help="purity report for a model or labels file")
    p.add_argument("source", help="model.json or labels.tsv")
    p.add_argument("infile")
    p.add_argument("report")
    p.set_defaults(func=cmd_purity)

    p = sub.add_parser("confusion", help="column-percentage cluster/domain confusion table")
    p.add_argument("labels")
    p.add_argument("infile")
    p.add_argument("table")
    p.set_defaults(func=cmd_confusion)

    p = sub.add_parser("layer-sweep", help="fit+assign+purity per layer file")
    _add_kmeans_options(p)
    p.add_argument("files", nargs="+")
    p.add_argument("report")
    p.set_defaults(func=cmd_layer_sweep)

    p = sub.add_parser("clean", help="drop noisy pairs from a parallel corpus")
    p.add_argument("--max-tokens", type=int, default=100, dest="max_tokens")
    p.add_argument("--ratio", type=float, default=9.0)
    p.add_argument("--alpha-frac", type=float, default=0.5, dest="alpha_frac")
    p.add_argument("in_prefix")
    p.add_argument("out_prefix")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("dedup-eval", help="drop eval pairs that occur in training")
    p.add_argument("train_prefix")
    p.add_argument("eval_prefix")
    p.add_argument("out_prefix")
    p.set_defaults(func=cmd_dedup_eval)

    p = sub.add_parser("split-docs", help="document-consistent train/dev/test split")
    p.add_argument("--fractions", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("in_prefix")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_split_docs)

    p = sub.add_parser("sample", help="uniform per-domain subsample")
    p.add_argument("--per-domain", type=int, required=True, dest="per_domain")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("in_prefix")
    p.add_argument("out_prefix")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("partition", help="split a corpus into per-cluster sub-corpora")
    p.add_argument("--level", choices=corpusprep.PARTITION_LEVELS, default="sentence",
                   help="document: labels are per-doc and broadcast to sentences")
    p.add_argument("--k", type=int, default=None, help="cluster count (default: max label + 1)")
    p.add_argument("labels")
    p.add_argument("in_prefix")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("route", help="route embedded inputs to cluster-specific models")
    p.add_argument("--stream", action="store_true",
                   help="read length-prefixed records on stdin, emit one line per record")
    p.add_argument("model")
    p.add_argument("routing")
    p.add_argument("infile", nargs="?", default=None)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("analyze", help="layer sweep + best-layer tables + PCA bundle")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="override config out_dir")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("adapt", help="cluster a corpus and partition it for fine-tuning")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="override config out_dir")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--level", choices=corpusprep.PARTITION_LEVELS, default=None)
    p.set_defaults(func=cmd_adapt)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainkitError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
