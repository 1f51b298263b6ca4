"""Command-line interface: subcommands, pipelines, exit codes, reruns."""
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from domainkit import cli, corpusprep, embstore, kmeans, router
from domainkit.corpusprep import ParallelCorpus, SentencePair

from conftest import make_meta, make_set, planted_clusters


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def _write_layer_files(tmp_path, n=240, dim=12, k=3, layers=(2, 6)):
    paths = []
    doc_ids = np.arange(n, dtype=np.uint64) // 8
    for layer in layers:
        vectors, labels = planted_clusters(n, dim, k, seed=100 + layer)
        emb = make_set(
            vectors,
            doc_ids=doc_ids,
            domain_ids=labels,
            meta=make_meta(layer=layer, domain_names={i: f"dom{i}" for i in range(k)}),
        )
        p = tmp_path / f"layer{layer}.emb"
        embstore.write_embeddings(emb, p)
        paths.append(p)
    return paths


def _write_corpus_for(emb_path, prefix):
    emb = embstore.read_embeddings(emb_path)
    pairs = [
        SentencePair(
            int(s), int(d), int(dom),
            f"source text number {int(s)}", f"target text number {int(s)}",
        )
        for s, d, dom in zip(emb.sentence_ids, emb.doc_ids, emb.domain_ids)
    ]
    corpusprep.write_corpus_prefix(ParallelCorpus(pairs), prefix)


def _tree_hashes(root):
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_validate_ok_and_broken(tmp_path, capsys):
    [path, _] = _write_layer_files(tmp_path)
    assert run_cli("validate", path) == 0
    assert "ok" in capsys.readouterr().out
    raw = path.read_bytes()
    path.write_bytes(raw[:-7])
    assert run_cli("validate", path) == 1
    assert "truncated" in capsys.readouterr().err


def test_missing_input_exits_1(tmp_path, capsys):
    assert run_cli("validate", tmp_path / "nope.emb") == 1
    assert run_cli("kmeans-fit", "--k", 2, tmp_path / "nope.emb", tmp_path / "m.json") == 1


def test_internal_error_exits_2(tmp_path, monkeypatch, capsys):
    [path, _] = _write_layer_files(tmp_path)
    def boom(*a, **kw):
        raise RuntimeError("wired to fail")
    monkeypatch.setattr(cli.embstore, "validate_file", boom)
    assert run_cli("validate", path) == 2


def test_fit_assign_purity_confusion_pca(tmp_path, capsys):
    [l2, _] = _write_layer_files(tmp_path)
    model = tmp_path / "model.json"
    labels = tmp_path / "labels.tsv"
    assert run_cli("kmeans-fit", "--k", 3, "--restarts", 4, "--seed", 1, l2, model) == 0
    assert run_cli("kmeans-assign", model, l2, labels) == 0
    report = tmp_path / "purity.json"
    assert run_cli("purity", model, l2, report) == 0
    doc = json.loads(report.read_text())
    assert doc["purity_majority"] == 1.0
    assert doc["purity_matched"] == 1.0
    # purity accepts a labels file too and must agree
    report2 = tmp_path / "purity2.json"
    assert run_cli("purity", labels, l2, report2) == 0
    assert json.loads(report2.read_text()) == doc
    table = tmp_path / "confusion.tsv"
    assert run_cli("confusion", labels, l2, table) == 0
    header = table.read_text().splitlines()[0].split("\t")
    assert header == ["cluster", "dom0", "dom1", "dom2"]
    proj = tmp_path / "pca.tsv"
    assert run_cli("pca", "--dims", 2, "--seed", 0, l2, proj) == 0
    meta = json.loads((tmp_path / "pca.tsv.meta.json").read_text())
    assert len(meta["explained_variance_ratio"]) == 2


def test_pool_docs_cli(tmp_path, capsys):
    [l2, _] = _write_layer_files(tmp_path)
    out = tmp_path / "docs.emb"
    assert run_cli("pool-docs", l2, out) == 0
    docs = embstore.read_embeddings(out)
    assert docs.meta.level == embstore.LEVEL_DOCUMENT
    assert len(docs) == 30


def test_layer_sweep_cli(tmp_path, capsys):
    paths = _write_layer_files(tmp_path)
    report = tmp_path / "sweep.json"
    assert run_cli(
        "layer-sweep", "--k", 3, "--restarts", 3, "--seed", 2, *paths, report
    ) == 0
    doc = json.loads(report.read_text())
    assert [layer["layer"] for layer in doc["layers"]] == [2, 6]
    assert all(layer["purity_majority"] == 1.0 for layer in doc["layers"])
    assert [layer["file"] for layer in doc["layers"]] == [str(p) for p in paths]


def test_analyze_bundle_matches_manual_composition(tmp_path, capsys):
    paths = _write_layer_files(tmp_path)
    config = {
        "files": [str(p) for p in paths],
        "k": 3,
        "restarts": 4,
        "seed": 5,
        "pca_dims": 2,
        "out_dir": str(tmp_path / "bundle"),
    }
    config_path = tmp_path / "analyze.json"
    config_path.write_text(json.dumps(config))
    assert run_cli("analyze", config_path) == 0

    bundle = tmp_path / "bundle"
    report = json.loads((bundle / "report.json").read_text())
    best_file = report["best"]["file"]

    manual = tmp_path / "manual"
    manual.mkdir()
    assert run_cli("kmeans-fit", "--k", 3, "--restarts", 4, "--seed", 5,
                   best_file, manual / "model.json") == 0
    assert run_cli("kmeans-assign", manual / "model.json", best_file,
                   manual / "labels.tsv") == 0
    assert run_cli("confusion", manual / "labels.tsv", best_file,
                   manual / "confusion.tsv") == 0
    assert run_cli("pca", "--dims", 2, "--seed", 5, best_file, manual / "pca.tsv") == 0

    best = report["best"]["index"]
    assert (bundle / "model.json").read_bytes() == (manual / "model.json").read_bytes()
    assert (bundle / "labels.tsv").read_bytes() == (manual / "labels.tsv").read_bytes()
    assert (bundle / f"layer_{best}.confusion.tsv").read_bytes() == (
        manual / "confusion.tsv"
    ).read_bytes()
    assert (bundle / "pca.tsv").read_bytes() == (manual / "pca.tsv").read_bytes()
    run_doc = json.loads((bundle / "run.json").read_text())
    assert run_doc["pipeline"] == "analyze"
    assert set(run_doc["inputs"]) >= {str(p) for p in paths}


def test_analyze_rerun_is_byte_identical(tmp_path, capsys):
    paths = _write_layer_files(tmp_path)
    out_dir = tmp_path / "bundle"
    config_path = tmp_path / "analyze.json"
    config_path.write_text(json.dumps({
        "files": [str(p) for p in paths], "k": 3, "restarts": 3,
        "seed": 1, "out_dir": str(out_dir),
    }))
    assert run_cli("analyze", config_path) == 0
    first = _tree_hashes(out_dir)
    assert first
    for f in out_dir.iterdir():
        f.unlink()
    out_dir.rmdir()
    assert run_cli("analyze", config_path) == 0
    assert _tree_hashes(out_dir) == first


def test_adapt_pipeline_sentence_level(tmp_path, capsys):
    [l2, _] = _write_layer_files(tmp_path)
    _write_corpus_for(l2, tmp_path / "corp")
    out_dir = tmp_path / "adapted"
    config_path = tmp_path / "adapt.json"
    config_path.write_text(json.dumps({
        "corpus_prefix": str(tmp_path / "corp"),
        "embeddings": str(l2),
        "level": "sentence",
        "k": 3, "restarts": 3, "seed": 2,
        "out_dir": str(out_dir),
    }))
    assert run_cli("adapt", config_path) == 0
    manifest = json.loads((out_dir / "clusters" / "manifest.json").read_text())
    assert manifest["level"] == "sentence"
    assert sum(c["count"] for c in manifest["clusters"].values()) == 240
    table = router.load_routing_table(out_dir / "routing.json")
    table.validate_for(3)
    # partitions are pure because the domains are well separated
    for c in range(3):
        sub = corpusprep.read_corpus_prefix(out_dir / "clusters" / f"cluster_{c}")
        assert len({p.domain_id for p in sub.pairs}) == 1


def test_adapt_pipeline_document_level_keeps_docs_together(tmp_path, capsys):
    [l2, _] = _write_layer_files(tmp_path)
    _write_corpus_for(l2, tmp_path / "corp")
    out_dir = tmp_path / "adapted_doc"
    config_path = tmp_path / "adapt.json"
    config_path.write_text(json.dumps({
        "corpus_prefix": str(tmp_path / "corp"),
        "embeddings": str(l2),
        "level": "document",
        "k": 3, "restarts": 3, "seed": 2,
        "out_dir": str(out_dir),
    }))
    assert run_cli("adapt", config_path) == 0
    seen = {}
    for c in range(3):
        sub = corpusprep.read_corpus_prefix(out_dir / "clusters" / f"cluster_{c}")
        for p in sub.pairs:
            assert seen.setdefault(p.doc_id, c) == c


def test_adapt_rerun_is_byte_identical(tmp_path, capsys):
    [l2, _] = _write_layer_files(tmp_path)
    _write_corpus_for(l2, tmp_path / "corp")
    out_dir = tmp_path / "adapted"
    config_path = tmp_path / "adapt.json"
    config_path.write_text(json.dumps({
        "corpus_prefix": str(tmp_path / "corp"),
        "embeddings": str(l2),
        "level": "document",
        "k": 3, "restarts": 2, "seed": 0,
        "out_dir": str(out_dir),
    }))
    assert run_cli("adapt", config_path) == 0
    first = _tree_hashes(out_dir)
    assert any(name.startswith("clusters") for name in first)
    import shutil

    shutil.rmtree(out_dir)
    assert run_cli("adapt", config_path) == 0
    assert _tree_hashes(out_dir) == first
    run_doc = (out_dir / "run.json").read_text()
    for word in ("time", "date", "stamp"):
        assert word not in run_doc.lower()


def test_adapt_rejects_missing_embeddings_for_corpus(tmp_path, capsys):
    [l2, _] = _write_layer_files(tmp_path)
    pairs = [SentencePair(999999, 0, 0, "unknown", "sentence")]
    corpusprep.write_corpus_prefix(ParallelCorpus(pairs), tmp_path / "corp")
    config_path = tmp_path / "adapt.json"
    config_path.write_text(json.dumps({
        "corpus_prefix": str(tmp_path / "corp"),
        "embeddings": str(l2),
        "level": "sentence", "k": 2,
        "out_dir": str(tmp_path / "out"),
    }))
    assert run_cli("adapt", config_path) == 1
    assert "no embedding" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_adapt_rejects_doc_id_disagreement(tmp_path, capsys):
    [l2, _] = _write_layer_files(tmp_path)
    emb = embstore.read_embeddings(l2)
    pairs = [
        SentencePair(int(s), int(d) + 1, int(dom), "src", "tgt")
        for s, d, dom in zip(emb.sentence_ids, emb.doc_ids, emb.domain_ids)
    ]
    corpusprep.write_corpus_prefix(ParallelCorpus(pairs), tmp_path / "corp")
    config_path = tmp_path / "adapt.json"
    config_path.write_text(json.dumps({
        "corpus_prefix": str(tmp_path / "corp"),
        "embeddings": str(l2),
        "level": "document", "k": 2,
        "out_dir": str(tmp_path / "out"),
    }))
    assert run_cli("adapt", config_path) == 1
    assert "doc_id" in capsys.readouterr().err


def test_clean_split_sample_dedup_cli(tmp_path, capsys):
    pairs = []
    sid = 0
    for doc in range(9):
        for _ in range(4):
            pairs.append(SentencePair(
                sid, doc, doc % 3,
                f"steady source line {sid}", f"steady target line {sid}",
            ))
            sid += 1
    pairs.append(SentencePair(sid, 0, 0, "", "empty source case"))
    corpusprep.write_corpus_prefix(ParallelCorpus(pairs), tmp_path / "raw")

    assert run_cli("clean", tmp_path / "raw", tmp_path / "clean") == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"kept": 36, "discarded": {
        "empty": 1, "too_long": 0, "length_ratio": 0, "non_alphabetic": 0}}

    assert run_cli("split-docs", "--fractions", "0.5,0.25,0.25", "--seed", 4,
                   tmp_path / "clean", tmp_path / "splits") == 0
    capsys.readouterr()
    train = corpusprep.read_corpus_prefix(tmp_path / "splits" / "train")
    dev = corpusprep.read_corpus_prefix(tmp_path / "splits" / "dev")
    test = corpusprep.read_corpus_prefix(tmp_path / "splits" / "test")
    assert len(train) + len(dev) + len(test) == 36

    assert run_cli("sample", "--per-domain", 2, "--seed", 1,
                   tmp_path / "clean", tmp_path / "sampled") == 0
    sampled = corpusprep.read_corpus_prefix(tmp_path / "sampled")
    assert len(sampled) == 6

    assert run_cli("dedup-eval", tmp_path / "clean", tmp_path / "sampled",
                   tmp_path / "deduped") == 0
    assert len(corpusprep.read_corpus_prefix(tmp_path / "deduped")) == 0


def test_partition_cli_sentence_and_document(tmp_path, capsys):
    [l2, _] = _write_layer_files(tmp_path)
    _write_corpus_for(l2, tmp_path / "corp")
    model = tmp_path / "model.json"
    labels = tmp_path / "labels.tsv"
    run_cli("kmeans-fit", "--k", 3, "--restarts", 3, "--seed", 1, l2, model)
    run_cli("kmeans-assign", model, l2, labels)
    assert run_cli("partition", labels, tmp_path / "corp", tmp_path / "parts") == 0
    manifest = json.loads((tmp_path / "parts" / "manifest.json").read_text())
    assert manifest["level"] == "sentence"

    docs_emb = tmp_path / "docs.emb"
    run_cli("pool-docs", l2, docs_emb)
    doc_model = tmp_path / "doc_model.json"
    doc_labels = tmp_path / "doc_labels.tsv"
    run_cli("kmeans-fit", "--k", 3, "--restarts", 3, "--seed", 1, docs_emb, doc_model)
    run_cli("kmeans-assign", doc_model, docs_emb, doc_labels)
    assert run_cli("partition", "--level", "document", doc_labels,
                   tmp_path / "corp", tmp_path / "doc_parts") == 0
    manifest = json.loads((tmp_path / "doc_parts" / "manifest.json").read_text())
    assert manifest["level"] == "document"
    assert sum(c["count"] for c in manifest["clusters"].values()) == 240


def test_route_cli_batch(tmp_path, capsys):
    [l2, _] = _write_layer_files(tmp_path)
    model = tmp_path / "model.json"
    run_cli("kmeans-fit", "--k", 3, "--restarts", 3, "--seed", 1, l2, model)
    routing = tmp_path / "routing.json"
    router.save_routing_table(
        router.RoutingTable({0: "m0", 1: "m1", 2: "m2"}, None), routing
    )
    capsys.readouterr()
    assert run_cli("route", model, routing, l2) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "item_id\tcluster\tmodel_id\tsqdist"
    assert len(lines) == 241
    assert run_cli("route", model, routing) == 1  # no input, no --stream


def test_route_stream_via_subprocess(tmp_path):
    [l2, _] = _write_layer_files(tmp_path)
    model = tmp_path / "model.json"
    run_cli("kmeans-fit", "--k", 3, "--restarts", 3, "--seed", 1, l2, model)
    routing = tmp_path / "routing.json"
    router.save_routing_table(
        router.RoutingTable({0: "m0", 1: "m1", 2: "m2"}, None), routing
    )
    emb = embstore.read_embeddings(l2)
    records = list(emb.records())[:6]
    blob = b"".join(router.pack_stream_record(r) for r in records)
    proc = subprocess.run(
        [sys.executable, "-m", "domainkit.cli", "route", "--stream",
         str(model), str(routing)],
        input=blob, capture_output=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.decode().splitlines()
    assert len(lines) == 6
    assert int(lines[0].split("\t")[0]) == records[0].sentence_id


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("--version")
    assert exc.value.code == 0
    assert "domainkit" in capsys.readouterr().out
