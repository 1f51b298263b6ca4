"""Shared fixture builders and the acceptance-line reporter."""
import numpy as np
import pytest

from domainkit import embstore

ACCEPTANCE_LINES: list[str] = []


def note_acceptance(name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def make_meta(**overrides) -> embstore.EmbeddingMeta:
    base = dict(
        model_name="test-encoder",
        layer=4,
        level=embstore.LEVEL_SENTENCE,
        language="en",
        domain_names={},
    )
    base.update(overrides)
    return embstore.EmbeddingMeta(**base)


def make_set(
    vectors,
    sentence_ids=None,
    doc_ids=None,
    domain_ids=None,
    meta=None,
) -> embstore.EmbeddingSet:
    vectors = np.asarray(vectors)
    n = len(vectors)
    if sentence_ids is None:
        sentence_ids = np.arange(n, dtype=np.uint64)
    if doc_ids is None:
        doc_ids = np.asarray(sentence_ids, dtype=np.uint64)
    if domain_ids is None:
        domain_ids = np.zeros(n, dtype=np.int32)
    return embstore.EmbeddingSet(
        dim=vectors.shape[1],
        sentence_ids=np.asarray(sentence_ids, dtype=np.uint64),
        doc_ids=np.asarray(doc_ids, dtype=np.uint64),
        domain_ids=np.asarray(domain_ids, dtype=np.int32),
        vectors=vectors,
        meta=meta if meta is not None else make_meta(),
    )


def planted_clusters(n, dim, k, seed, scale=20.0, noise=1.0, dtype=np.float32):
    """n points around k well-separated centers; returns (vectors, labels).

    Centers are unit directions scaled by ``scale``, so pairwise center
    distances are >= 10 x the per-coordinate noise for the defaults.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(k, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= scale
    labels = np.repeat(np.arange(k), -(-n // k))[:n].astype(np.int32)
    vectors = centers[labels] + noise * rng.normal(size=(n, dim))
    return vectors.astype(dtype), labels


@pytest.fixture
def small_set():
    vectors, labels = planted_clusters(40, 6, 2, seed=3)
    return make_set(
        vectors,
        doc_ids=np.arange(40, dtype=np.uint64) // 4,
        domain_ids=labels,
        meta=make_meta(domain_names={0: "news", 1: "law"}),
    )
