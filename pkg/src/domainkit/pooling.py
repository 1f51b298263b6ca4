"""Sentence-to-document aggregation by group mean, and label broadcasting.

Document vectors are plain arithmetic means of their member sentence
vectors, accumulated in float64 and summed in sentence order, so results
are identical no matter how the work is batched. The inverse direction,
``broadcast_labels``, pushes a document-level cluster assignment back down
onto every member sentence.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .embstore import LEVEL_DOCUMENT, LEVEL_SENTENCE, EmbeddingSet
from .errors import DomainkitError
from .kmeans import ClusterAssignment


class WrongLevelError(DomainkitError):
    pass


class EmptyInputError(DomainkitError):
    pass


class MissingDocumentError(DomainkitError):
    pass


def _majority_domain(domains: np.ndarray) -> int:
    """Most frequent domain_id >= 0; ties -> smallest id; all unknown -> -1."""
    labeled = domains[domains >= 0]
    if len(labeled) == 0:
        return -1
    values, counts = np.unique(labeled, return_counts=True)  # values ascending
    return int(values[np.argmax(counts)])


def pool_documents(sentences: EmbeddingSet) -> EmbeddingSet:
    """Aggregate a sentence-level set into one record per doc_id.

    The output record's vector is the mean of its member sentence vectors,
    its sentence_id is the doc_id, and its domain_id is the majority domain
    among members. Output rows are ordered by ascending doc_id and the
    result carries level="document".
    """
    if sentences.meta.level != LEVEL_SENTENCE:
        raise WrongLevelError(
            f"input level is {sentences.meta.level!r}, expected {LEVEL_SENTENCE!r}"
        )
    n = len(sentences)
    if n == 0:
        raise EmptyInputError("cannot pool an empty set")

    order = np.argsort(sentences.doc_ids, kind="stable")
    doc_sorted = sentences.doc_ids[order]
    starts = np.flatnonzero(np.r_[True, doc_sorted[1:] != doc_sorted[:-1]])
    doc_ids = doc_sorted[starts]
    counts = np.diff(np.r_[starts, n])

    vecs = np.asarray(sentences.vectors, dtype=np.float64)[order]
    sums = np.add.reduceat(vecs, starts, axis=0)
    means = sums / counts[:, None]

    dom_sorted = sentences.domain_ids[order]
    domains = np.empty(len(doc_ids), dtype=np.int32)
    for g, s in enumerate(starts):
        domains[g] = _majority_domain(dom_sorted[s : s + counts[g]])

    return EmbeddingSet(
        sentences.dim,
        doc_ids.astype(np.uint64),
        doc_ids.astype(np.uint64),
        domains,
        means,
        replace(sentences.meta, level=LEVEL_DOCUMENT),
    )


def broadcast_labels(
    doc_assignment: ClusterAssignment, sentences: EmbeddingSet
) -> ClusterAssignment:
    """Give every sentence its document's cluster label (and distance).

    ``doc_assignment.item_ids`` are doc_ids; the result is aligned to
    ``sentences`` order with item_ids = sentence_ids.
    """
    if len(doc_assignment) == 0 and len(sentences) > 0:
        raise MissingDocumentError(
            f"doc_id {int(sentences.doc_ids[0])} has no document-level label"
        )
    order = np.argsort(doc_assignment.item_ids, kind="stable")
    known = doc_assignment.item_ids[order]
    pos = np.searchsorted(known, sentences.doc_ids)
    bad = (pos >= len(known)) | (known[np.minimum(pos, len(known) - 1)] != sentences.doc_ids)
    if bad.any():
        missing = int(sentences.doc_ids[np.flatnonzero(bad)[0]])
        raise MissingDocumentError(f"doc_id {missing} has no document-level label")
    src = order[pos]
    return ClusterAssignment(
        doc_assignment.labels[src],
        sentences.sentence_ids,
        doc_assignment.distances[src],
    )
