"""Clustering quality against oracle domains: contingency tables, purity,
column-percentage confusion tables, and per-layer purity sweeps.

Two purity variants are reported. ``purity_majority`` aligns every cluster
to its most frequent domain independently (several clusters may claim the
same domain); ``purity_matched`` restricts the alignment to a one-to-one
cluster-to-domain matching solved by the Hungarian method and is never
larger. The matched variant also yields the cluster->domain map used to
order confusion-table rows for display.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kmeans
from .embstore import EmbeddingSet, read_embeddings
from .errors import DomainkitError
from .kmeans import ClusterAssignment, KMeansConfig


class UnlabeledItemError(DomainkitError):
    pass


class IdMismatchError(DomainkitError):
    pass


class EmptyTableError(DomainkitError):
    pass


class EmptyDomainColumnError(DomainkitError):
    pass


class InconsistentItemSetsError(DomainkitError):
    pass


@dataclass
class ContingencyTable:
    counts: np.ndarray  # (k, D) int64
    cluster_ids: np.ndarray  # (k,)
    domain_ids: np.ndarray  # (D,)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if (self.counts < 0).any():
            raise DomainkitError("contingency counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class PurityReport:
    purity_majority: float
    purity_matched: float
    matching: dict[int, int]  # cluster_id -> domain_id, one-to-one
    table: ContingencyTable
    extra: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "purity_majority": self.purity_majority,
            "purity_matched": self.purity_matched,
            "matching": {str(c): int(d) for c, d in self.matching.items()},
            "table": {
                "cluster_ids": [int(c) for c in self.table.cluster_ids],
                "domain_ids": [int(d) for d in self.table.domain_ids],
                "counts": [[int(v) for v in row] for row in self.table.counts],
            },
            **self.extra,
        }


def contingency(assignment: ClusterAssignment, data: EmbeddingSet) -> ContingencyTable:
    """Count cluster x domain co-occurrences, aligned by item_id.

    Every item must carry an oracle domain (domain_id >= 0) and the
    assignment must cover exactly the items in ``data``.
    """
    if len(assignment) != len(data):
        raise IdMismatchError(
            f"assignment has {len(assignment)} items, data has {len(data)}"
        )
    if len(data) and data.domain_ids.min() < 0:
        bad = int(data.sentence_ids[np.argmin(data.domain_ids)])
        raise UnlabeledItemError(f"item {bad} has no oracle domain (domain_id=-1)")

    order = np.argsort(assignment.item_ids, kind="stable")
    sorted_ids = assignment.item_ids[order]
    pos = np.searchsorted(sorted_ids, data.sentence_ids)
    if len(data) and (
        (pos >= len(sorted_ids)).any()
        or (sorted_ids[np.minimum(pos, len(sorted_ids) - 1)] != data.sentence_ids).any()
    ):
        raise IdMismatchError("assignment item_ids do not cover the data item_ids")
    labels = assignment.labels[order][pos]

    k = int(labels.max()) + 1 if len(labels) else 0
    domain_ids, dom_index = np.unique(data.domain_ids, return_inverse=True)
    counts = np.bincount(
        labels.astype(np.int64) * len(domain_ids) + dom_index,
        minlength=k * len(domain_ids),
    ).reshape(k, len(domain_ids))
    return ContingencyTable(counts, np.arange(k), domain_ids)


def purity(table: ContingencyTable) -> PurityReport:
    """Majority and one-to-one matched purity for a contingency table.

    When the table is rectangular the matching covers min(k, D) pairs.
    """
    total = table.total
    if total == 0:
        raise EmptyTableError("contingency table has no items")
    majority = float(table.counts.max(axis=1).sum()) / total
    rows, cols = linear_sum_assignment(-table.counts)
    matched = float(table.counts[rows, cols].sum()) / total
    matching = {
        int(table.cluster_ids[r]): int(table.domain_ids[c]) for r, c in zip(rows, cols)
    }
    return PurityReport(majority, matched, matching, table)


def confusion_percent(table: ContingencyTable) -> np.ndarray:
    """Normalize each domain column to sum to 100."""
    col_sums = table.counts.sum(axis=0)
    if (col_sums == 0).any():
        empty = int(table.domain_ids[np.argmin(col_sums)])
        raise EmptyDomainColumnError(f"domain {empty} has no items")
    return table.counts / col_sums[None, :] * 100.0


def layer_sweep(files, config: KMeansConfig) -> list[PurityReport]:
    """Fit + assign + purity per embedding file, preserving input order.

    All files must describe the same items (identical sentence_ids and
    domain_ids); they may differ in vector dimension.
    """
    reports: list[PurityReport] = []
    ref_ids = ref_domains = None
    for path in files:
        data = read_embeddings(path, mmap=True)
        if ref_ids is None:
            ref_ids, ref_domains = data.sentence_ids, data.domain_ids
        elif not (
            np.array_equal(ref_ids, data.sentence_ids)
            and np.array_equal(ref_domains, data.domain_ids)
        ):
            raise InconsistentItemSetsError(
                f"{path}: item ids/domains differ from the first file"
            )
        model = kmeans.fit(data, config)
        report = purity(contingency(kmeans.assign(model, data), data))
        report.extra["file"] = str(path)
        report.extra["layer"] = data.meta.layer
        report.extra["inertia"] = model.inertia
        reports.append(report)
    return reports


def display_row_order(table: ContingencyTable, matching: dict[int, int]) -> np.ndarray:
    """Row permutation placing each cluster on its matched domain's row.

    Matched clusters are ordered by their matched domain's column position;
    unmatched clusters follow in cluster-id order.
    """
    dom_pos = {int(d): i for i, d in enumerate(table.domain_ids)}
    matched = sorted(matching, key=lambda c: dom_pos[matching[c]])
    rest = [int(c) for c in table.cluster_ids if int(c) not in matching]
    cluster_pos = {int(c): i for i, c in enumerate(table.cluster_ids)}
    return np.asarray([cluster_pos[c] for c in matched + rest], dtype=np.int64)


def write_table_tsv(
    matrix: np.ndarray,
    table: ContingencyTable,
    path,
    domain_names: dict[int, str] | None = None,
    row_order: np.ndarray | None = None,
) -> None:
    """Write a cluster x domain matrix as TSV with labeled axes."""
    names = domain_names or {}
    cols = [names.get(int(d), f"domain_{int(d)}") for d in table.domain_ids]
    order = row_order if row_order is not None else np.arange(len(table.cluster_ids))
    as_int = np.issubdtype(np.asarray(matrix).dtype, np.integer)
    with open(path, "w", encoding="utf-8") as f:
        f.write("cluster\t" + "\t".join(cols) + "\n")
        for r in order:
            cells = (str(int(v)) if as_int else repr(float(v)) for v in matrix[r])
            f.write(f"cluster_{int(table.cluster_ids[r])}\t" + "\t".join(cells) + "\n")
