"""Runtime routing: send an embedded sentence or document to the model
fine-tuned for its cluster.

The router is stateless between calls and consumes embeddings, not raw
text; an extractor process can be piped into the streaming entry point.
Cluster lookup uses the exact assignment semantics of the fitted k-means
model (same normalization, ties to the lowest centroid index), with an
optional default model for clusters missing from the table.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import kmeans
from .embstore import DimensionMismatchError, EmbeddingRecord, EmbeddingSet
from .errors import DomainkitError
from .kmeans import KMeansModel


class UnmappedClusterError(DomainkitError):
    pass


class EmptyDocumentError(DomainkitError):
    pass


@dataclass
class RoutingTable:
    model_for_cluster: dict[int, str]
    default_model: str | None = None

    def lookup(self, cluster: int) -> str:
        model_id = self.model_for_cluster.get(cluster, self.default_model)
        if model_id is None:
            raise UnmappedClusterError(
                f"cluster {cluster} has no model and no default is configured"
            )
        return model_id

    def validate_for(self, k: int) -> None:
        if self.default_model is None:
            missing = [c for c in range(k) if c not in self.model_for_cluster]
            if missing:
                raise UnmappedClusterError(
                    f"clusters {missing} unmapped and no default model set"
                )

    def to_json_dict(self) -> dict:
        return {
            "model_for_cluster": {str(c): m for c, m in self.model_for_cluster.items()},
            "default_model": self.default_model,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RoutingTable":
        return cls(
            model_for_cluster={int(c): str(m) for c, m in d["model_for_cluster"].items()},
            default_model=d.get("default_model"),
        )


def save_routing_table(table: RoutingTable, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(table.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def load_routing_table(path) -> RoutingTable:
    with open(path, encoding="utf-8") as f:
        try:
            return RoutingTable.from_json_dict(json.load(f))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DomainkitError(f"{path}: malformed routing table ({e})") from e


def _assign_one(model: KMeansModel, vector: np.ndarray) -> tuple[int, float]:
    vector = np.asarray(vector)
    if vector.shape != (model.dim,):
        raise DimensionMismatchError(
            f"item vector has shape {vector.shape}, model dim is {model.dim}"
        )
    a = kmeans.assign(model, vector[None, :])
    return int(a.labels[0]), float(a.distances[0])


def route(
    model: KMeansModel, table: RoutingTable, item: EmbeddingRecord
) -> tuple[int, str, float]:
    """Route one embedded sentence; returns (cluster_id, model_id, sqdist)."""
    cluster, sqdist = _assign_one(model, item.vector)
    return cluster, table.lookup(cluster), sqdist


def route_document(
    model: KMeansModel, table: RoutingTable, sentences: list[EmbeddingRecord]
) -> tuple[int, str]:
    """Mean-pool sentence vectors, then route the pooled document vector."""
    if not sentences:
        raise EmptyDocumentError("cannot route an empty document")
    vectors = [np.asarray(s.vector, dtype=np.float64) for s in sentences]
    dims = {v.shape for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatchError(f"sentences have mixed dims {sorted(dims)}")
    pooled = np.mean(vectors, axis=0)
    cluster, _ = _assign_one(model, pooled)
    return cluster, table.lookup(cluster)


def route_batch(
    model: KMeansModel, table: RoutingTable, data: EmbeddingSet
) -> list[tuple[int, int, str, float]]:
    """Route a whole set; returns (item_id, cluster, model_id, sqdist) rows."""
    assignment = kmeans.assign(model, data)
    return [
        (
            int(assignment.item_ids[i]),
            int(assignment.labels[i]),
            table.lookup(int(assignment.labels[i])),
            float(assignment.distances[i]),
        )
        for i in range(len(assignment))
    ]


# ---------------------------------------------------------------------------
# streaming mode: length-prefixed binary records on stdin, TSV lines out

_PREFIX = struct.Struct("<I")
_FIXED = struct.Struct("<QQi")  # sentence_id, doc_id, domain_id


def pack_stream_record(record: EmbeddingRecord) -> bytes:
    """Encode one record for the streaming route: u32 length prefix, then
    the embedding-file record layout (ids + f32 vector)."""
    vec = np.asarray(record.vector, dtype="<f4")
    body = (
        _FIXED.pack(record.sentence_id, record.doc_id, record.domain_id)
        + vec.tobytes()
    )
    return _PREFIX.pack(len(body)) + body


def _read_exact(stream, size: int) -> bytes | None:
    buf = stream.read(size)
    if buf is None or len(buf) == 0:
        return None
    while len(buf) < size:
        more = stream.read(size - len(buf))
        if not more:
            raise DomainkitError("stream truncated mid-record")
        buf += more
    return buf


def route_stream(model: KMeansModel, table: RoutingTable, stdin, stdout) -> int:
    """Route length-prefixed records from ``stdin``; one flushed TSV line
    (item_id, cluster, model_id, sqdist) per record. Returns record count."""
    count = 0
    while True:
        head = _read_exact(stdin, _PREFIX.size)
        if head is None:
            return count
        (length,) = _PREFIX.unpack(head)
        if length < _FIXED.size or (length - _FIXED.size) % 4 != 0:
            raise DomainkitError(f"bad stream record length {length}")
        body = _read_exact(stdin, length)
        if body is None:
            raise DomainkitError("stream truncated mid-record")
        sid, did, dom = _FIXED.unpack(body[: _FIXED.size])
        vec = np.frombuffer(body[_FIXED.size :], dtype="<f4")
        cluster, model_id, sqdist = route(
            model, table, EmbeddingRecord(sid, did, dom, vec)
        )
        stdout.write(f"{sid}\t{cluster}\t{model_id}\t{sqdist!r}\n")
        stdout.flush()
        count += 1
