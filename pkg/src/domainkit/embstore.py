"""Binary embedding file format: writer, reader, streaming access, validation.

Layout (little-endian throughout):

    header, 21 bytes:
        magic    4 bytes  b"EMB1"
        version  u16      currently 1
        dim      u32      vector length, > 0
        count    u64      number of records
        dtype    u8       0 = 32-bit float (only supported payload type)
        reserved u16      0
    record, packed, stride = 20 + 4*dim bytes:
        sentence_id  u64
        doc_id       u64
        domain_id    i32   -1 when the oracle domain is unknown
        vector       dim consecutive f32

Fixed-stride records allow O(1) seeks and memory-mapped scans. Metadata
(model name, layer, level, language, domain names) travels in a UTF-8 JSON
sidecar at ``<path>.meta.json`` so the binary stays stream-scannable.

Vectors are stored as f32; in-memory sets may hold wider floats (e.g. f64
document means) and are narrowed on write. Readers are read-only after open
and safe to share across threads.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DomainkitError

MAGIC = b"EMB1"
VERSION = 1
DTYPE_F32 = 0
_HEADER = struct.Struct("<4sHIQBH")
HEADER_SIZE = _HEADER.size  # 21

LEVEL_SENTENCE = "token-pooled-sentence"
LEVEL_DOCUMENT = "document"
LEVELS = (LEVEL_SENTENCE, LEVEL_DOCUMENT)

# rows per block for chunked scans; keeps per-block buffers small
_SCAN_BLOCK_BYTES = 1 << 25


class EmbeddingFormatError(DomainkitError):
    """A file does not conform to the embedding format."""


class BadMagicError(EmbeddingFormatError):
    pass


class UnsupportedVersionError(EmbeddingFormatError):
    pass


class TruncatedFileError(EmbeddingFormatError):
    def __init__(self, message: str, record_index: int):
        super().__init__(message)
        self.record_index = record_index


class InvariantViolationError(EmbeddingFormatError):
    """A record violates a header/record invariant; carries the record index."""

    def __init__(self, message: str, record_index: int = -1):
        super().__init__(message)
        self.record_index = record_index


class DimensionMismatchError(DomainkitError):
    pass


class NonFiniteValueError(DomainkitError):
    pass


def record_dtype(dim: int) -> np.dtype:
    """Packed numpy dtype of one record for the given vector length."""
    return np.dtype(
        [
            ("sentence_id", "<u8"),
            ("doc_id", "<u8"),
            ("domain_id", "<i4"),
            ("vector", "<f4", (dim,)),
        ]
    )


@dataclass
class EmbeddingMeta:
    """Sidecar metadata. ``layer`` 0 means the fixed embedding layer."""

    model_name: str = ""
    layer: int = 0
    level: str = LEVEL_SENTENCE
    language: str = ""
    domain_names: dict[int, str] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "model_name": self.model_name,
            "layer": self.layer,
            "level": self.level,
            "language": self.language,
            "domain_names": {str(k): v for k, v in self.domain_names.items()},
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EmbeddingMeta":
        return cls(
            model_name=d.get("model_name", ""),
            layer=int(d.get("layer", 0)),
            level=d.get("level", LEVEL_SENTENCE),
            language=d.get("language", ""),
            domain_names={int(k): v for k, v in d.get("domain_names", {}).items()},
        )


@dataclass
class EmbeddingRecord:
    sentence_id: int
    doc_id: int
    domain_id: int
    vector: np.ndarray


class EmbeddingSet:
    """Columnar container for embedding records.

    Stores parallel arrays rather than record objects so that million-row
    sets stay cheap; ``records()`` gives the record-at-a-time view.
    ``vectors`` may be any float dtype in memory (and may be a read-only
    memmap view for sets opened with ``mmap=True``).
    """

    def __init__(
        self,
        dim: int,
        sentence_ids,
        doc_ids,
        domain_ids,
        vectors,
        meta: EmbeddingMeta | None = None,
    ):
        self.dim = int(dim)
        self.sentence_ids = np.asarray(sentence_ids, dtype=np.uint64)
        self.doc_ids = np.asarray(doc_ids, dtype=np.uint64)
        self.domain_ids = np.asarray(domain_ids, dtype=np.int32)
        self.vectors = vectors if isinstance(vectors, np.ndarray) else np.asarray(vectors)
        self.meta = meta if meta is not None else EmbeddingMeta()

    def __len__(self) -> int:
        return len(self.sentence_ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.sentence_ids, other.sentence_ids)
            and np.array_equal(self.doc_ids, other.doc_ids)
            and np.array_equal(self.domain_ids, other.domain_ids)
            and self.vectors.dtype == other.vectors.dtype
            and np.array_equal(self.vectors, other.vectors)
            and self.meta == other.meta
        )

    def records(self) -> Iterator[EmbeddingRecord]:
        for i in range(len(self)):
            yield EmbeddingRecord(
                int(self.sentence_ids[i]),
                int(self.doc_ids[i]),
                int(self.domain_ids[i]),
                self.vectors[i],
            )

    @classmethod
    def from_records(
        cls, records, dim: int, meta: EmbeddingMeta | None = None
    ) -> "EmbeddingSet":
        records = list(records)
        n = len(records)
        sids = np.empty(n, dtype=np.uint64)
        dids = np.empty(n, dtype=np.uint64)
        doms = np.empty(n, dtype=np.int32)
        vecs = np.empty((n, dim), dtype=np.float32)
        for i, r in enumerate(records):
            v = np.asarray(r.vector)
            if v.shape != (dim,):
                raise DimensionMismatchError(
                    f"record {i}: vector length {v.shape} does not match dim {dim}"
                )
            sids[i], dids[i], doms[i] = r.sentence_id, r.doc_id, r.domain_id
            vecs[i] = v
        return cls(dim, sids, dids, doms, vecs, meta)

    def validate(self) -> None:
        """Raise if any container invariant is violated."""
        if self.dim <= 0:
            raise InvariantViolationError(f"dim must be positive, got {self.dim}")
        n = len(self)
        if not (len(self.doc_ids) == len(self.domain_ids) == n):
            raise InvariantViolationError("id column lengths disagree")
        if self.vectors.shape != (n, self.dim):
            raise DimensionMismatchError(
                f"vectors shape {self.vectors.shape} does not match ({n}, {self.dim})"
            )
        _check_finite_blocked(self.vectors)
        _check_unique_sentence_ids(self.sentence_ids)
        if self.meta.level not in LEVELS:
            raise InvariantViolationError(f"unknown level {self.meta.level!r}")
        if self.meta.domain_names:
            present = np.unique(self.domain_ids)
            for d in present[present >= 0].tolist():
                if d not in self.meta.domain_names:
                    raise InvariantViolationError(
                        f"domain_id {d} has no entry in domain_names"
                    )


def _check_finite_blocked(vectors: np.ndarray, base_index: int = 0) -> None:
    n = len(vectors)
    if n == 0:
        return
    step = max(1, _SCAN_BLOCK_BYTES // max(1, vectors.shape[1] * vectors.itemsize))
    for s in range(0, n, step):
        block = vectors[s : s + step]
        finite = np.isfinite(block)
        if not finite.all():
            i, j = np.argwhere(~finite)[0]
            raise NonFiniteValueError(
                f"non-finite value at record {base_index + s + int(i)}, component {int(j)}"
            )


def _check_unique_sentence_ids(sentence_ids: np.ndarray) -> None:
    if len(sentence_ids) != len(np.unique(sentence_ids)):
        order = np.argsort(sentence_ids, kind="stable")
        sorted_ids = sentence_ids[order]
        pos = int(np.flatnonzero(sorted_ids[1:] == sorted_ids[:-1])[0])
        dup_index = int(max(order[pos], order[pos + 1]))
        raise InvariantViolationError(
            f"duplicate sentence_id {int(sorted_ids[pos])} at record {dup_index}",
            record_index=dup_index,
        )


def meta_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_embeddings(emb: EmbeddingSet, path) -> None:
    """Write a set to ``path``; vectors are narrowed to f32 on disk.

    Also writes the JSON metadata sidecar at ``<path>.meta.json``.
    """
    emb.validate()
    path = Path(path)
    n = len(emb)
    header = _HEADER.pack(MAGIC, VERSION, emb.dim, n, DTYPE_F32, 0)
    dt = record_dtype(emb.dim)
    with open(path, "wb") as f:
        f.write(header)
        step = max(1, _SCAN_BLOCK_BYTES // dt.itemsize)
        for s in range(0, n, step):
            e = min(n, s + step)
            block = np.empty(e - s, dtype=dt)
            block["sentence_id"] = emb.sentence_ids[s:e]
            block["doc_id"] = emb.doc_ids[s:e]
            block["domain_id"] = emb.domain_ids[s:e]
            block["vector"] = emb.vectors[s:e]
            block.tofile(f)
    with open(meta_path(path), "w", encoding="utf-8") as f:
        json.dump(emb.meta.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def _read_header(f, path) -> tuple[int, int]:
    raw = f.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError(f"{path}: file shorter than header", record_index=0)
    magic, version, dim, count, dtype, reserved = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r} (expected {MAGIC!r})")
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise EmbeddingFormatError(f"{path}: unsupported dtype code {dtype}")
    if reserved != 0:
        raise EmbeddingFormatError(f"{path}: reserved field is {reserved}, expected 0")
    if dim == 0:
        raise EmbeddingFormatError(f"{path}: dim must be positive")
    return dim, count


def _check_body_size(path: Path, dim: int, count: int) -> None:
    stride = record_dtype(dim).itemsize
    body = path.stat().st_size - HEADER_SIZE
    expected = count * stride
    if body != expected:
        index = body // stride if body >= 0 else 0
        raise TruncatedFileError(
            f"{path}: body is {body} bytes, expected {expected} "
            f"({count} records of {stride} bytes); truncated at record {index}",
            record_index=int(index),
        )


def read_meta(path) -> EmbeddingMeta:
    mp = meta_path(path)
    if not mp.exists():
        return EmbeddingMeta()
    with open(mp, encoding="utf-8") as f:
        return EmbeddingMeta.from_json_dict(json.load(f))


def read_embeddings(path, mmap: bool = False, validate: bool = True) -> EmbeddingSet:
    """Read a full set. With ``mmap=True`` the vectors stay file-backed.

    Validates header and record invariants unless ``validate=False``
    (the caller then owns the risk, e.g. right after a trusted write).
    """
    path = Path(path)
    with open(path, "rb") as f:
        dim, count = _read_header(f, path)
        _check_body_size(path, dim, count)
        dt = record_dtype(dim)
        if mmap:
            arr = np.memmap(path, dtype=dt, mode="r", offset=HEADER_SIZE, shape=(count,))
        else:
            arr = np.fromfile(f, dtype=dt, count=count)
    emb = EmbeddingSet(
        dim,
        np.asarray(arr["sentence_id"]),
        np.asarray(arr["doc_id"]),
        np.asarray(arr["domain_id"]),
        arr["vector"],
        read_meta(path),
    )
    if validate:
        emb.validate()
    return emb


def iter_embeddings(path, block_records: int | None = None) -> Iterator[EmbeddingRecord]:
    """Stream records in file order without loading the whole file.

    Checks the header, body size and per-record finiteness; cross-file
    uniqueness of sentence_ids is only checked by full reads / validate_file.
    """
    path = Path(path)
    with open(path, "rb") as f:
        dim, count = _read_header(f, path)
        _check_body_size(path, dim, count)
        dt = record_dtype(dim)
        step = block_records or max(1, _SCAN_BLOCK_BYTES // dt.itemsize)
        done = 0
        while done < count:
            block = np.fromfile(f, dtype=dt, count=min(step, count - done))
            _check_finite_blocked(block["vector"], base_index=done)
            for rec in block:
                yield EmbeddingRecord(
                    int(rec["sentence_id"]),
                    int(rec["doc_id"]),
                    int(rec["domain_id"]),
                    rec["vector"].copy(),
                )
            done += len(block)


def validate_file(path) -> list[str]:
    """Validate a file; returns a list of diagnostics (empty = valid)."""
    try:
        read_embeddings(path, mmap=True, validate=True)
    except FileNotFoundError as e:
        return [str(e)]
    except TruncatedFileError as e:
        return [f"{e} (record index {e.record_index})"]
    except InvariantViolationError as e:
        loc = f" (record index {e.record_index})" if e.record_index >= 0 else ""
        return [f"{e}{loc}"]
    except (DomainkitError, OSError) as e:
        return [str(e)]
    return []


def with_meta(emb: EmbeddingSet, **changes) -> EmbeddingSet:
    """New set sharing the same arrays, with the given meta fields replaced."""
    return EmbeddingSet(
        dim=emb.dim,
        sentence_ids=emb.sentence_ids,
        doc_ids=emb.doc_ids,
        domain_ids=emb.domain_ids,
        vectors=emb.vectors,
        meta=replace(emb.meta, **changes),
    )
