"""Writer for the domainkit embedding file format.

The sibling package is consumed only through its published interfaces; this
module implements the byte layout directly. A file is a 21-byte
little-endian header (magic ``EMB1``, u16 version = 1, u32 dim, u64 count,
u8 dtype with 0 = float32, u16 reserved = 0) followed by ``count`` packed
records of u64 sentence_id, u64 doc_id, i32 domain_id and ``dim`` float32
components. A JSON sidecar ``<file>.meta.json`` carries the provenance
fields shown in sidecar_dict.
"""
import json
import struct
from pathlib import Path

import numpy as np

from .errors import EmbkitError

MAGIC = b"EMB1"
VERSION = 1
DTYPE_F32 = 0
HEADER = struct.Struct("<4sHIQBH")

LEVEL_SENTENCE = "token-pooled-sentence"


def record_dtype(dim: int) -> np.dtype:
    return np.dtype(
        [
            ("sentence_id", "<u8"),
            ("doc_id", "<u8"),
            ("domain_id", "<i4"),
            ("vector", "<f4", (dim,)),
        ]
    )


def sidecar_dict(
    model_name: str,
    layer: int,
    level: str = LEVEL_SENTENCE,
    language: str = "",
    domain_names: dict | None = None,
) -> dict:
    return {
        "model_name": model_name,
        "layer": int(layer),
        "level": level,
        "language": language,
        "domain_names": {str(k): v for k, v in (domain_names or {}).items()},
    }


def write_embedding_file(
    path,
    vectors: np.ndarray,
    sentence_ids,
    doc_ids,
    domain_ids,
    meta: dict,
) -> Path:
    """Write one embedding file plus its sidecar and return the file path."""
    path = Path(path)
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    if vectors.ndim != 2 or vectors.shape[1] < 1:
        raise EmbkitError(f"vectors must be a non-empty 2D array, got {vectors.shape}")
    n, dim = vectors.shape
    sentence_ids = np.asarray(sentence_ids, dtype=np.uint64)
    doc_ids = np.asarray(doc_ids, dtype=np.uint64)
    domain_ids = np.asarray(domain_ids, dtype=np.int32)
    if not (len(sentence_ids) == len(doc_ids) == len(domain_ids) == n):
        raise EmbkitError("id columns must all match the vector row count")
    if len(np.unique(sentence_ids)) != n:
        raise EmbkitError("sentence_ids must be unique")
    if not np.isfinite(vectors).all():
        raise EmbkitError("vectors contain non-finite values")

    records = np.empty(n, dtype=record_dtype(dim))
    records["sentence_id"] = sentence_ids
    records["doc_id"] = doc_ids
    records["domain_id"] = domain_ids
    records["vector"] = vectors

    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, dim, n, DTYPE_F32, 0))
        records.tofile(f)
    with open(f"{path}.meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
