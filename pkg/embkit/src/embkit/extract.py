"""Batched extraction: sentences in, one embedding file per layer out."""
from pathlib import Path

import numpy as np

from . import embwrite
from .encoders import check_layers
from .errors import InputMismatchError

ID_HEADER = ["sentence_id", "doc_id", "domain_id", "line_number"]


def read_id_map(path) -> list[tuple[int, int, int]]:
    """Rows of (sentence_id, doc_id, domain_id) from a corpus ids file."""
    path = Path(path)
    rows = []
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if header != ID_HEADER:
            raise InputMismatchError(
                f"{path}: expected header {ID_HEADER}, got {header}"
            )
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise InputMismatchError(f"{path}:{lineno}: expected 4 columns")
            try:
                sid, did, gid, ln = (int(p) for p in parts)
            except ValueError as exc:
                raise InputMismatchError(f"{path}:{lineno}: {exc}") from None
            if ln != len(rows):
                raise InputMismatchError(
                    f"{path}:{lineno}: line_number {ln} does not match row {len(rows)}"
                )
            rows.append((sid, did, gid))
    return rows


def read_text_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def pool_states(states: np.ndarray, special: np.ndarray, include_special: bool) -> np.ndarray:
    """Mean over token positions. Padding never reaches here; special
    tokens are dropped unless requested, except when a sentence consists
    of nothing else (the mean would be over zero rows)."""
    if include_special:
        keep = np.ones(len(states), dtype=bool)
    else:
        keep = ~special
        if not keep.any():
            keep = np.ones(len(states), dtype=bool)
    return states[keep].mean(axis=0)


def extract_corpus(
    encoder,
    text_path,
    ids_path,
    layers,
    out_dir,
    include_special: bool = False,
    batch_size: int = 32,
    language: str = "",
) -> dict[int, Path]:
    """Write one embedding file per requested layer and return their paths."""
    sentences = read_text_lines(text_path)
    rows = read_id_map(ids_path)
    if len(sentences) != len(rows):
        raise InputMismatchError(
            f"{text_path} has {len(sentences)} lines but {ids_path} has "
            f"{len(rows)} rows"
        )
    if not sentences:
        raise InputMismatchError(f"{text_path} is empty")
    layers = check_layers(encoder, layers)
    if batch_size < 1:
        raise InputMismatchError(f"batch size must be >= 1, got {batch_size}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    pooled = {layer: np.empty((len(sentences), encoder.dim), dtype=np.float32)
              for layer in layers}
    for start in range(0, len(sentences), batch_size):
        batch = sentences[start : start + batch_size]
        for offset, (special, per_layer) in enumerate(
            encoder.batch_states(batch, layers)
        ):
            for layer in layers:
                pooled[layer][start + offset] = pool_states(
                    per_layer[layer], special, include_special
                ).astype(np.float32)

    sentence_ids = np.array([r[0] for r in rows], dtype=np.uint64)
    doc_ids = np.array([r[1] for r in rows], dtype=np.uint64)
    domain_ids = np.array([r[2] for r in rows], dtype=np.int32)

    written = {}
    for layer in layers:
        path = out_dir / f"layer_{layer}.emb"
        embwrite.write_embedding_file(
            path,
            pooled[layer],
            sentence_ids,
            doc_ids,
            domain_ids,
            embwrite.sidecar_dict(encoder.name, layer, language=language),
        )
        written[layer] = path
    return written
