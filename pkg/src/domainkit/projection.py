"""Cosine-based PCA for 2-D embedding visualizations.

"Cosine-based" here means each row is L2-normalized before the standard
center-and-SVD PCA, so Euclidean geometry in the projected space is
monotone in cosine similarity of the original vectors. Components carry a
deterministic sign: each is flipped so its largest-magnitude entry is
positive.

For inputs above ``sample_cap`` rows the components are fitted on a seeded
uniform subsample and all rows are then projected through them; below the
cap the SVD sees every row.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embstore import EmbeddingSet
from .errors import DomainkitError

DEFAULT_SAMPLE_CAP = 200_000


class TooFewPointsError(DomainkitError):
    pass


class DOutOfRangeError(DomainkitError):
    pass


@dataclass
class ProjectionResult:
    coordinates: np.ndarray  # (n, d)
    components: np.ndarray  # (d, dim), rows orthonormal
    explained_variance_ratio: np.ndarray  # (d,), non-increasing
    item_ids: np.ndarray
    domain_ids: np.ndarray


def _normalize_rows(X: np.ndarray) -> np.ndarray:
    out = np.array(X, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", out, out))
    norms[norms == 0.0] = 1.0
    out /= norms[:, None]
    return out


def pca_project(
    data: EmbeddingSet | np.ndarray,
    d: int,
    sample_cap: int = DEFAULT_SAMPLE_CAP,
    seed: int = 0,
) -> ProjectionResult:
    """Project rows onto the top-d principal axes of the normalized data.

    Rows are L2-normalized, then centered on the (sub)sample mean; the
    components are the top-d right singular vectors and
    explained_variance_ratio[i] is sigma_i^2 over the sum of all sigma^2.
    """
    if isinstance(data, EmbeddingSet):
        X = data.vectors
        item_ids = data.sentence_ids
        domain_ids = data.domain_ids
    else:
        X = np.asarray(data)
        item_ids = np.arange(len(X), dtype=np.uint64)
        domain_ids = np.full(len(X), -1, dtype=np.int32)

    n, dim = X.shape
    if n < 2:
        raise TooFewPointsError(f"need at least 2 points, got {n}")

    if n > sample_cap:
        rng = np.random.default_rng(seed)
        fit_idx = np.sort(rng.choice(n, size=sample_cap, replace=False))
        fit_rows = _normalize_rows(X[fit_idx])
    else:
        fit_idx = None
        fit_rows = _normalize_rows(X)

    n_fit = len(fit_rows)
    if not (1 <= d <= min(n_fit - 1, dim)):
        raise DOutOfRangeError(
            f"d={d} out of range [1, {min(n_fit - 1, dim)}] for {n_fit} fit rows of dim {dim}"
        )

    mean = fit_rows.mean(axis=0)
    fit_rows -= mean
    _, singular, vt = np.linalg.svd(fit_rows, full_matrices=False)
    components = vt[:d].copy()
    for row in components:  # deterministic sign: largest-|entry| positive
        if row[np.argmax(np.abs(row))] < 0.0:
            row *= -1.0

    var = singular**2
    ratio = var[:d] / var.sum()

    if fit_idx is None:
        coords = fit_rows @ components.T
    else:
        coords = np.empty((n, d), dtype=np.float64)
        step = max(1, (1 << 26) // (8 * dim))
        for s in range(0, n, step):
            block = _normalize_rows(X[s : s + step])
            block -= mean
            coords[s : s + len(block)] = block @ components.T

    return ProjectionResult(coords, components, ratio, item_ids, domain_ids)


def write_projection_tsv(result: ProjectionResult, path) -> None:
    """TSV with header: item_id, domain_id, then one column per axis."""
    d = result.coordinates.shape[1]
    names = ["x", "y", "z"][:d] + [f"dim{i}" for i in range(3, d)]
    with open(path, "w", encoding="utf-8") as f:
        f.write("item_id\tdomain_id\t" + "\t".join(names) + "\n")
        for i in range(len(result.coordinates)):
            coords = "\t".join(repr(float(v)) for v in result.coordinates[i])
            f.write(f"{int(result.item_ids[i])}\t{int(result.domain_ids[i])}\t{coords}\n")
