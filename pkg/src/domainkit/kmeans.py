"""K-means with multiple restarts: Lloyd's algorithm, k-means++ seeding.

Fitting runs ``restarts`` independent Lloyd's fits from a deterministic
per-restart seed stream and keeps the one with the smallest inertia
(within-cluster sum of squared distances); ties go to the earlier restart.
With ``normalize=True`` (the default) rows are L2-normalized before both
fitting and assignment, which makes squared-Euclidean nearest-centroid
ranking equivalent to cosine similarity ranking.

All distance arithmetic is float64 and chunked over rows with a fixed
chunk size, so results are deterministic and memory stays bounded even for
memmap-backed inputs far larger than RAM.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .embstore import DimensionMismatchError, EmbeddingSet
from .errors import DomainkitError

_TARGET_CHUNK_BYTES = 1 << 26  # one f64 row chunk, ~64 MiB


class TooFewPointsError(DomainkitError):
    pass


class ModelParseError(DomainkitError):
    pass


class DuplicateCentroidWarning(UserWarning):
    """Fit produced coincident centroids (degenerate input for this k)."""


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    restarts: int = 10
    max_iters: int = 300
    tol: float = 1e-6  # relative inertia improvement threshold
    seed: int = 0
    normalize: bool = True

    def validate(self) -> None:
        if self.k < 1:
            raise ModelParseError(f"k must be >= 1, got {self.k}")
        if self.restarts < 1:
            raise ModelParseError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iters < 1:
            raise ModelParseError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (self.tol >= 0.0):
            raise ModelParseError(f"tol must be >= 0, got {self.tol}")
        if not (0 <= self.seed < 2**64):
            raise ModelParseError(f"seed must fit in 64 bits, got {self.seed}")


@dataclass
class KMeansModel:
    centroids: np.ndarray  # (k, dim) float64
    config: KMeansConfig
    inertia: float
    iterations_run: int
    restart_inertias: list[float] = field(default_factory=list)
    inertia_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass
class ClusterAssignment:
    labels: np.ndarray  # int32, in [0, k)
    item_ids: np.ndarray  # uint64, parallel to labels
    distances: np.ndarray  # float64 squared distance to the chosen centroid

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)
        self.item_ids = np.asarray(self.item_ids, dtype=np.uint64)
        self.distances = np.asarray(self.distances, dtype=np.float64)
        if not (len(self.labels) == len(self.item_ids) == len(self.distances)):
            raise DomainkitError("assignment columns have unequal lengths")

    def __len__(self) -> int:
        return len(self.labels)


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, EmbeddingSet):
        return data.vectors
    X = np.asarray(data)
    if X.ndim != 2:
        raise DomainkitError(f"expected a 2-D matrix, got shape {X.shape}")
    return X


def _item_ids(data, n: int) -> np.ndarray:
    if isinstance(data, EmbeddingSet):
        return data.sentence_ids
    return np.arange(n, dtype=np.uint64)


def _chunk_rows(dim: int) -> int:
    return max(1, _TARGET_CHUNK_BYTES // (8 * dim))


def _row_norms(X: np.ndarray, chunk: int) -> np.ndarray:
    """L2 norms per row, float64; zero norms become 1 so zero rows stay zero."""
    n = len(X)
    norms = np.empty(n, dtype=np.float64)
    for s in range(0, n, chunk):
        block = np.asarray(X[s : s + chunk], dtype=np.float64)
        norms[s : s + chunk] = np.sqrt(np.einsum("ij,ij->i", block, block))
    norms[norms == 0.0] = 1.0
    return norms


def _iter_blocks(
    X: np.ndarray, norms: np.ndarray | None, chunk: int
) -> Iterator[tuple[int, np.ndarray]]:
    for s in range(0, len(X), chunk):
        block = np.array(X[s : s + chunk], dtype=np.float64)  # always a copy
        if norms is not None:
            block /= norms[s : s + chunk, None]
        yield s, block


def _row(X: np.ndarray, norms: np.ndarray | None, i: int) -> np.ndarray:
    r = np.array(X[i], dtype=np.float64)
    if norms is not None:
        r /= norms[i]
    return r


def _assignment_pass(X, norms, centroids, chunk, accumulate=True):
    """One labeling sweep; optionally accumulates per-cluster sums/counts."""
    n = len(X)
    k = centroids.shape[0]
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    labels = np.empty(n, dtype=np.int32)
    mindist = np.empty(n, dtype=np.float64)
    sums = np.zeros_like(centroids) if accumulate else None
    counts = np.zeros(k, dtype=np.int64) if accumulate else None
    for s, block in _iter_blocks(X, norms, chunk):
        m = len(block)
        d2 = block @ centroids.T
        d2 *= -2.0
        d2 += np.einsum("ij,ij->i", block, block)[:, None]
        d2 += c_sq[None, :]
        np.maximum(d2, 0.0, out=d2)
        lab = np.argmin(d2, axis=1)  # ties break to the lowest centroid index
        labels[s : s + m] = lab
        mindist[s : s + m] = d2[np.arange(m), lab]
        if accumulate:
            onehot = np.zeros((m, k), dtype=np.float64)
            onehot[np.arange(m), lab] = 1.0
            sums += onehot.T @ block
            counts += np.bincount(lab, minlength=k)
    return labels, mindist, sums, counts


def _sqdist_to_center(X, norms, center, chunk) -> np.ndarray:
    n = len(X)
    out = np.empty(n, dtype=np.float64)
    c_sq = float(center @ center)
    for s, block in _iter_blocks(X, norms, chunk):
        d2 = np.einsum("ij,ij->i", block, block) - 2.0 * (block @ center) + c_sq
        np.maximum(d2, 0.0, out=d2)
        out[s : s + len(block)] = d2
    return out


def _kmeanspp_init(X, norms, k, rng, chunk) -> np.ndarray:
    n = len(X)
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    centers[0] = _row(X, norms, int(rng.integers(n)))
    if k == 1:
        return centers
    d2 = _sqdist_to_center(X, norms, centers[0], chunk)
    for j in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))  # all remaining mass at distance zero
        centers[j] = _row(X, norms, idx)
        np.minimum(d2, _sqdist_to_center(X, norms, centers[j], chunk), out=d2)
    return centers


def _update_centroids(centroids, sums, counts) -> np.ndarray:
    new = centroids.copy()  # empty clusters keep their old position until repaired
    nz = counts > 0
    new[nz] = sums[nz] / counts[nz, None]
    return new


def _repair_empty(centroids, counts, X, norms, mindist) -> np.ndarray:
    """Move each empty centroid onto the point farthest from its own centroid."""
    empties = np.flatnonzero(counts == 0)
    if len(empties) == 0:
        return centroids
    d = mindist.copy()
    for c in empties:
        i = int(np.argmax(d))
        centroids[c] = _row(X, norms, i)
        d[i] = -1.0  # claimed; the next empty cluster takes a different point
    return centroids


def _lloyd(X, norms, k, rng, max_iters, tol, chunk):
    centroids = _kmeanspp_init(X, norms, k, rng, chunk)
    history: list[float] = []
    labels_prev = None
    for it in range(max_iters):
        labels, mindist, sums, counts = _assignment_pass(X, norms, centroids, chunk)
        inertia = float(mindist.sum())
        history.append(inertia)
        assert len(history) < 2 or inertia <= history[-2] * (1.0 + 1e-12)
        if labels_prev is not None and np.array_equal(labels, labels_prev):
            break
        if len(history) >= 2 and (history[-2] - inertia) < tol * history[-2]:
            break
        if it == max_iters - 1:
            break
        new = _update_centroids(centroids, sums, counts)
        centroids = _repair_empty(new, counts, X, norms, mindist)
        labels_prev = labels
    return centroids, history


def _duplicate_centroids(centroids: np.ndarray) -> bool:
    k = centroids.shape[0]
    for i in range(k):
        for j in range(i + 1, k):
            if np.array_equal(centroids[i], centroids[j]):
                return True
    return False


def fit(data, config: KMeansConfig) -> KMeansModel:
    """Fit k-means to an EmbeddingSet (or plain 2-D array).

    Runs ``config.restarts`` Lloyd's fits seeded from ``config.seed`` and
    returns the restart with the smallest final inertia. Raises
    TooFewPointsError when there are fewer records than clusters; emits a
    DuplicateCentroidWarning when the winning restart has coincident
    centroids (degenerate input for this k).
    """
    config.validate()
    X = _as_matrix(data)
    n, dim = X.shape
    if n < config.k:
        raise TooFewPointsError(f"{n} records < k={config.k}")
    chunk = _chunk_rows(dim)
    norms = _row_norms(X, chunk) if config.normalize else None

    best_centroids = None
    best_history: list[float] = []
    restart_inertias: list[float] = []
    for r in range(config.restarts):
        rng = np.random.default_rng([config.seed, r])
        centroids, history = _lloyd(
            X, norms, config.k, rng, config.max_iters, config.tol, chunk
        )
        restart_inertias.append(history[-1])
        if best_centroids is None or history[-1] < best_history[-1]:
            best_centroids, best_history = centroids, history

    model = KMeansModel(
        centroids=best_centroids,
        config=config,
        inertia=best_history[-1],
        iterations_run=len(best_history),
        restart_inertias=restart_inertias,
        inertia_history=best_history,
    )
    if config.k > 1 and _duplicate_centroids(model.centroids):
        warnings.warn(
            "fit produced duplicate centroids; input is degenerate for "
            f"k={config.k}",
            DuplicateCentroidWarning,
            stacklevel=2,
        )
    return model


def assign(model: KMeansModel, data) -> ClusterAssignment:
    """Label each item with its nearest centroid (squared Euclidean).

    Applies the model's normalization setting; ties break to the lowest
    centroid index.
    """
    X = _as_matrix(data)
    if X.shape[1] != model.dim:
        raise DimensionMismatchError(
            f"data dim {X.shape[1]} does not match model dim {model.dim}"
        )
    chunk = _chunk_rows(model.dim)
    norms = _row_norms(X, chunk) if model.config.normalize else None
    labels, mindist, _, _ = _assignment_pass(
        X, norms, model.centroids, chunk, accumulate=False
    )
    return ClusterAssignment(labels, _item_ids(data, len(X)), mindist)


def save_model(model: KMeansModel, path) -> None:
    doc = {
        "format": "domainkit.kmeans",
        "version": 1,
        "k": model.k,
        "dim": model.dim,
        "config": asdict(model.config),
        "inertia": model.inertia,
        "iterations_run": model.iterations_run,
        "restart_inertias": list(model.restart_inertias),
        "centroids": [[float(v) for v in row] for row in model.centroids],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path) -> KMeansModel:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelParseError(f"{path}: not valid JSON ({e})") from e
    try:
        if doc.get("format") != "domainkit.kmeans" or doc.get("version") != 1:
            raise ModelParseError(f"{path}: not a domainkit k-means model file")
        config = KMeansConfig(**doc["config"])
        config.validate()
        centroids = np.asarray(doc["centroids"], dtype=np.float64)
        if centroids.ndim != 2 or centroids.shape != (doc["k"], doc["dim"]):
            raise ModelParseError(f"{path}: centroid matrix shape mismatch")
        if doc["k"] < 1:
            raise ModelParseError(f"{path}: k must be >= 1")
        if not np.isfinite(centroids).all():
            raise ModelParseError(f"{path}: non-finite centroid entries")
        return KMeansModel(
            centroids=centroids,
            config=config,
            inertia=float(doc["inertia"]),
            iterations_run=int(doc["iterations_run"]),
            restart_inertias=[float(v) for v in doc.get("restart_inertias", [])],
        )
    except ModelParseError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ModelParseError(f"{path}: malformed model file ({e})") from e


def write_labels_tsv(assignment: ClusterAssignment, path) -> None:
    """Write ``item_id<TAB>cluster<TAB>sqdist`` rows with a one-line header."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("item_id\tcluster\tsqdist\n")
        for i in range(len(assignment)):
            f.write(
                f"{int(assignment.item_ids[i])}\t{int(assignment.labels[i])}\t"
                f"{float(assignment.distances[i])!r}\n"
            )


def read_labels_tsv(path) -> ClusterAssignment:
    items, labels, dists = [], [], []
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if header[:2] != ["item_id", "cluster"]:
            raise DomainkitError(f"{path}: unexpected labels header {header!r}")
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 3:
                raise DomainkitError(f"{path}:{lineno}: expected 3 columns")
            try:
                items.append(int(parts[0]))
                labels.append(int(parts[1]))
                dists.append(float(parts[2]))
            except ValueError as e:
                raise DomainkitError(f"{path}:{lineno}: {e}") from e
    return ClusterAssignment(
        np.asarray(labels, dtype=np.int32),
        np.asarray(items, dtype=np.uint64),
        np.asarray(dists, dtype=np.float64),
    )
