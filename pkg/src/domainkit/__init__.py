"""Toolkit for discovering latent text domains in embedding space.

Pipeline pieces: a packed binary embedding format (`embstore`), sentence to
document mean pooling (`pooling`), restarted k-means (`kmeans`), purity and
confusion evaluation (`evaluation`), cosine-based PCA (`projection`),
parallel-corpus preparation and cluster partitioning (`corpusprep`), and
routing of new inputs to cluster-specific models (`router`).
"""

__version__ = "0.1.0"

from .embstore import (
    EmbeddingMeta,
    EmbeddingRecord,
    EmbeddingSet,
    iter_embeddings,
    read_embeddings,
    validate_file,
    write_embeddings,
)
from .errors import DomainkitError, ValidationError
from .evaluation import ContingencyTable, PurityReport, confusion_percent, contingency, purity
from .kmeans import ClusterAssignment, KMeansConfig, KMeansModel, assign, fit
from .pooling import broadcast_labels, pool_documents
from .projection import ProjectionResult, pca_project
from .router import RoutingTable, route, route_batch, route_document

__all__ = [
    "__version__",
    "ClusterAssignment",
    "ContingencyTable",
    "DomainkitError",
    "EmbeddingMeta",
    "EmbeddingRecord",
    "EmbeddingSet",
    "KMeansConfig",
    "KMeansModel",
    "ProjectionResult",
    "PurityReport",
    "RoutingTable",
    "ValidationError",
    "assign",
    "broadcast_labels",
    "confusion_percent",
    "contingency",
    "fit",
    "iter_embeddings",
    "pca_project",
    "pool_documents",
    "purity",
    "read_embeddings",
    "route",
    "route_batch",
    "route_document",
    "validate_file",
    "write_embeddings",
]
