"""Encoder embedding extraction and plot rendering for domainkit files."""
__version__ = "0.1.0"

from .embwrite import sidecar_dict, write_embedding_file
from .encoders import HashEncoder, HFEncoder, check_layers, parse_model_spec
from .errors import (
    EmbkitError,
    InputMismatchError,
    LayerRangeError,
    MalformedTableError,
    ModelLoadError,
)
from .extract import extract_corpus, pool_states
from .render import (
    heatmap_annotations,
    read_percent_table,
    read_projection_tsv,
    render_heatmap,
    render_scatter,
)

__all__ = [
    "__version__",
    "EmbkitError",
    "HFEncoder",
    "HashEncoder",
    "InputMismatchError",
    "LayerRangeError",
    "MalformedTableError",
    "ModelLoadError",
    "check_layers",
    "extract_corpus",
    "heatmap_annotations",
    "parse_model_spec",
    "pool_states",
    "read_percent_table",
    "read_projection_tsv",
    "render_heatmap",
    "render_scatter",
    "sidecar_dict",
    "write_embedding_file",
]
