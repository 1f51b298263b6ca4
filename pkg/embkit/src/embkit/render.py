"""Render scatter plots and confusion heatmaps from domainkit TSV outputs.

Uses the Agg backend so rendering works headless; every function returns
the matplotlib Figure so callers (and tests) can inspect artists directly.
"""
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import MalformedTableError  # noqa: E402


def read_projection_tsv(path):
    """(item_ids, domain_ids, coords, axis_names) from a projection TSV."""
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if header[:2] != ["item_id", "domain_id"] or len(header) < 3:
            raise MalformedTableError(f"{path}: bad projection header {header}")
        axis_names = header[2:]
        item_ids, domain_ids, coords = [], [], []
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(header):
                raise MalformedTableError(
                    f"{path}:{lineno}: expected {len(header)} columns"
                )
            try:
                item_ids.append(int(parts[0]))
                domain_ids.append(int(parts[1]))
                coords.append([float(p) for p in parts[2:]])
            except ValueError as exc:
                raise MalformedTableError(f"{path}:{lineno}: {exc}") from None
    if not coords:
        raise MalformedTableError(f"{path}: no data rows")
    return (
        np.array(item_ids),
        np.array(domain_ids),
        np.array(coords, dtype=np.float64),
        axis_names,
    )


def read_percent_table(path):
    """(row_labels, col_labels, matrix) from a confusion table TSV."""
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if len(header) < 2 or header[0] != "cluster":
            raise MalformedTableError(f"{path}: bad table header {header}")
        col_labels = header[1:]
        row_labels, rows = [], []
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(header):
                raise MalformedTableError(
                    f"{path}:{lineno}: expected {len(header)} columns"
                )
            row_labels.append(parts[0])
            try:
                rows.append([float(p) for p in parts[1:]])
            except ValueError as exc:
                raise MalformedTableError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise MalformedTableError(f"{path}: no data rows")
    return row_labels, col_labels, np.array(rows, dtype=np.float64)


def render_scatter(tsv_path, out_path=None):
    """2D scatter of the first two projection axes, one color and legend
    entry per domain, unlabeled points (-1) in grey."""
    _, domain_ids, coords, axis_names = read_projection_tsv(tsv_path)
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    cmap = plt.get_cmap("tab10")
    for i, domain in enumerate(sorted(set(int(d) for d in domain_ids))):
        mask = domain_ids == domain
        color = "0.6" if domain < 0 else cmap(i % 10)
        label = "unlabeled" if domain < 0 else f"domain {domain}"
        ax.scatter(coords[mask, 0], coords[mask, 1], s=8, color=color, label=label)
    ax.set_xlabel(axis_names[0])
    ax.set_ylabel(axis_names[1] if len(axis_names) > 1 else "")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    if out_path is not None:
        fig.savefig(out_path, dpi=150)
    return fig


def render_heatmap(tsv_path, out_path=None):
    """Column-percentage heatmap with one annotation per cell, rendered to
    one decimal place."""
    row_labels, col_labels, matrix = read_percent_table(tsv_path)
    fig, ax = plt.subplots(
        figsize=(1.2 + 0.9 * len(col_labels), 1.0 + 0.7 * len(row_labels))
    )
    image = ax.imshow(matrix, vmin=0.0, vmax=100.0, cmap="viridis")
    ax.set_xticks(range(len(col_labels)), labels=col_labels, rotation=45, ha="right")
    ax.set_yticks(range(len(row_labels)), labels=row_labels)
    for r in range(matrix.shape[0]):
        for c in range(matrix.shape[1]):
            shade = "black" if matrix[r, c] > 60.0 else "white"
            ax.text(
                c, r, f"{matrix[r, c]:.1f}", ha="center", va="center",
                color=shade, fontsize=9,
            )
    fig.colorbar(image, ax=ax, label="% of domain")
    fig.tight_layout()
    if out_path is not None:
        fig.savefig(out_path, dpi=150)
    return fig


def heatmap_annotations(fig) -> np.ndarray:
    """Parse the cell annotations of a render_heatmap figure back into a
    matrix, inverting the text layout by artist position."""
    ax = fig.axes[0]
    cells = {}
    for text in ax.texts:
        x, y = text.get_position()
        cells[(int(round(y)), int(round(x)))] = float(text.get_text())
    if not cells:
        raise MalformedTableError("figure has no cell annotations")
    n_rows = max(r for r, _ in cells) + 1
    n_cols = max(c for _, c in cells) + 1
    out = np.full((n_rows, n_cols), np.nan)
    for (r, c), value in cells.items():
        out[r, c] = value
    if np.isnan(out).any():
        raise MalformedTableError("annotation grid has holes")
    return out
