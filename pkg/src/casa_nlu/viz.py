"""Attention weight export helpers and an optional heatmap renderer."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def attention_matrix(signals: dict[str, list[float]]) -> tuple[list[str], np.ndarray]:
    """Stack per-signal weight rows into a (signals x window slots) matrix."""
    names = list(signals)
    rows = [signals[n] for n in names]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError("signals disagree on window width")
    return names, np.asarray(rows, dtype=float)


def render_heatmap(signals: dict[str, list[float]], out_path: str | Path,
                   title: str = "") -> None:
    """Render the per-signal attention weights; darker cells carry more weight."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names, matrix = attention_matrix(signals)
    width = matrix.shape[1]
    fig, ax = plt.subplots(figsize=(1.2 * width + 2, 0.8 * len(names) + 1.5))
    ax.imshow(matrix, cmap="Greys", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(width))
    ax.set_xticklabels([f"t-{width - 1 - i}" if i < width - 1 else "t"
                        for i in range(width)])
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names)
    for r in range(len(names)):
        for c in range(width):
            ax.text(c, r, f"{matrix[r, c]:.2f}", ha="center", va="center",
                    color="white" if matrix[r, c] > 0.5 else "black", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
