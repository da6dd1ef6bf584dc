from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed salt and no date, so the same curves always give the same SVG bytes
SVG_RC = {"svg.hashsalt": "visrec", "svg.fonttype": "path"}


def plot_recall_curves(
    path: str | Path, curves: Sequence[tuple[str, Sequence[int], Sequence[float]]], title: str = "Recall@k"
) -> None:
    """Writes one line per (label, ks, recall percentages) to an SVG file."""
    with matplotlib.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, ks, recall in curves:
            ax.plot(list(ks), list(recall), marker="o", label=label)
        ax.set_title(title)
        ax.set_xlabel("k")
        ax.set_ylabel("recall (%)")
        ax.set_ylim(0, 100)
        ax.grid(True, alpha=0.3)
        if curves:
            ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
