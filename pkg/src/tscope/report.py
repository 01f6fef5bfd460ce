"""Figure rendering for the report path.

Each renderer reads one of the delimited data files the pipeline emits (ECDF
points, PDP grids, importance distributions) and writes a PNG next to it.
Rendering is optional everywhere; the CSV/JSON data files are the primary
output. PNG metadata is pinned so identical data renders byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

_SAVEFIG = dict(dpi=120, metadata={"Software": "tscope"})


def _read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    return rows[0], rows[1:]


def render_ecdf(csv_paths: list[str | Path], out_png: str | Path, title: str = "") -> Path:
    """Overlay step-function ECDFs from one or more ecdf point files."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for path in csv_paths:
        _, rows = _read_csv(path)
        values = np.array([float(r[0]) for r in rows])
        heights = np.array([float(r[1]) for r in rows])
        label = Path(path).stem.replace("ecdf_", "")
        ax.step(values, heights, where="post", label=label)
    ax.set_xlabel("proportion")
    ax.set_ylabel("ECDF")
    ax.set_ylim(0, 1.05)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, **_SAVEFIG)
    plt.close(fig)
    return Path(out_png)


def render_pdp(csv_path: str | Path, out_png: str | Path, title: str = "") -> Path:
    """Line plot for 1-feature PDPs, heat map for 2-feature surfaces."""
    header, rows = _read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 4))
    if header[:2] == ["grid_value", "mean_probability"]:
        g = np.array([float(r[0]) for r in rows])
        v = np.array([float(r[1]) for r in rows])
        ax.plot(g, v, marker="o", ms=3)
        ax.set_xlabel("feature value")
        ax.set_ylabel("mean predicted probability")
    else:
        g1 = np.array(sorted({float(r[0]) for r in rows}))
        g2 = np.array(sorted({float(r[1]) for r in rows}))
        surface = np.zeros((g1.size, g2.size))
        index1 = {v: i for i, v in enumerate(g1)}
        index2 = {v: i for i, v in enumerate(g2)}
        for r in rows:
            surface[index1[float(r[0])], index2[float(r[1])]] = float(r[2])
        im = ax.imshow(
            surface.T,
            origin="lower",
            aspect="auto",
            extent=(g1[0], g1[-1], g2[0], g2[-1]),
            cmap="viridis",
        )
        fig.colorbar(im, ax=ax, label="mean predicted probability")
        ax.set_xlabel("feature 1")
        ax.set_ylabel("feature 2")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_png, **_SAVEFIG)
    plt.close(fig)
    return Path(out_png)


def render_importance(csv_path: str | Path, out_png: str | Path, top: int = 10,
                      title: str = "") -> Path:
    """Box plot of per-run importance scores for the top features."""
    _, rows = _read_csv(csv_path)
    scores: dict[str, list[float]] = {}
    for feature, _, score in rows:
        scores.setdefault(feature, []).append(float(score))
    ranked = sorted(scores, key=lambda f: -float(np.mean(scores[f])))[:top]
    fig, ax = plt.subplots(figsize=(6, 0.45 * len(ranked) + 1.5))
    ax.boxplot(
        [scores[f] for f in reversed(ranked)],
        vert=False,
        labels=list(reversed(ranked)),
    )
    ax.axvline(0.0, color="grey", lw=0.8)
    ax.set_xlabel("importance (score drop)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_png, **_SAVEFIG)
    plt.close(fig)
    return Path(out_png)


def render_ts_importance(csv_path: str | Path, out_png: str | Path, title: str = "") -> Path:
    """Permuted-score distribution against the unpermuted baseline."""
    _, rows = _read_csv(csv_path)
    baseline = float(rows[0][1])
    permuted = [float(r[2]) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.boxplot([permuted], vert=True, labels=["temporally shuffled"])
    ax.axhline(baseline, color="tab:red", lw=1.2, label=f"baseline = {baseline:.3f}")
    ax.set_ylabel("score")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_png, **_SAVEFIG)
    plt.close(fig)
    return Path(out_png)
