"""Figure rendering for the CLI report paths.

Each helper writes one PNG next to the delimited metric output.
Matplotlib is imported lazily with the Agg backend so the rest of the
package never pays for it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .flowio import FlowField, flow_to_color
from .glare import Polygon
from .metrics import epe


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_flow_figure(path: str | Path, flow: FlowField, max_norm: float | None = None) -> None:
    plt = _pyplot()
    mag = flow.magnitude()
    peak = float(mag[flow.valid].max()) if flow.valid.any() else 0.0
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.imshow(flow_to_color(flow, max_norm))
    ax.set_title(f"flow, max |f| = {peak:.2f} px")
    ax.set_axis_off()
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def save_epe_figure(path: str | Path, pred: FlowField, gt: FlowField) -> None:
    plt = _pyplot()
    du = pred.u - gt.u
    dv = pred.v - gt.v
    err = np.where(gt.valid, np.hypot(du, dv), np.nan)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    im = ax.imshow(err, cmap="magma")
    ax.set_title(f"endpoint error, mean = {epe(pred, gt):.3f} px")
    ax.set_axis_off()
    fig.colorbar(im, ax=ax, label="EPE [px]", shrink=0.8)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def save_glare_eval_figure(path: str | Path, pred: np.ndarray, gt: np.ndarray) -> None:
    """Agreement map: true positives white, false positives red, misses blue."""
    plt = _pyplot()
    overlay = np.zeros(pred.shape + (3,))
    overlay[pred & gt] = (1.0, 1.0, 1.0)
    overlay[pred & ~gt] = (0.9, 0.2, 0.2)
    overlay[~pred & gt] = (0.25, 0.45, 1.0)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.imshow(overlay)
    ax.set_title("glare agreement (white TP, red FP, blue FN)")
    ax.set_axis_off()
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def save_glare_detect_figure(
    path: str | Path, img: np.ndarray, polygons: list[Polygon], mask: np.ndarray
) -> None:
    plt = _pyplot()
    fig, (ax_img, ax_mask) = plt.subplots(1, 2, figsize=(10, 4.5))
    ax_img.imshow(img)
    for poly in polygons:
        v = poly.as_array()
        closed = np.vstack([v, v[:1]])
        ax_img.plot(closed[:, 0] - 0.5, closed[:, 1] - 0.5, color="lime", linewidth=1.5)
    ax_img.set_title(f"{len(polygons)} glare polygon(s)")
    ax_img.set_axis_off()
    ax_mask.imshow(mask, cmap="gray", vmin=0, vmax=1)
    ax_mask.set_title("rendered mask")
    ax_mask.set_axis_off()
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def save_mixture_figure(
    path: str | Path, ids: list[str], mixture: tuple[tuple[str, float], ...]
) -> None:
    """Empirical draw frequencies against the declared mixture weights."""
    plt = _pyplot()
    names = [i for i, _ in mixture]
    weights = [w for _, w in mixture]
    counts = [ids.count(name) / max(len(ids), 1) for name in names]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x - 0.2, weights, width=0.4, label="declared")
    ax.bar(x + 0.2, counts, width=0.4, label="empirical")
    ax.set_xticks(x, names)
    ax.set_ylabel("frequency")
    ax.set_title(f"mixture over {len(ids)} draws")
    ax.legend()
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
