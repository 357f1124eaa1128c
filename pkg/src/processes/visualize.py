"""
Heatmaps of a separator estimate and of a critic's input gradient on it.

Positive gradients render light and negative ones dark on a gray scale
symmetric around zero; only the lower `max_bin` frequency bins are shown.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import torch
from matplotlib.colors import Normalize

from src.data.corpus import Track
from src.data.sampling import tile_track
from src.models.critic import Critic, input_gradient
from src.models.separator import Separator

GRADIENT_CMAP = "gray"
ESTIMATE_CMAP = "magma"
DEFAULT_MAX_BIN = 64


@dataclass(frozen=True)
class GradientView:
    """Estimate and critic input gradient on one output window [frames, bins]."""

    track: str
    source: int
    start_frame: int
    estimate: np.ndarray
    gradient: np.ndarray


def gradient_view(separator: Separator, critic: Critic, track: Track, source: int,
                  tile: Optional[int] = None) -> GradientView:
    """
    Separates one tile of `track` and differentiates the critic score of
    source `source` with respect to that estimate.

    Args:
        tile: Index into the track's tiling; the middle tile when omitted.
    """
    if not 0 <= source < separator.config.n_sources:
        raise ValueError(f"Source index {source} out of range for K={separator.config.n_sources}")
    batch = tile_track(track, separator.plan)
    tile = len(batch) // 2 if tile is None else tile
    if not 0 <= tile < len(batch):
        raise ValueError(f"Tile {tile} out of range for {len(batch)} tiles")

    dtype = next(separator.parameters()).dtype
    separator.eval()
    with torch.no_grad():
        estimate = separator(torch.as_tensor(batch.inputs[tile:tile + 1], dtype=dtype))[:, source]
    gradient = input_gradient(critic, estimate.to(next(critic.parameters()).dtype))
    return GradientView(
        track=track.name,
        source=source,
        start_frame=int(batch.start_frames[tile] + separator.plan.frame_offset),
        estimate=estimate[0].numpy(),
        gradient=gradient[0].detach().numpy(),
    )


def _as_image(grid: np.ndarray, max_bin: int) -> np.ndarray:
    """[frames, bins] -> [bins, frames] with low frequencies at the bottom row."""
    if max_bin < 1:
        raise ValueError(f"max_bin must be positive, got {max_bin}")
    return grid[:, :max_bin].T[::-1]


def gradient_norm(gradient: np.ndarray) -> Normalize:
    """Symmetric range +-max|g| (+-1 for an all-zero gradient)."""
    vmax = float(np.max(np.abs(gradient))) or 1.0
    return Normalize(vmin=-vmax, vmax=vmax)


def render_gradient(gradient: np.ndarray, max_bin: int = DEFAULT_MAX_BIN) -> np.ndarray:
    """RGBA pixels (uint8, [bins, frames, 4]) of the cropped gradient."""
    crop = _as_image(gradient, max_bin)
    return matplotlib.colormaps[GRADIENT_CMAP](gradient_norm(crop)(crop), bytes=True)


def render_estimate(estimate: np.ndarray, max_bin: int = DEFAULT_MAX_BIN) -> np.ndarray:
    crop = _as_image(estimate, max_bin)
    norm = Normalize(vmin=0.0, vmax=float(np.max(crop)) or 1.0)
    return matplotlib.colormaps[ESTIMATE_CMAP](norm(crop), bytes=True)


def save_view(view: GradientView, out_dir: Path, max_bin: int = DEFAULT_MAX_BIN, source_name: str = "") -> Path:
    """
    Writes the side-by-side PNG and the two cropped grids as CSV.

    Returns:
        Path of the PNG.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{view.track}_{source_name or view.source}"
    estimate, gradient = view.estimate[:, :max_bin], view.gradient[:, :max_bin]

    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    left.imshow(render_estimate(view.estimate, max_bin), aspect="auto",
                extent=(view.start_frame, view.start_frame + len(estimate), 0, estimate.shape[1]))
    left.set_title("Separator estimate (log magnitude)")
    right.imshow(render_gradient(view.gradient, max_bin), aspect="auto",
                 extent=(view.start_frame, view.start_frame + len(gradient), 0, gradient.shape[1]))
    right.set_title("Critic input gradient")
    for ax in (left, right):
        ax.set_xlabel("frame")
        ax.set_ylabel("bin")
    fig.colorbar(plt.cm.ScalarMappable(norm=gradient_norm(gradient), cmap=GRADIENT_CMAP), ax=right)
    fig.tight_layout()
    png = out_dir / f"{stem}.png"
    fig.savefig(png, dpi=120)
    plt.close(fig)

    frames = pd.Index(range(view.start_frame, view.start_frame + len(estimate)), name="frame")
    pd.DataFrame(estimate, index=frames).to_csv(out_dir / f"{stem}_estimate.csv")
    pd.DataFrame(gradient, index=frames).to_csv(out_dir / f"{stem}_gradient.csv")
    return png
