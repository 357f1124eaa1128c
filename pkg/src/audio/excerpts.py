from dataclasses import dataclass
from typing import List

import numpy as np

from src.models.shapes import ShapePlan


def cut_window(grid: np.ndarray, start_frame: int, frames: int, bins: int) -> np.ndarray:
    """
    Copies grid[start_frame : start_frame + frames, :bins], zero-filling frames
    outside the track and bins beyond the grid.
    """
    out = np.zeros((frames, bins), dtype=grid.dtype)
    lo = max(start_frame, 0)
    hi = min(start_frame + frames, grid.shape[0])
    n_bins = min(bins, grid.shape[1])
    if hi > lo:
        out[lo - start_frame:hi - start_frame, :n_bins] = grid[lo:hi, :n_bins]
    return out


@dataclass(frozen=True)
class ExcerptPair:
    """
    Separator input window plus the track frames its output covers.

    `target_frames` are absolute track frame indices (centered inside the
    input window); the output grid spans bins 0 .. target_bins - 1.
    """

    input_window: np.ndarray
    start_frame: int
    target_frames: range
    target_bins: int

    def target_of(self, grid: np.ndarray) -> np.ndarray:
        """Cuts the target grid (e.g. a source spectrogram) aligned with this excerpt."""
        return cut_window(grid, self.target_frames.start, len(self.target_frames), self.target_bins)


def cut_excerpt(spec: np.ndarray, start_frame: int, plan: ShapePlan) -> ExcerptPair:
    """
    Cuts a separator input window from a [frames, 257] spectrogram.

    The 257 analysis bins keep indices 0..256 and the rest of the input width
    is zero; frames beyond either track edge are zero as well.

    Args:
        spec: Log-normalized (or linear) magnitude spectrogram.
        start_frame: First input frame; may be negative or run past the end.
        plan: Window geometry of the separator.
    """
    frames_in, bins_in = plan.input_shape
    frames_out, bins_out = plan.output_shape
    target_start = start_frame + plan.frame_offset
    return ExcerptPair(
        input_window=cut_window(spec, start_frame, frames_in, bins_in),
        start_frame=start_frame,
        target_frames=range(target_start, target_start + frames_out),
        target_bins=bins_out,
    )


def tile_starts(n_frames: int, plan: ShapePlan) -> List[int]:
    """
    Input start frames whose non-overlapping output windows cover frames
    0 .. n_frames - 1; the last window may run past the track end.
    """
    frames_out = plan.output_shape[0]
    n_tiles = max(1, -(-n_frames // frames_out))
    return [j * frames_out - plan.frame_offset for j in range(n_tiles)]
