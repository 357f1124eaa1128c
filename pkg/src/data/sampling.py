"""
Random mini-batches for the three training signals.

Every sampler draws from a caller-owned numpy Generator, so a fixed seed
reproduces the exact batch sequence. Tracks are chosen uniformly; within a
track the output window is uniform over every position inside the track,
so mixture windows near the edges carry zero-filled context like the
tiling used at evaluation.
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.audio.excerpts import cut_excerpt, cut_window, tile_starts
from src.audio.spectral import log_normalize, loudness_scale
from src.constants import LOUDNESS_RANGE
from src.data.corpus import DataCorpus, Track
from src.models.shapes import ShapePlan


@dataclass(frozen=True)
class Batch:
    """
    Log-normalized excerpts, float32.

    inputs:        [B, T_in, F_in] separator inputs (or [B, T_out, F_out]
                   source excerpts for a critic batch)
    targets:       [B, K, T_out, F_out] source targets (paired batches only)
    mixtures:      [B, T_out, F_out] mixture on the output grid (for the
                   additive penalty)
    track_indices: pool index of each excerpt's track
    start_frames:  first input frame of each excerpt within its track
                   (negative when the window reaches past the track start)
    factors:       loudness factors (source batches only)
    """

    inputs: np.ndarray
    track_indices: np.ndarray
    start_frames: np.ndarray
    targets: Optional[np.ndarray] = None
    mixtures: Optional[np.ndarray] = None
    factors: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _draw_positions(
    tracks: Sequence[Track], size: int, window_frames: int, rng: np.random.Generator, pool: str, lead: int = 0
) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform track choice, then a uniform window position inside it, returned `lead` frames early."""
    if not tracks:
        raise ValueError(f"Cannot sample from the empty {pool} pool")
    if size < 1:
        raise ValueError(f"Batch size must be >= 1, got {size}")
    indices = rng.integers(0, len(tracks), size=size)
    last_start = np.array([max(0, tracks[i].n_frames - window_frames) for i in indices])
    starts = rng.integers(0, last_start + 1) - lead
    return indices, starts


def _log_excerpts(tracks: Sequence[Track], indices, starts, plan: ShapePlan):
    inputs, mixtures, excerpts = [], [], []
    for i, start in zip(indices, starts):
        track = tracks[i]
        # log1p(0) = 0, so normalizing after the zero-filled cut is equivalent
        excerpt = cut_excerpt(track.magnitude, int(start), plan)
        inputs.append(log_normalize(excerpt.input_window))
        mixtures.append(log_normalize(excerpt.target_of(track.magnitude)))
        excerpts.append(excerpt)
    return np.stack(inputs), np.stack(mixtures), excerpts


def sample_paired_batch(corpus: DataCorpus, size: int, rng: np.random.Generator, plan: ShapePlan) -> Batch:
    """Mixture windows from the paired pool with their K aligned source targets."""
    tracks = corpus.paired
    indices, starts = _draw_positions(tracks, size, plan.output_shape[0], rng, "paired", plan.frame_offset)
    inputs, mixtures, excerpts = _log_excerpts(tracks, indices, starts, plan)
    targets = np.stack([
        np.stack([log_normalize(excerpt.target_of(s)) for s in tracks[i].source_magnitudes])
        for i, excerpt in zip(indices, excerpts)
    ])
    return Batch(inputs=inputs, targets=targets, mixtures=mixtures, track_indices=indices, start_frames=starts)


def sample_unlabelled_batch(corpus: DataCorpus, size: int, rng: np.random.Generator, plan: ShapePlan) -> Batch:
    """Mixture windows from the unlabelled pool; no targets."""
    tracks = corpus.unlabelled
    indices, starts = _draw_positions(tracks, size, plan.output_shape[0], rng, "unlabelled", plan.frame_offset)
    inputs, mixtures, _ = _log_excerpts(tracks, indices, starts, plan)
    return Batch(inputs=inputs, mixtures=mixtures, track_indices=indices, start_frames=starts)


def sample_source_batch(
    corpus: DataCorpus,
    source: int,
    size: int,
    rng: np.random.Generator,
    plan: ShapePlan,
    loudness: Tuple[float, float] = LOUDNESS_RANGE,
) -> Batch:
    """
    Solo excerpts of one source on the separator's output grid.

    Each linear excerpt is scaled by a factor drawn uniformly from `loudness`
    before log-normalization.
    """
    if not 0 <= source < corpus.n_sources:
        raise ValueError(f"Source index {source} out of range for K={corpus.n_sources}")
    if not corpus.solo:
        raise ValueError("Cannot sample source excerpts: the corpus has no solo pools")
    tracks = corpus.solo[source]
    frames, bins = plan.output_shape
    indices, starts = _draw_positions(tracks, size, frames, rng, f"solo[{source}]")
    factors = rng.uniform(loudness[0], loudness[1], size=size)
    inputs = np.stack([
        log_normalize(loudness_scale(cut_window(tracks[i].magnitude, int(start), frames, bins), factor, loudness))
        for i, start, factor in zip(indices, starts, factors)
    ]).astype(np.float32)
    return Batch(inputs=inputs, track_indices=indices, start_frames=starts, factors=factors)


def tile_track(track: Track, plan: ShapePlan) -> Batch:
    """
    Deterministic excerpts whose non-overlapping output windows cover the whole track.

    Targets are included for paired-format tracks.
    """
    starts = np.array(tile_starts(track.n_frames, plan))
    indices = np.zeros(len(starts), dtype=int)
    inputs, mixtures, excerpts = _log_excerpts([track], indices, starts, plan)
    targets = None
    if track.is_paired:
        targets = np.stack([
            np.stack([log_normalize(excerpt.target_of(s)) for s in track.source_magnitudes])
            for excerpt in excerpts
        ])
    return Batch(inputs=inputs, targets=targets, mixtures=mixtures, track_indices=indices, start_frames=starts)
