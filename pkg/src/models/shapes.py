"""
Valid-convolution shape arithmetic of the separator U-Net.

Every size used by the separator and the excerpt cutter comes from walking
the layer list below; nothing downstream hard-codes 158, 350, 66 or 256.

Per axis the U-Net is:
    conv 3x3 (valid)                          n -> n - 2
    levels x [max-pool /2, conv 3x3]          n -> n // 2 - 2
    levels x [transposed conv stride 2,       n -> 2n
              crop-and-concat skip,
              transposed conv stride 1]       n -> n - 2
"""
from dataclasses import dataclass, field
from typing import List, Tuple

import pandas as pd

KERNEL = 3
SHRINK = KERNEL - 1


@dataclass(frozen=True)
class AxisPlan:
    """Sizes along one axis (time frames or frequency bins)."""

    input: int
    output: int
    natural_output: int
    stages: Tuple[Tuple[str, int], ...]
    skip_crops: Tuple[int, ...] = field(default=())

    @property
    def trim(self) -> int:
        """Extra cells removed in the last crop-and-concat to land on `output`."""
        return self.natural_output - self.output


def walk_axis(n_input: int, levels: int, trim: int = 0) -> Tuple[List[Tuple[str, int]], List[int], bool]:
    """
    Walks one axis through the layer list.

    Args:
        n_input: Input size along the axis.
        levels: Number of down/up blocks.
        trim: Cells removed from the last upsampled map before its concat.

    Returns:
        (stages, skip_crops, even_pools). `stages` lists (layer, size) pairs,
        `skip_crops` the cells cropped from each skip map (deepest first) and
        `even_pools` whether every pooling saw an even size. A stage size
        <= 0 marks an input too small for the network.
    """
    stages = [("input", n_input)]
    n = n_input - SHRINK
    stages.append(("conv_in", n))
    skips = [n]
    even_pools = True

    for level in range(1, levels + 1):
        even_pools = even_pools and n % 2 == 0
        n = n // 2
        stages.append((f"down{level}_pool", n))
        n -= SHRINK
        stages.append((f"down{level}_conv", n))
        if level < levels:
            skips.append(n)
        if n <= 0:
            return stages, [], even_pools

    skip_crops = []
    for level in range(levels, 0, -1):
        n *= 2
        stages.append((f"up{level}_transpose", n))
        if level == 1:
            n -= trim
            stages.append(("up1_trim", n))
        skip = skips[level - 1]
        skip_crops.append(skip - n)
        stages.append((f"up{level}_concat", n))
        n -= SHRINK
        stages.append((f"up{level}_conv", n))
        if n <= 0:
            break

    return stages, skip_crops, even_pools


def natural_output(n_input: int, levels: int) -> int:
    stages, crops, _ = walk_axis(n_input, levels)
    if not crops or any(c < 0 for c in crops):
        return 0
    return max(stages[-1][1], 0)


def minimal_input(target: int, levels: int, limit: int = 100_000) -> int:
    """
    Smallest input size whose natural output reaches `target`, preferring
    sizes where every pooling halves an even size (exact alignment).
    """
    for n in range(target, limit):
        stages, crops, even = walk_axis(n, levels)
        if even and crops and all(c >= 0 for c in crops) and stages[-1][1] >= target:
            return n
    raise ValueError(f"No input size up to {limit} reaches output {target} with {levels} levels")


def plan_axis(n_input: int, target: int, levels: int) -> AxisPlan:
    natural = natural_output(n_input, levels)
    if natural < target:
        raise ValueError(
            f"Input size {n_input} yields only {natural} outputs with {levels} levels; {target} required"
        )
    stages, crops, _ = walk_axis(n_input, levels, trim=natural - target)
    if stages[-1][1] != target or any(c < 0 for c in crops):
        raise ValueError(f"Cannot trim input size {n_input} to output {target} with {levels} levels")
    return AxisPlan(
        input=n_input,
        output=target,
        natural_output=natural,
        stages=tuple(stages),
        skip_crops=tuple(crops),
    )


@dataclass(frozen=True)
class ShapePlan:
    """Input/output window geometry of a separator, derived from its layer list."""

    levels: int
    frames: AxisPlan
    bins: AxisPlan

    @classmethod
    def for_output(cls, output_frames: int, output_bins: int, levels: int) -> "ShapePlan":
        """Plan with the smallest input window producing the requested output."""
        return cls.for_input(
            minimal_input(output_frames, levels),
            minimal_input(output_bins, levels),
            output_frames,
            output_bins,
            levels,
        )

    @classmethod
    def for_input(cls, input_frames: int, input_bins: int, output_frames: int, output_bins: int,
                  levels: int) -> "ShapePlan":
        return cls(
            levels=levels,
            frames=plan_axis(input_frames, output_frames, levels),
            bins=plan_axis(input_bins, output_bins, levels),
        )

    @property
    def input_shape(self) -> Tuple[int, int]:
        return self.frames.input, self.bins.input

    @property
    def output_shape(self) -> Tuple[int, int]:
        return self.frames.output, self.bins.output

    @property
    def frame_offset(self) -> int:
        """First input frame aligned with output frame 0 (centered target range)."""
        return (self.frames.input - self.frames.output) // 2

    @property
    def adjustments(self) -> List[str]:
        notes = []
        for name, axis in (("frames", self.frames), ("bins", self.bins)):
            if axis.trim:
                notes.append(
                    f"{name}: layer list yields {axis.natural_output}, "
                    f"last crop-and-concat trims {axis.trim} to reach {axis.output}"
                )
        return notes

    def table(self) -> pd.DataFrame:
        """Layer-by-layer (frames, bins) walkthrough."""
        rows = [
            {"stage": name, "frames": frames, "bins": bins}
            for (name, frames), (_, bins) in zip(self.frames.stages, self.bins.stages)
        ]
        return pd.DataFrame(rows)
