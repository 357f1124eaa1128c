from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict

import torch
import torch.nn.functional as F
from torch import nn

from src.constants import (
    OUTPUT_BINS,
    OUTPUT_FRAMES,
    SEPARATOR_BASE_FILTERS,
    SEPARATOR_LEAK,
    SEPARATOR_LEVELS,
)
from src.models.shapes import ShapePlan


@dataclass(frozen=True)
class SeparatorConfig:
    n_sources: int = 2
    levels: int = SEPARATOR_LEVELS
    base_filters: int = SEPARATOR_BASE_FILTERS
    output_frames: int = OUTPUT_FRAMES
    output_bins: int = OUTPUT_BINS
    leak: float = SEPARATOR_LEAK

    def __post_init__(self):
        if self.n_sources < 1:
            raise ValueError(f"n_sources must be >= 1, got {self.n_sources}")
        if self.levels < 1 or self.base_filters < 1:
            raise ValueError("levels and base_filters must be positive")

    @cached_property
    def plan(self) -> ShapePlan:
        return ShapePlan.for_output(self.output_frames, self.output_bins, self.levels)


def center_crop(x: torch.Tensor, frames: int, bins: int) -> torch.Tensor:
    """Crops the last two dimensions of `x` to (frames, bins) around their centre."""
    t0 = (x.shape[-2] - frames) // 2
    f0 = (x.shape[-1] - bins) // 2
    return x[..., t0:t0 + frames, f0:f0 + bins]


class UpBlock(nn.Module):
    """Transposed conv (stride 2), crop-and-concat skip, transposed conv (stride 1)."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.upsample = nn.ConvTranspose2d(
            in_channels, out_channels, kernel_size=3, stride=2, padding=1, output_padding=1
        )
        # padding 2 makes the stride-1 transposed conv shrink by 2 like a valid conv
        self.merge = nn.ConvTranspose2d(2 * out_channels, out_channels, kernel_size=3, stride=1, padding=2)

    def forward(self, x: torch.Tensor, skip: torch.Tensor, trim: tuple, leak: float) -> torch.Tensor:
        x = F.leaky_relu(self.upsample(x), leak)
        frames, bins = x.shape[-2] - trim[0], x.shape[-1] - trim[1]
        x = center_crop(x, frames, bins)
        x = torch.cat([x, center_crop(skip, frames, bins)], dim=1)
        return F.leaky_relu(self.merge(x), leak)


class Separator(nn.Module):
    """
    U-Net separator f_phi.

    Maps a batch of mixture windows [B, T_in, F_in] to K nonnegative
    log-normalized source estimates [B, K, T_out, F_out]. The window sizes
    come from `config.plan`.
    """

    def __init__(self, config: SeparatorConfig):
        super().__init__()
        self.config = config
        c = config.base_filters
        self.conv_in = nn.Conv2d(1, c, kernel_size=3)
        self.down = nn.ModuleList()
        for _ in range(config.levels):
            self.down.append(nn.Conv2d(c, 2 * c, kernel_size=3))
            c *= 2
        self.up = nn.ModuleList()
        for _ in range(config.levels):
            self.up.append(UpBlock(c, c // 2))
            c //= 2
        self.heads = nn.ModuleList(
            [nn.Conv2d(c + 1, 1, kernel_size=1) for _ in range(config.n_sources)]
        )

    @property
    def plan(self) -> ShapePlan:
        return self.config.plan

    def forward(self, mixture: torch.Tensor) -> torch.Tensor:
        plan = self.plan
        if tuple(mixture.shape[-2:]) != plan.input_shape or mixture.dim() != 3:
            raise ValueError(
                f"Separator expects input [batch, {plan.input_shape[0]}, {plan.input_shape[1]}], "
                f"got {list(mixture.shape)}"
            )
        leak = self.config.leak
        x = F.leaky_relu(self.conv_in(mixture.unsqueeze(1)), leak)
        skips = [x]
        for i, conv in enumerate(self.down):
            x = F.leaky_relu(conv(F.max_pool2d(x, 2)), leak)
            if i < len(self.down) - 1:
                skips.append(x)

        for i, block in enumerate(self.up):
            last = i == len(self.up) - 1
            trim = (plan.frames.trim, plan.bins.trim) if last else (0, 0)
            x = block(x, skips[-1 - i], trim, leak)

        frames, bins = plan.output_shape
        t0 = plan.frame_offset
        # bin k of the mixture stays at index k, so the frequency crop starts at 0
        basis = mixture[:, t0:t0 + frames, :bins].unsqueeze(1)
        x = torch.cat([x, basis], dim=1)
        return torch.cat([F.relu(head(x)) for head in self.heads], dim=1)


def init_separator(config: SeparatorConfig, seed: int = 0) -> Separator:
    """
    Builds a separator with Kaiming (fan-in) normal weights and zero biases.

    The global torch RNG is left untouched; the same seed gives identical
    parameters.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = Separator(config)
        for module in model.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
                head = any(module is h for h in model.heads)
                if head:
                    nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu")
                else:
                    nn.init.kaiming_normal_(module.weight, a=config.leak, mode="fan_in", nonlinearity="leaky_relu")
                nn.init.zeros_(module.bias)
    return model


def parameter_gradients(model: nn.Module, loss_fn: Callable[[nn.Module], torch.Tensor]) -> Dict[str, torch.Tensor]:
    """
    Gradients of a scalar loss with respect to every parameter of `model`.

    Args:
        model: Any module (separator or critic).
        loss_fn: Called with `model`; must return a scalar tensor.

    Returns:
        Mapping parameter name -> gradient (zeros for parameters the loss ignores).

    Raises:
        ValueError: If the loss is not a finite scalar.
    """
    loss = loss_fn(model)
    if loss.dim() != 0:
        raise ValueError(f"Loss must be a scalar, got shape {list(loss.shape)}")
    if not torch.isfinite(loss):
        raise ValueError(f"Loss is not finite: {loss.item()}")

    named = list(model.named_parameters())
    if not loss.requires_grad:
        return {name: torch.zeros_like(p) for name, p in named}

    grads = torch.autograd.grad(loss, [p for _, p in named], allow_unused=True)
    return {
        name: torch.zeros_like(p) if g is None else g
        for (name, p), g in zip(named, grads)
    }
