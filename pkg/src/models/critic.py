from dataclasses import dataclass
from typing import Tuple

import torch
import torch.nn.functional as F
from torch import nn

from src.constants import (
    CRITIC_BASE_FILTERS,
    CRITIC_DENSE_UNITS,
    CRITIC_FREQUENCY_LAYERS,
    CRITIC_LEAK,
    CRITIC_STRIDED_LAYERS,
    OUTPUT_BINS,
    OUTPUT_FRAMES,
)


@dataclass(frozen=True)
class CriticConfig:
    """
    DCGAN-style Wasserstein critic.

    `strided_layers` 4x4/stride-2 convs doubling filters from `base_filters`,
    then `frequency_layers` convs with 2x4 (time x frequency) kernels and
    1x2 stride, `dense_units` Leaky ReLU units and one linear output.
    """

    input_frames: int = OUTPUT_FRAMES
    input_bins: int = OUTPUT_BINS
    strided_layers: int = CRITIC_STRIDED_LAYERS
    frequency_layers: int = CRITIC_FREQUENCY_LAYERS
    base_filters: int = CRITIC_BASE_FILTERS
    dense_units: int = CRITIC_DENSE_UNITS
    leak: float = CRITIC_LEAK


STRIDED = dict(kernel_size=(4, 4), stride=(2, 2), padding=(1, 1))
FREQUENCY = dict(kernel_size=(2, 4), stride=(1, 2), padding=(0, 1))


def conv_out(n: int, kernel: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - kernel) // stride + 1


def feature_shape(config: CriticConfig) -> Tuple[int, int, int]:
    """(channels, frames, bins) entering the dense layer."""
    channels, t, f = 1, config.input_frames, config.input_bins
    for i in range(config.strided_layers):
        channels = config.base_filters * 2 ** i
        t = conv_out(t, STRIDED["kernel_size"][0], STRIDED["stride"][0], STRIDED["padding"][0])
        f = conv_out(f, STRIDED["kernel_size"][1], STRIDED["stride"][1], STRIDED["padding"][1])
    for _ in range(config.frequency_layers):
        t = conv_out(t, FREQUENCY["kernel_size"][0], FREQUENCY["stride"][0], FREQUENCY["padding"][0])
        f = conv_out(f, FREQUENCY["kernel_size"][1], FREQUENCY["stride"][1], FREQUENCY["padding"][1])
    if t <= 0 or f <= 0:
        raise ValueError(f"Critic input {config.input_frames}x{config.input_bins} is too small for its layers")
    return channels, t, f


class Critic(nn.Module):
    """Scores [B, T, F] excerpts with one unbounded scalar each."""

    def __init__(self, config: CriticConfig):
        super().__init__()
        self.config = config
        layers = []
        channels = 1
        for i in range(config.strided_layers):
            out = config.base_filters * 2 ** i
            layers.append(nn.Conv2d(channels, out, **STRIDED))
            channels = out
        for _ in range(config.frequency_layers):
            layers.append(nn.Conv2d(channels, channels, **FREQUENCY))
        self.convs = nn.ModuleList(layers)

        c, t, f = feature_shape(config)
        self.dense = nn.Linear(c * t * f, config.dense_units)
        self.out = nn.Linear(config.dense_units, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        expected = (self.config.input_frames, self.config.input_bins)
        if x.dim() != 3 or tuple(x.shape[-2:]) != expected:
            raise ValueError(f"Critic expects input [batch, {expected[0]}, {expected[1]}], got {list(x.shape)}")
        leak = self.config.leak
        h = x.unsqueeze(1)
        for conv in self.convs:
            h = F.leaky_relu(conv(h), leak)
        h = F.leaky_relu(self.dense(h.flatten(1)), leak)
        return self.out(h).squeeze(1)


def init_critic(config: CriticConfig, seed: int = 0) -> Critic:
    """Kaiming (fan-in) weights for the Leaky ReLU slope, zero biases; global RNG untouched."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        critic = Critic(config)
        for module in critic.modules():
            if isinstance(module, (nn.Conv2d, nn.Linear)):
                nn.init.kaiming_normal_(module.weight, a=config.leak, mode="fan_in", nonlinearity="leaky_relu")
                nn.init.zeros_(module.bias)
    return critic


def score(critic: Critic, excerpts: torch.Tensor) -> torch.Tensor:
    """Critic output for a batch [B, T, F] or a single grid [T, F]."""
    if excerpts.dim() == 2:
        return critic(excerpts.unsqueeze(0))[0]
    return critic(excerpts)


def input_gradient(critic: Critic, excerpts: torch.Tensor, create_graph: bool = False) -> torch.Tensor:
    """
    Gradient of each excerpt's score with respect to that excerpt.

    Args:
        critic: Scoring network.
        excerpts: [B, T, F] or [T, F].
        create_graph: Keep the graph so the result can be differentiated
            again (gradient penalty).

    Returns:
        Tensor shaped like `excerpts`.
    """
    # callers may run under no_grad (finite differences, figures)
    with torch.enable_grad():
        x = excerpts if create_graph and excerpts.requires_grad else excerpts.detach().requires_grad_(True)
        (grad,) = torch.autograd.grad(score(critic, x).sum(), x, create_graph=create_graph)
    return grad
