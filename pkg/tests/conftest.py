import sys
from pathlib import Path

import numpy as np
import pytest
import torch

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.data.toy import ToyConfig, generate_toy_corpus  # noqa: E402
from src.models.critic import CriticConfig, init_critic  # noqa: E402
from src.models.separator import SeparatorConfig, init_separator  # noqa: E402
from src.processes.training import TrainConfig  # noqa: E402

# one level, 2 filters: input 12x16 -> output 4x8
TINY_SEPARATOR = SeparatorConfig(n_sources=2, levels=1, base_filters=2, output_frames=4, output_bins=8)
TINY_CRITIC = CriticConfig(input_frames=4, input_bins=8, strided_layers=1, frequency_layers=0,
                           base_filters=2, dense_units=3)


def tiny_separator(seed: int = 0) -> torch.nn.Module:
    return init_separator(TINY_SEPARATOR, seed=seed).double()


def tiny_critic(seed: int = 0) -> torch.nn.Module:
    return init_critic(TINY_CRITIC, seed=seed).double()


def tiny_train_config(**overrides) -> TrainConfig:
    values = dict(
        mode="V",
        batch_size=4,
        steps_per_epoch=3,
        max_epochs=2,
        patience_epochs=2,
        n_disc=2,
        learning_rate=1e-3,
        dtype="float64",
        separator=TINY_SEPARATOR,
        critic=TINY_CRITIC,
    )
    values.update(overrides)
    return TrainConfig(**values)


def central_differences(loss_fn, params, step: float = 1e-6):
    """Central finite-difference gradient of a scalar `loss_fn()` for each tensor in `params`."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + step
                up = loss_fn().item()
                flat[i] = original - step
                down = loss_fn().item()
                flat[i] = original
                gflat[i] = (up - down) / (2 * step)
            grads.append(g)
    return grads


def max_relative_error(analytic: torch.Tensor, numeric: torch.Tensor, floor: float = 1e-6) -> float:
    scale = torch.maximum(analytic.abs(), numeric.abs()).clamp(min=floor)
    return ((analytic - numeric).abs() / scale).max().item()


@pytest.fixture(scope="session")
def small_toy_config() -> ToyConfig:
    return ToyConfig(
        n_paired_tracks=3,
        n_unlabelled_tracks=3,
        n_solo_tracks_per_source=3,
        n_validation_tracks=2,
        n_test_tracks=2,
        track_seconds=0.5,
        seed=7,
    )


@pytest.fixture(scope="session")
def small_corpus(small_toy_config):
    return generate_toy_corpus(small_toy_config)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
