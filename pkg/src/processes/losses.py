"""
Training objectives: supervised loss, additive penalty, Wasserstein estimate,
one-sided gradient penalty and the weighted separator total.

Grids are [B, T, F] per source; K-source stacks are [B, K, T, F].
"""
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Optional, Tuple

import torch

from src.constants import LAMBDA_GP
from src.models.critic import Critic, input_gradient


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.0
    beta: float = 0.0
    lambda_gp: float = LAMBDA_GP
    active_critics: Tuple[int, ...] = ()

    def __post_init__(self):
        if min(self.alpha, self.beta, self.lambda_gp) < 0:
            raise ValueError(f"Loss weights must be nonnegative: {self}")
        if len(set(self.active_critics)) != len(self.active_critics):
            raise ValueError(f"Duplicate active critics: {self.active_critics}")

    @property
    def semi_supervised(self) -> bool:
        return bool(self.active_critics) or self.beta > 0


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {list(a.shape)} vs {list(b.shape)}")


def supervised_loss(estimates: torch.Tensor, targets: torch.Tensor, norm: str = "mse") -> torch.Tensor:
    """
    Distance between source estimates and targets.

    `mse` averages squared differences over batch, sources and grid cells;
    `l2` averages the Euclidean norm of each (example, source) residual grid.
    """
    _check_same_shape(estimates, targets, "supervised_loss")
    diff = estimates - targets
    if norm == "mse":
        return diff.pow(2).mean()
    if norm == "l2":
        return torch.linalg.vector_norm(diff.flatten(2), dim=-1).mean()
    raise ValueError(f"Unknown supervised norm '{norm}' (expected mse or l2)")


def additive_loss(estimates: torch.Tensor, mixtures: torch.Tensor, domain: str = "log") -> torch.Tensor:
    """
    Mean over the batch of || sum_k estimate_k - mixture ||_2.

    Args:
        estimates: [B, K, T, F] log-normalized estimates.
        mixtures: [B, T, F] log-normalized mixtures cropped to the output grid.
        domain: `log` compares log-normalized grids, `linear` compares
            magnitudes after undoing log(1 + x).
    """
    if estimates.dim() != 4:
        raise ValueError(f"additive_loss expects estimates [B, K, T, F], got {list(estimates.shape)}")
    _check_same_shape(estimates[:, 0], mixtures, "additive_loss")
    if domain == "linear":
        estimates, mixtures = torch.expm1(estimates), torch.expm1(mixtures)
    elif domain != "log":
        raise ValueError(f"Unknown additive domain '{domain}' (expected log or linear)")
    residual = estimates.sum(dim=1) - mixtures
    return torch.linalg.vector_norm(residual.flatten(1), dim=-1).mean()


def _check_nonempty(batch: torch.Tensor, what: str) -> None:
    if batch.shape[0] == 0:
        raise ValueError(f"{what} batch is empty")


def wasserstein_estimate(critic: Critic, real: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    """mean(D(real)) - mean(D(fake))."""
    _check_nonempty(real, "real")
    _check_nonempty(fake, "fake")
    return critic(real).mean() - critic(fake).mean()


def interpolate(real: torch.Tensor, fake: torch.Tensor, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """eps * real + (1 - eps) * fake with one eps ~ U[0, 1] per pair."""
    _check_same_shape(real, fake, "interpolate")
    eps = torch.rand(real.shape[0], generator=generator, dtype=real.dtype, device=real.device)
    eps = eps.view(-1, *([1] * (real.dim() - 1)))
    return eps * real + (1 - eps) * fake


def penalty_from_gradients(grads: torch.Tensor, one_sided: bool = True) -> torch.Tensor:
    """mean over the batch of max(||g|| - 1, 0)^2, or (||g|| - 1)^2 when two-sided."""
    # the epsilon keeps the norm differentiable at g = 0
    norms = torch.sqrt(grads.flatten(1).pow(2).sum(dim=1) + 1e-12)
    excess = norms - 1
    if one_sided:
        excess = excess.clamp(min=0)
    return excess.pow(2).mean()


def gradient_penalty(
    critic: Critic,
    real: torch.Tensor,
    fake: torch.Tensor,
    generator: Optional[torch.Generator] = None,
    one_sided: bool = True,
) -> torch.Tensor:
    """
    Gradient-norm penalty at random interpolates between real and fake excerpts.

    The result stays differentiable with respect to the critic parameters
    (second-order path through the input gradient).
    """
    _check_nonempty(real, "real")
    points = interpolate(real.detach(), fake.detach(), generator).requires_grad_(True)
    grads = input_gradient(critic, points, create_graph=True)
    return penalty_from_gradients(grads, one_sided)


class CriticTerms(NamedTuple):
    total: torch.Tensor
    wasserstein: torch.Tensor
    penalty: torch.Tensor


def critic_loss_terms(
    critic: Critic,
    real: torch.Tensor,
    fake: torch.Tensor,
    lambda_gp: float = LAMBDA_GP,
    generator: Optional[torch.Generator] = None,
    one_sided: bool = True,
) -> CriticTerms:
    w = wasserstein_estimate(critic, real, fake)
    gp = gradient_penalty(critic, real, fake, generator, one_sided)
    return CriticTerms(total=-w + lambda_gp * gp, wasserstein=w, penalty=gp)


def critic_loss(
    critic: Critic,
    real: torch.Tensor,
    fake: torch.Tensor,
    lambda_gp: float = LAMBDA_GP,
    generator: Optional[torch.Generator] = None,
    one_sided: bool = True,
) -> torch.Tensor:
    """mean(D(fake)) - mean(D(real)) + lambda_gp * penalty."""
    return critic_loss_terms(critic, real, fake, lambda_gp, generator, one_sided).total


def separator_adversarial_loss(critics: Mapping[int, Critic], fakes: Mapping[int, torch.Tensor]) -> torch.Tensor:
    """
    Sum over active sources of -mean(D_k(fake_k)).

    Real-batch terms do not depend on the separator and are left out.

    Args:
        critics: Source index -> critic, for the active sources.
        fakes: Source index -> separator estimates [B, T, F] for that source.
    """
    missing = set(critics) - set(fakes)
    if missing:
        raise ValueError(f"No fake batch for active critics {sorted(missing)}")
    terms = [-critics[k](fakes[k]).mean() for k in sorted(critics)]
    if not terms:
        return torch.zeros(())
    return torch.stack(terms).sum()


def total_separator_loss(l_s: torch.Tensor, l_u: torch.Tensor, l_add: torch.Tensor, weights: LossWeights) -> torch.Tensor:
    """L = L_s + alpha * L_u + beta * L_add."""
    return l_s + weights.alpha * l_u + weights.beta * l_add
