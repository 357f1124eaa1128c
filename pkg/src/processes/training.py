"""
Alternating semi-supervised optimization.

Each step updates the separator once on L_s + alpha * L_u + beta * L_add,
then every active critic `n_disc` times on its penalized Wasserstein loss.
Epochs end with a validation sweep; the best epoch is kept and training
stops after `patience_epochs` epochs without a strict improvement.
"""
import copy
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from src.constants import (
    ADAM_EPS,
    BATCH_SIZE,
    CRITIC_BETAS,
    LAMBDA_GP,
    LEARNING_RATE,
    LOUDNESS_RANGE,
    MODE_WEIGHTS,
    N_DISC,
    PATIENCE_EPOCHS,
    SEPARATOR_BETAS,
    SOURCE_NAMES,
    STEPS_PER_EPOCH,
)
from src.data.corpus import DataCorpus, Track
from src.data.sampling import (
    Batch,
    sample_paired_batch,
    sample_source_batch,
    sample_unlabelled_batch,
    tile_track,
)
from src.models.checkpoint import load_model, save_model, state_digest
from src.models.critic import Critic, CriticConfig, init_critic
from src.models.separator import Separator, SeparatorConfig, init_separator
from src.processes.losses import (
    LossWeights,
    additive_loss,
    critic_loss_terms,
    separator_adversarial_loss,
    supervised_loss,
    total_separator_loss,
)
from src.utils.json import read_json_file, write_json_file
from src.utils.timer import format_timestamp, get_current_time

LOSS_LOG = "loss_log.csv"
VALIDATION_LOG = "validation_log.csv"
BEST_MARKER = "best.json"
TRAIN_STATE = "train_state.pt"
DTYPES = {"float32": torch.float32, "float64": torch.float64}


class NonFiniteLossError(RuntimeError):
    """A training loss became NaN or infinite."""

    def __init__(self, step: int, epoch: int, losses: Mapping[str, float]):
        self.step, self.epoch, self.losses = step, epoch, dict(losses)
        detail = ", ".join(f"{k}={v:.4g}" for k, v in self.losses.items())
        super().__init__(f"Non-finite loss at step {step} (epoch {epoch}): {detail}")


def source_name(k: int) -> str:
    return SOURCE_NAMES[k] if k < len(SOURCE_NAMES) else f"source_{k}"


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimization schedule and objective.

    `mode` picks alpha = beta and the active critics (baseline: none,
    V: source 0, VA: all); `alpha`/`beta` override the mode's values when set.
    """

    mode: str = "V"
    alpha: Optional[float] = None
    beta: Optional[float] = None
    lambda_gp: float = LAMBDA_GP
    one_sided_penalty: bool = True
    supervised_norm: str = "mse"
    additive_domain: str = "log"
    learning_rate: float = LEARNING_RATE
    separator_betas: Tuple[float, float] = SEPARATOR_BETAS
    critic_betas: Tuple[float, float] = CRITIC_BETAS
    adam_eps: float = ADAM_EPS
    batch_size: int = BATCH_SIZE
    steps_per_epoch: int = STEPS_PER_EPOCH
    patience_epochs: int = PATIENCE_EPOCHS
    n_disc: int = N_DISC
    max_epochs: int = 100
    seed: int = 0
    loudness_range: Tuple[float, float] = LOUDNESS_RANGE
    dtype: str = "float32"
    deterministic: bool = False
    separator: SeparatorConfig = field(default_factory=SeparatorConfig)
    critic: CriticConfig = field(default_factory=CriticConfig)

    def __post_init__(self):
        if self.mode not in MODE_WEIGHTS:
            raise ValueError(f"Unknown mode '{self.mode}' (expected one of {sorted(MODE_WEIGHTS)})")
        if self.dtype not in DTYPES:
            raise ValueError(f"Unknown dtype '{self.dtype}' (expected float32 or float64)")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if min(self.batch_size, self.steps_per_epoch, self.patience_epochs, self.max_epochs) < 1:
            raise ValueError("batch_size, steps_per_epoch, patience_epochs and max_epochs must be positive")
        if self.n_disc < 0:
            raise ValueError(f"n_disc must be nonnegative, got {self.n_disc}")

    def weights(self, n_sources: int) -> LossWeights:
        """
        Resolved loss weights. Critics only feed the separator through alpha,
        so alpha = 0 leaves none active; with beta = 0 as well the run is the baseline.
        """
        mode_alpha, active = MODE_WEIGHTS[self.mode]
        if self.mode == "VA":
            active = tuple(range(n_sources))
        alpha = mode_alpha if self.alpha is None else self.alpha
        if alpha == 0:
            active = ()
        return LossWeights(
            alpha=alpha,
            beta=mode_alpha if self.beta is None else self.beta,
            lambda_gp=self.lambda_gp,
            active_critics=tuple(k for k in active if k < n_sources),
        )

    @property
    def torch_dtype(self) -> torch.dtype:
        return DTYPES[self.dtype]

    def critic_config(self) -> CriticConfig:
        """Critic architecture sized to the separator's output grid."""
        frames, bins = self.separator.plan.output_shape
        return replace(self.critic, input_frames=frames, input_bins=bins)


class StepLosses(NamedTuple):
    L_s: float
    L_u: float
    L_add: float
    L_total: float


@dataclass
class TrainState:
    """Everything needed to continue training bit-identically."""

    config: TrainConfig
    weights: LossWeights
    separator: Separator
    critics: Dict[int, Critic]
    separator_optimizer: torch.optim.Adam
    critic_optimizers: Dict[int, torch.optim.Adam]
    rng: np.random.Generator
    generator: torch.Generator
    epoch: int = 0
    step: int = 0
    best_loss: float = math.inf
    best_epoch: int = -1
    since_improvement: int = 0
    best_weights: Optional[Dict[str, dict]] = None

    @property
    def n_sources(self) -> int:
        return self.separator.config.n_sources

    def snapshot(self) -> Dict[str, dict]:
        weights = {"separator": copy.deepcopy(self.separator.state_dict())}
        for k, critic in self.critics.items():
            weights[f"critic_{k}"] = copy.deepcopy(critic.state_dict())
        return weights

    def restore(self, weights: Mapping[str, dict]) -> None:
        self.separator.load_state_dict(weights["separator"])
        for k, critic in self.critics.items():
            critic.load_state_dict(weights[f"critic_{k}"])


def init_state(config: TrainConfig, n_sources: int) -> TrainState:
    """
    Fresh models and optimizers. Critics exist only for the active sources,
    so the baseline never builds one.
    """
    if config.deterministic:
        torch.use_deterministic_algorithms(True)
    dtype = config.torch_dtype
    weights = config.weights(n_sources)

    separator = init_separator(replace(config.separator, n_sources=n_sources), seed=config.seed).to(dtype)
    critics = {
        k: init_critic(config.critic_config(), seed=config.seed + 1 + k).to(dtype)
        for k in weights.active_critics
    }
    generator = torch.Generator()
    generator.manual_seed(config.seed)
    return TrainState(
        config=config,
        weights=weights,
        separator=separator,
        critics=critics,
        separator_optimizer=torch.optim.Adam(
            separator.parameters(), lr=config.learning_rate, betas=config.separator_betas, eps=config.adam_eps
        ),
        critic_optimizers={
            k: torch.optim.Adam(c.parameters(), lr=config.learning_rate, betas=config.critic_betas, eps=config.adam_eps)
            for k, c in critics.items()
        },
        rng=np.random.default_rng(config.seed),
        generator=generator,
    )


def _tensor(values: np.ndarray, state: TrainState) -> torch.Tensor:
    return torch.as_tensor(values, dtype=state.config.torch_dtype)


def _check_finite(state: TrainState, losses: Mapping[str, torch.Tensor]) -> None:
    if not all(torch.isfinite(v).item() for v in losses.values()):
        raise NonFiniteLossError(state.step, state.epoch, {k: float(v) for k, v in losses.items()})


def separator_step(state: TrainState, paired: Batch, unlabelled: Optional[Batch] = None) -> StepLosses:
    """
    One Adam update of the separator on L = L_s + alpha * L_u + beta * L_add.

    Gradients reach only the separator's parameters; critics stay untouched.
    Without an unlabelled batch L_u and L_add are zero.
    """
    config, weights, model = state.config, state.weights, state.separator
    model.train()

    estimates = model(_tensor(paired.inputs, state))
    l_s = supervised_loss(estimates, _tensor(paired.targets, state), config.supervised_norm)
    l_u = torch.zeros((), dtype=l_s.dtype)
    l_add = torch.zeros((), dtype=l_s.dtype)

    if unlabelled is not None and weights.semi_supervised:
        fakes = model(_tensor(unlabelled.inputs, state))
        if state.critics:
            l_u = separator_adversarial_loss(state.critics, {k: fakes[:, k] for k in state.critics})
        l_add = additive_loss(fakes, _tensor(unlabelled.mixtures, state), config.additive_domain)

    total = total_separator_loss(l_s, l_u, l_add, weights)
    _check_finite(state, {"L_s": l_s, "L_u": l_u, "L_add": l_add, "L_total": total})

    state.separator_optimizer.zero_grad()
    total.backward(inputs=list(model.parameters()))
    state.separator_optimizer.step()
    state.step += 1
    return StepLosses(l_s.item(), l_u.item(), l_add.item(), total.item())


def critic_steps(
    state: TrainState, unlabelled: Optional[Batch], source_batches: Mapping[int, Batch]
) -> Dict[int, Tuple[float, float]]:
    """
    `n_disc` Adam updates of every active critic.

    Fakes are the separator's estimates on the shared unlabelled batch,
    computed once without gradient; each critic sees its own real batch.

    Returns:
        Source index -> (Wasserstein estimate, critic loss) of the last update.
    """
    config = state.config
    if not state.critics or config.n_disc == 0:
        return {}

    state.separator.eval()
    with torch.no_grad():
        fakes = state.separator(_tensor(unlabelled.inputs, state))

    results = {}
    for k in sorted(state.critics):
        critic, optimizer = state.critics[k], state.critic_optimizers[k]
        real, fake = _tensor(source_batches[k].inputs, state), fakes[:, k]
        for _ in range(config.n_disc):
            terms = critic_loss_terms(
                critic, real, fake, state.weights.lambda_gp, state.generator, config.one_sided_penalty
            )
            _check_finite(state, {f"W_{source_name(k)}": terms.wasserstein, f"critic_loss_{source_name(k)}": terms.total})
            optimizer.zero_grad()
            terms.total.backward(inputs=list(critic.parameters()))
            optimizer.step()
        results[k] = (terms.wasserstein.item(), terms.total.item())
    return results


def validation_loss(separator: Separator, tracks: Sequence[Track], norm: str = "mse", chunk: int = BATCH_SIZE) -> float:
    """
    L_s averaged over every excerpt of a deterministic tiling of `tracks`.
    """
    if not tracks:
        raise ValueError("Validation needs at least one track")
    dtype = next(separator.parameters()).dtype
    separator.eval()
    losses, counts = [], []
    with torch.no_grad():
        for track in tracks:
            batch = tile_track(track, separator.plan)
            if batch.targets is None:
                raise ValueError(f"Validation track {track.name} has no source stems")
            for lo in range(0, len(batch), chunk):
                inputs = torch.as_tensor(batch.inputs[lo:lo + chunk], dtype=dtype)
                targets = torch.as_tensor(batch.targets[lo:lo + chunk], dtype=dtype)
                losses.append(supervised_loss(separator(inputs), targets, norm).item())
                counts.append(inputs.shape[0])
    return float(np.average(losses, weights=counts))


def validate(state: TrainState, tracks: Sequence[Track]) -> float:
    return validation_loss(state.separator, tracks, state.config.supervised_norm, state.config.batch_size)


def _log_row(state: TrainState, losses: StepLosses, critic_results: Mapping[int, Tuple[float, float]]) -> Dict[str, float]:
    row = {"step": state.step, "epoch": state.epoch + 1, **losses._asdict()}
    for k in range(state.n_sources):
        w, loss = critic_results.get(k, (math.nan, math.nan))
        row[f"W_{source_name(k)}"] = w
        row[f"critic_loss_{source_name(k)}"] = loss
    return row


def train_one_step(state: TrainState, corpus: DataCorpus) -> Dict[str, float]:
    """Draws the step's batches, updates separator then critics, returns the log row."""
    config, plan = state.config, state.separator.plan
    paired = sample_paired_batch(corpus, config.batch_size, state.rng, plan)
    unlabelled = None
    if state.weights.semi_supervised:
        unlabelled = sample_unlabelled_batch(corpus, config.batch_size, state.rng, plan)

    losses = separator_step(state, paired, unlabelled)

    critic_results = {}
    if state.critics and config.n_disc > 0:
        sources = {
            k: sample_source_batch(corpus, k, config.batch_size, state.rng, plan, config.loudness_range)
            for k in sorted(state.critics)
        }
        critic_results = critic_steps(state, unlabelled, sources)
    return _log_row(state, losses, critic_results)


# ── Checkpoints ────────────────────────────────────────────────────────────────

def epoch_dir(run_dir: Path, epoch: int) -> Path:
    return Path(run_dir) / "checkpoints" / f"epoch_{epoch:03d}"


def save_checkpoint(state: TrainState, directory: Path) -> Path:
    """
    Writes models, optimizer moments, RNG states and loop counters to `directory`.
    """
    directory = Path(directory)
    save_model(state.separator, directory, "separator")
    for k, critic in state.critics.items():
        save_model(critic, directory, f"critic_{source_name(k)}")

    torch.save(
        {
            "separator_optimizer": state.separator_optimizer.state_dict(),
            "critic_optimizers": {k: opt.state_dict() for k, opt in state.critic_optimizers.items()},
            "rng": state.rng.bit_generator.state,
            "generator": state.generator.get_state(),
            "epoch": state.epoch,
            "step": state.step,
            "best_loss": state.best_loss,
            "best_epoch": state.best_epoch,
            "since_improvement": state.since_improvement,
        },
        directory / TRAIN_STATE,
    )
    write_json_file(
        {
            "saved_at": format_timestamp(get_current_time()),
            "epoch": state.epoch,
            "step": state.step,
            "separator_sha256": state_digest(state.separator),
            "train_config": asdict(state.config),
        },
        directory / "meta.json",
    )
    return directory


def load_checkpoint(config: TrainConfig, directory: Path, n_sources: int) -> TrainState:
    """
    Rebuilds a TrainState from `save_checkpoint` output.

    Raises:
        FileNotFoundError: If the directory lacks a training state.
    """
    directory = Path(directory)
    path = directory / TRAIN_STATE
    if not path.exists():
        raise FileNotFoundError(f"No training state in {directory}")

    state = init_state(config, n_sources)
    stored = torch.load(path, map_location="cpu", weights_only=True)
    state.separator.load_state_dict(load_model(directory, "separator").state_dict())
    state.separator_optimizer.load_state_dict(stored["separator_optimizer"])
    for k, critic in state.critics.items():
        critic.load_state_dict(load_model(directory, f"critic_{source_name(k)}").state_dict())
        state.critic_optimizers[k].load_state_dict(stored["critic_optimizers"][k])

    state.rng.bit_generator.state = stored["rng"]
    state.generator.set_state(stored["generator"])
    for key in ("epoch", "step", "best_loss", "best_epoch", "since_improvement"):
        setattr(state, key, stored[key])
    return state


def _load_best_weights(state: TrainState, run_dir: Path) -> Optional[Dict[str, dict]]:
    if state.best_epoch < 0:
        return None
    directory = epoch_dir(run_dir, state.best_epoch + 1)
    weights = {"separator": load_model(directory, "separator").state_dict()}
    for k in state.critics:
        weights[f"critic_{k}"] = load_model(directory, f"critic_{source_name(k)}").state_dict()
    return weights


@dataclass
class TrainingResult:
    state: TrainState
    log: pd.DataFrame
    validation: pd.DataFrame
    stopped_early: bool = False


def _write_logs(run_dir: Optional[Path], rows: List[dict], val_rows: List[dict]) -> Tuple[pd.DataFrame, pd.DataFrame]:
    log, validation = pd.DataFrame(rows), pd.DataFrame(val_rows)
    if run_dir is not None:
        log.to_csv(Path(run_dir) / LOSS_LOG, index=False)
        validation.to_csv(Path(run_dir) / VALIDATION_LOG, index=False)
    return log, validation


def run_training(
    config: TrainConfig,
    corpus: DataCorpus,
    validation_tracks: Sequence[Track],
    run_dir: Optional[Path] = None,
    resume_from: Optional[Path] = None,
    progress: bool = True,
) -> TrainingResult:
    """
    Trains until `max_epochs` or until `patience_epochs` epochs pass without
    a strict decrease of the validation loss, then restores the best epoch.

    Args:
        config: Schedule, objective and architecture.
        corpus: Paired, unlabelled and solo pools.
        validation_tracks: Paired-format tracks for model selection.
        run_dir: Receives per-epoch checkpoints, the best marker and the loss logs.
        resume_from: A checkpoint directory (`checkpoints/epoch_XXX`) of this run.
        progress: Show a tqdm bar per epoch.

    Raises:
        NonFiniteLossError: When any loss goes NaN or infinite; logs are still written.
    """
    rows: List[dict] = []
    val_rows: List[dict] = []
    if run_dir is not None:
        Path(run_dir).mkdir(parents=True, exist_ok=True)
    if resume_from is not None:
        if run_dir is None:
            raise ValueError("Resuming needs the run directory")
        state = load_checkpoint(config, resume_from, corpus.n_sources)
        state.best_weights = _load_best_weights(state, run_dir)
        rows = [r for r in pd.read_csv(Path(run_dir) / LOSS_LOG).to_dict("records") if r["step"] <= state.step]
        val_rows = [r for r in pd.read_csv(Path(run_dir) / VALIDATION_LOG).to_dict("records") if r["epoch"] <= state.epoch]
        print(f"⏳ Resuming at epoch {state.epoch + 1} (step {state.step})")
    else:
        state = init_state(config, corpus.n_sources)

    stopped_early = state.since_improvement >= config.patience_epochs
    try:
        while state.epoch < config.max_epochs and not stopped_early:
            bar = tqdm(range(config.steps_per_epoch), leave=False, disable=not progress)
            for _ in bar:
                row = train_one_step(state, corpus)
                rows.append(row)
                bar.set_description(f"Epoch {state.epoch + 1}: L={row['L_total']:.4f}")

            val = validate(state, validation_tracks)
            state.epoch += 1
            improved = val < state.best_loss
            if improved:
                state.best_loss, state.best_epoch, state.since_improvement = val, state.epoch - 1, 0
                state.best_weights = state.snapshot()
            else:
                state.since_improvement += 1
            val_rows.append({"epoch": state.epoch, "step": state.step, "validation_L_s": val, "best": improved})
            print(f"📊 Epoch {state.epoch}: validation L_s = {val:.5f}" + (" (new best)" if improved else ""))

            if run_dir is not None:
                save_checkpoint(state, epoch_dir(run_dir, state.epoch))
                if improved:
                    write_json_file({"epoch": state.epoch, "validation_L_s": val}, Path(run_dir) / BEST_MARKER)

            stopped_early = state.since_improvement >= config.patience_epochs
            if stopped_early:
                print(f"⚠️ No validation improvement for {state.since_improvement} epochs, stopping")
    finally:
        log, validation = _write_logs(run_dir, rows, val_rows)

    if state.best_weights is not None:
        state.restore(state.best_weights)
        print(f"✅ Restored best epoch {state.best_epoch + 1} (validation L_s = {state.best_loss:.5f})")
    return TrainingResult(state=state, log=log, validation=validation, stopped_early=stopped_early)


def best_checkpoint(run_dir: Path) -> Path:
    """
    Directory of the best epoch recorded by `run_training`.

    Raises:
        FileNotFoundError: If the run has no best marker.
    """
    marker = read_json_file(Path(run_dir) / BEST_MARKER)
    return epoch_dir(run_dir, marker["epoch"])
