"""
Flat `section.key = value` experiment configuration.

Every key has a default, a type and a one-line description in DEFAULTS;
unknown keys are rejected. The resolved configuration (defaults applied)
is written next to every output as `config.resolved.txt` and parses back
to an identical config.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, NamedTuple, Optional, Union

from src import constants as C
from src.data.toy import ToyConfig
from src.models.critic import CriticConfig
from src.models.separator import SeparatorConfig
from src.processes.training import TrainConfig

RESOLVED_NAME = "config.resolved.txt"
AUTO = "auto"


class Entry(NamedTuple):
    default: Any
    kind: type
    description: str
    optional: bool = False


DEFAULTS: Dict[str, Entry] = {
    # data
    "data.dir": Entry("data/toy", str, "corpus directory (holds manifest.csv)"),
    "data.n_paired_tracks": Entry(20, int, "paired (multi-track) toy tracks"),
    "data.n_unlabelled_tracks": Entry(200, int, "unlabelled toy mixtures"),
    "data.n_solo_tracks_per_source": Entry(200, int, "solo toy tracks per source"),
    "data.n_validation_tracks": Entry(20, int, "paired-format validation tracks"),
    "data.n_test_tracks": Entry(160, int, "paired-format test tracks"),
    "data.track_seconds": Entry(6.0, float, "length of every toy track"),
    "data.seed": Entry(0, int, "toy corpus seed"),
    "data.correlation_strength": Entry(0.5, float, "probability a source follows the shared per-track latent"),
    # separator
    "separator.levels": Entry(C.SEPARATOR_LEVELS, int, "U-Net down/up blocks"),
    "separator.base_filters": Entry(C.SEPARATOR_BASE_FILTERS, int, "filters of the first conv, doubled per level"),
    "separator.output_frames": Entry(C.OUTPUT_FRAMES, int, "output window frames (input size is derived)"),
    "separator.output_bins": Entry(C.OUTPUT_BINS, int, "output window bins (input size is derived)"),
    "separator.leak": Entry(C.SEPARATOR_LEAK, float, "Leaky ReLU slope"),
    # critic
    "critic.strided_layers": Entry(C.CRITIC_STRIDED_LAYERS, int, "4x4 stride-2 conv layers"),
    "critic.frequency_layers": Entry(C.CRITIC_FREQUENCY_LAYERS, int, "2x4 stride-(1,2) conv layers"),
    "critic.base_filters": Entry(C.CRITIC_BASE_FILTERS, int, "filters of the first strided conv"),
    "critic.dense_units": Entry(C.CRITIC_DENSE_UNITS, int, "units of the dense layer"),
    "critic.leak": Entry(C.CRITIC_LEAK, float, "Leaky ReLU slope"),
    # loss
    "loss.alpha": Entry(None, float, "adversarial weight (auto: from train.mode)", optional=True),
    "loss.beta": Entry(None, float, "additive-penalty weight (auto: from train.mode)", optional=True),
    "loss.lambda_gp": Entry(C.LAMBDA_GP, float, "gradient-penalty weight"),
    "loss.one_sided_penalty": Entry(True, bool, "penalize only gradient norms above 1"),
    "loss.supervised_norm": Entry("mse", str, "mse | l2"),
    "loss.additive_domain": Entry("log", str, "log | linear"),
    # train
    "train.mode": Entry("V", str, "baseline | V | VA"),
    "train.learning_rate": Entry(C.LEARNING_RATE, float, "Adam learning rate (all models)"),
    "train.separator_betas": Entry(C.SEPARATOR_BETAS, tuple, "Adam betas of the separator"),
    "train.critic_betas": Entry(C.CRITIC_BETAS, tuple, "Adam betas of the critics"),
    "train.adam_eps": Entry(C.ADAM_EPS, float, "Adam epsilon"),
    "train.batch_size": Entry(C.BATCH_SIZE, int, "excerpts per batch"),
    "train.steps_per_epoch": Entry(C.STEPS_PER_EPOCH, int, "separator updates per epoch"),
    "train.patience_epochs": Entry(C.PATIENCE_EPOCHS, int, "epochs without improvement before stopping"),
    "train.n_disc": Entry(C.N_DISC, int, "critic updates per separator update"),
    "train.max_epochs": Entry(100, int, "hard epoch limit"),
    "train.seed": Entry(0, int, "model initialization and batch sampling seed"),
    "train.loudness_range": Entry(C.LOUDNESS_RANGE, tuple, "loudness factors of real critic excerpts"),
    "train.dtype": Entry("float32", str, "float32 | float64"),
    "train.deterministic": Entry(False, bool, "force deterministic torch kernels"),
    # eval
    "eval.export_estimates": Entry(False, bool, "write separated sources as 16-bit WAV"),
    # visualize
    "visualize.max_bin": Entry(64, int, "highest frequency bin shown"),
    "visualize.tile": Entry(-1, int, "tile of the track to show (-1: middle)"),
    # paths
    "paths.run_root": Entry("", str, "run directory root (empty: $SEMISEP_RUN_ROOT or ./runs)"),
    "paths.run_name": Entry("", str, "run directory name (empty: <mode>_<timestamp>)"),
}


def _parse_value(key: str, raw: str) -> Any:
    entry = DEFAULTS[key]
    raw = raw.strip()
    if entry.optional and raw.lower() in (AUTO, "none", ""):
        return None
    try:
        if entry.kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if entry.kind is tuple:
            element = type(entry.default[0])
            return tuple(element(part) for part in raw.split(","))
        return entry.kind(raw)
    except ValueError as e:
        raise ValueError(f"Config key '{key}': cannot parse '{raw}' as {entry.kind.__name__}") from e


def _format_value(value: Any) -> str:
    if value is None:
        return AUTO
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str) -> Dict[str, Any]:
    """
    Parses `section.key = value` lines; `#` starts a comment.

    Raises:
        ValueError: On malformed lines, unknown keys or unparseable values.
    """
    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"Config line {number} is not 'key = value': {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ValueError(f"Unknown config key '{key}' (line {number})")
        values[key] = _parse_value(key, raw)
    return values


@dataclass(frozen=True)
class ExperimentConfig:
    values: Mapping[str, Any] = field(default_factory=lambda: {k: e.default for k, e in DEFAULTS.items()})

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def _section(self, section: str) -> Dict[str, Any]:
        prefix = f"{section}."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    @property
    def data_dir(self) -> Path:
        return Path(self["data.dir"])

    @property
    def run_root(self) -> Path:
        return Path(self["paths.run_root"]) if self["paths.run_root"] else C.RUN_ROOT

    def toy_config(self) -> ToyConfig:
        data = self._section("data")
        data.pop("dir")
        return ToyConfig(**data)

    def separator_config(self) -> SeparatorConfig:
        return SeparatorConfig(**self._section("separator"))

    def critic_config(self) -> CriticConfig:
        return CriticConfig(**self._section("critic"))

    def train_config(self) -> TrainConfig:
        train, loss = self._section("train"), self._section("loss")
        return TrainConfig(
            **train,
            alpha=loss["alpha"],
            beta=loss["beta"],
            lambda_gp=loss["lambda_gp"],
            one_sided_penalty=loss["one_sided_penalty"],
            supervised_norm=loss["supervised_norm"],
            additive_domain=loss["additive_domain"],
            separator=self.separator_config(),
            critic=self.critic_config(),
        )

    def to_text(self) -> str:
        lines, section = [], None
        for key, entry in DEFAULTS.items():
            if key.split(".")[0] != section:
                section = key.split(".")[0]
                lines.append(f"\n# ── {section} ──")
            lines.append(f"# {entry.description}")
            lines.append(f"{key} = {_format_value(self.values[key])}")
        return "\n".join(lines).lstrip() + "\n"


def load_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """
    Defaults, then the file at `path`, then `key=value` overrides.

    Raises:
        FileNotFoundError: If `path` does not exist.
    """
    values = {k: e.default for k, e in DEFAULTS.items()}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8")))
    values.update(parse_config_text("\n".join(overrides)))
    config = ExperimentConfig(values)
    # typed configs check their own ranges
    config.toy_config()
    config.train_config()
    return config


def write_resolved(config: ExperimentConfig, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RESOLVED_NAME
    path.write_text(config.to_text(), encoding="utf-8")
    return path
