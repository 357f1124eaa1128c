from pathlib import Path

import pytest

from src.orchestrator.config import (
    DEFAULTS,
    RESOLVED_NAME,
    ExperimentConfig,
    load_config,
    parse_config_text,
    write_resolved,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults_build_typed_configs():
    config = load_config()
    assert config["train.mode"] == "V"
    assert config.train_config().separator.plan.input_shape == (158, 350)
    assert config.train_config().alpha is None
    toy = config.toy_config()
    # 200 paired-format tracks, 20 of them in the supervised pool
    assert toy.n_paired_tracks == 20
    assert toy.n_paired_tracks + toy.n_validation_tracks + toy.n_test_tracks == 200


def test_file_then_overrides(tmp_path):
    path = tmp_path / "exp.txt"
    path.write_text("train.mode = VA  # both critics\nloss.alpha = 0.25\ntrain.separator_betas = 0.8, 0.99\n")
    config = load_config(path, ["train.mode=baseline", "loss.beta = auto"])
    assert config["train.mode"] == "baseline"
    assert config["loss.alpha"] == 0.25
    assert config["loss.beta"] is None
    assert config["train.separator_betas"] == (0.8, 0.99)


def test_resolved_config_parses_back_identically(tmp_path):
    config = load_config(CONFIGS / "toy_va.txt", ["loss.alpha=0.1", "train.learning_rate=3e-05"])
    path = write_resolved(config, tmp_path)
    assert path.name == RESOLVED_NAME
    assert load_config(path) == config
    assert all(f"{key} = " in path.read_text() for key in DEFAULTS)


@pytest.mark.parametrize("name, mode", [("toy_baseline.txt", "baseline"), ("toy_v.txt", "V"), ("toy_va.txt", "VA")])
def test_shipped_configs(name, mode):
    config = load_config(CONFIGS / name)
    train = config.train_config()
    assert train.mode == mode
    assert train.separator.plan.input_shape == (54, 278)
    assert train.critic_config().input_frames == 32


@pytest.mark.parametrize("text", [
    "train.mode V",
    "train.colour = red",
    "train.batch_size = many",
    "loss.one_sided_penalty = maybe",
    "train.separator_betas = 0.9;0.99",
])
def test_malformed_config_text(text):
    with pytest.raises(ValueError):
        parse_config_text(text)


def test_invalid_values_are_rejected_on_load(tmp_path):
    with pytest.raises(ValueError):
        load_config(overrides=["train.mode=VV"])
    with pytest.raises(ValueError):
        load_config(overrides=["data.correlation_strength=2"])
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.txt")


def test_run_root_falls_back_to_constant(tmp_path):
    from src.constants import RUN_ROOT

    assert ExperimentConfig().run_root == RUN_ROOT
    assert load_config(overrides=[f"paths.run_root={tmp_path}"]).run_root == tmp_path
