import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
import torch

import src.processes.training as training
from conftest import tiny_train_config
from src.data.sampling import sample_paired_batch, sample_source_batch, sample_unlabelled_batch
from src.models.checkpoint import load_model, state_digest
from src.models.separator import SeparatorConfig
from src.processes.losses import supervised_loss
from src.processes.training import (
    BEST_MARKER,
    LOSS_LOG,
    NonFiniteLossError,
    best_checkpoint,
    critic_steps,
    epoch_dir,
    init_state,
    load_checkpoint,
    run_training,
    save_checkpoint,
    separator_step,
    train_one_step,
    validation_loss,
)


def _digests(state):
    return {"separator": state_digest(state.separator), **{k: state_digest(c) for k, c in state.critics.items()}}


def test_mode_weights():
    assert tiny_train_config(mode="baseline").weights(2).active_critics == ()
    v = tiny_train_config(mode="V").weights(2)
    assert v.active_critics == (0,) and v.alpha == v.beta == 0.01
    va = tiny_train_config(mode="VA").weights(3)
    assert va.active_critics == (0, 1, 2) and va.alpha == 0.001
    assert tiny_train_config(mode="V", alpha=0.5).weights(2).alpha == 0.5


def test_config_validation():
    with pytest.raises(ValueError):
        tiny_train_config(mode="A")
    with pytest.raises(ValueError):
        tiny_train_config(dtype="float16")
    with pytest.raises(ValueError):
        tiny_train_config(batch_size=0)


def test_baseline_builds_no_critics():
    state = init_state(tiny_train_config(mode="baseline"), 2)
    assert state.critics == {}
    assert set(init_state(tiny_train_config(mode="VA"), 2).critics) == {0, 1}


@pytest.mark.parametrize("mode", ["V", "VA"])
def test_zero_weights_reduce_to_the_baseline(small_corpus, mode):
    zeroed = init_state(tiny_train_config(mode=mode, alpha=0.0, beta=0.0, seed=4), 2)
    baseline = init_state(tiny_train_config(mode="baseline", seed=4), 2)
    assert zeroed.critics == {} and not zeroed.weights.semi_supervised

    for _ in range(5):
        train_one_step(zeroed, small_corpus)
        train_one_step(baseline, small_corpus)

    assert state_digest(zeroed.separator) == state_digest(baseline.separator)
    assert zeroed.rng.bit_generator.state == baseline.rng.bit_generator.state


def test_additive_penalty_alone_needs_no_critics():
    weights = tiny_train_config(mode="V", alpha=0.0, beta=0.01).weights(2)
    assert weights.active_critics == () and weights.semi_supervised


def test_zero_learning_rate_leaves_parameters_unchanged(small_corpus):
    state = init_state(tiny_train_config(learning_rate=0.0), 2)
    before = _digests(state)
    for _ in range(3):
        train_one_step(state, small_corpus)
    assert _digests(state) == before


def test_baseline_equals_plain_adam_on_supervised_loss(small_corpus):
    config = tiny_train_config(mode="baseline", seed=3)
    state = init_state(config, 2)

    reference = init_state(config, 2).separator
    optimizer = torch.optim.Adam(reference.parameters(), lr=config.learning_rate, betas=config.separator_betas,
                                 eps=config.adam_eps)
    rng = np.random.default_rng(config.seed)
    for _ in range(100):
        train_one_step(state, small_corpus)

        batch = sample_paired_batch(small_corpus, config.batch_size, rng, reference.plan)
        loss = supervised_loss(reference(torch.as_tensor(batch.inputs, dtype=torch.float64)),
                               torch.as_tensor(batch.targets, dtype=torch.float64))
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

    assert state_digest(state.separator) == state_digest(reference)


def test_critic_steps_do_not_touch_the_separator(small_corpus):
    state = init_state(tiny_train_config(mode="VA"), 2)
    plan = state.separator.plan
    unlabelled = sample_unlabelled_batch(small_corpus, 4, state.rng, plan)
    sources = {k: sample_source_batch(small_corpus, k, 4, state.rng, plan) for k in (0, 1)}

    separator_before = state_digest(state.separator)
    critics_before = {k: state_digest(c) for k, c in state.critics.items()}
    results = critic_steps(state, unlabelled, sources)

    assert state_digest(state.separator) == separator_before
    assert set(results) == {0, 1}
    assert all(state_digest(c) != critics_before[k] for k, c in state.critics.items())
    assert all(math.isfinite(w) and math.isfinite(loss) for w, loss in results.values())


def test_separator_step_does_not_touch_the_critics(small_corpus):
    state = init_state(tiny_train_config(mode="V"), 2)
    plan = state.separator.plan
    before = state_digest(state.critics[0])
    losses = separator_step(
        state,
        sample_paired_batch(small_corpus, 4, state.rng, plan),
        sample_unlabelled_batch(small_corpus, 4, state.rng, plan),
    )
    assert state_digest(state.critics[0]) == before
    assert losses.L_total == pytest.approx(losses.L_s + 0.01 * losses.L_u + 0.01 * losses.L_add)
    assert state.step == 1


def test_no_critic_updates_without_discriminator_steps(small_corpus):
    state = init_state(tiny_train_config(n_disc=0), 2)
    before = state_digest(state.critics[0])
    row = train_one_step(state, small_corpus)
    assert state_digest(state.critics[0]) == before
    assert math.isnan(row["W_voice"])


def test_log_row_columns(small_corpus):
    state = init_state(tiny_train_config(mode="V"), 2)
    row = train_one_step(state, small_corpus)
    assert list(row) == ["step", "epoch", "L_s", "L_u", "L_add", "L_total",
                         "W_voice", "critic_loss_voice", "W_accompaniment", "critic_loss_accompaniment"]
    assert math.isfinite(row["W_voice"]) and math.isnan(row["W_accompaniment"])


def test_overfits_a_single_batch(small_corpus):
    config = tiny_train_config(
        mode="baseline", learning_rate=1e-2,
        separator=SeparatorConfig(n_sources=2, levels=1, base_filters=8, output_frames=4, output_bins=8),
    )
    state = init_state(config, 2)
    batch = sample_paired_batch(small_corpus, 4, np.random.default_rng(0), state.separator.plan)
    first = separator_step(state, batch).L_s
    for _ in range(199):
        last = separator_step(state, batch).L_s
    assert last < 0.1 * first


def test_validation_loss_is_deterministic(small_corpus):
    state = init_state(tiny_train_config(), 2)
    a = validation_loss(state.separator, small_corpus.validation)
    b = validation_loss(state.separator, small_corpus.validation)
    assert a == b and a > 0
    with pytest.raises(ValueError):
        validation_loss(state.separator, [])
    with pytest.raises(ValueError):
        validation_loss(state.separator, small_corpus.unlabelled)


def test_runs_exactly_max_epochs(small_corpus):
    result = run_training(tiny_train_config(max_epochs=2, patience_epochs=5), small_corpus,
                          small_corpus.validation, progress=False)
    assert result.state.epoch == 2
    assert result.state.step == 6
    assert len(result.log) == 6
    assert result.log["epoch"].tolist() == [1, 1, 1, 2, 2, 2]
    assert len(result.validation) == 2
    assert not result.stopped_early


def test_early_stopping_after_patience(small_corpus, monkeypatch):
    losses = iter([1.0, 0.5, 0.6, 0.5, 0.4])
    monkeypatch.setattr(training, "validate", lambda state, tracks: next(losses))
    config = tiny_train_config(mode="baseline", max_epochs=10, patience_epochs=2, steps_per_epoch=1)
    result = run_training(config, small_corpus, small_corpus.validation, progress=False)

    # 0.5 at epoch 4 ties the best and does not count as an improvement
    assert result.stopped_early
    assert result.state.epoch == 4
    assert result.state.best_epoch == 1
    assert result.validation["best"].tolist() == [True, True, False, False]


def test_best_epoch_is_restored(small_corpus, monkeypatch, tmp_path):
    losses = iter([1.0, 0.2, 0.9])
    monkeypatch.setattr(training, "validate", lambda state, tracks: next(losses))
    config = tiny_train_config(mode="V", max_epochs=3, patience_epochs=5)
    result = run_training(config, small_corpus, small_corpus.validation, run_dir=tmp_path, progress=False)

    assert best_checkpoint(tmp_path) == epoch_dir(tmp_path, 2)
    best = load_model(epoch_dir(tmp_path, 2), "separator")
    assert state_digest(result.state.separator) == state_digest(best)
    assert state_digest(result.state.separator) != state_digest(load_model(epoch_dir(tmp_path, 3), "separator"))


def test_training_is_reproducible(small_corpus):
    config = tiny_train_config(mode="VA")
    a = run_training(config, small_corpus, small_corpus.validation, progress=False)
    b = run_training(config, small_corpus, small_corpus.validation, progress=False)
    pd.testing.assert_frame_equal(a.log, b.log)
    assert state_digest(a.state.separator) == state_digest(b.state.separator)


def test_resume_reproduces_the_uninterrupted_run(small_corpus, tmp_path):
    config = tiny_train_config(mode="V", max_epochs=3, patience_epochs=5)
    full = run_training(config, small_corpus, small_corpus.validation, run_dir=tmp_path / "full", progress=False)

    run_training(replace(config, max_epochs=1), small_corpus, small_corpus.validation, run_dir=tmp_path / "cut",
                 progress=False)
    resumed = run_training(config, small_corpus, small_corpus.validation, run_dir=tmp_path / "cut",
                           resume_from=epoch_dir(tmp_path / "cut", 1), progress=False)

    pd.testing.assert_frame_equal(pd.read_csv(tmp_path / "full" / LOSS_LOG), pd.read_csv(tmp_path / "cut" / LOSS_LOG))
    assert state_digest(resumed.state.separator) == state_digest(full.state.separator)
    assert state_digest(resumed.state.critics[0]) == state_digest(full.state.critics[0])

def test_checkpoint_roundtrip_restores_everything(small_corpus, tmp_path):
    config = tiny_train_config(mode="VA")
    state = init_state(config, 2)
    train_one_step(state, small_corpus)
    save_checkpoint(state, tmp_path)

    loaded = load_checkpoint(config, tmp_path, 2)
    assert _digests(loaded) == _digests(state)
    assert loaded.step == state.step
    assert loaded.rng.random() == state.rng.random()
    assert torch.equal(torch.rand(2, generator=loaded.generator), torch.rand(2, generator=state.generator))
    with pytest.raises(FileNotFoundError):
        load_checkpoint(config, tmp_path / "missing", 2)


def test_non_finite_loss_aborts_with_a_partial_log(small_corpus, tmp_path, monkeypatch):
    calls = {"n": 0}
    real_loss = training.supervised_loss

    def flaky(estimates, targets, norm="mse"):
        calls["n"] += 1
        value = real_loss(estimates, targets, norm)
        return value * float("nan") if calls["n"] == 3 else value

    monkeypatch.setattr(training, "supervised_loss", flaky)
    with pytest.raises(NonFiniteLossError) as info:
        run_training(tiny_train_config(mode="baseline"), small_corpus, small_corpus.validation,
                     run_dir=tmp_path, progress=False)

    assert info.value.step == 2
    assert math.isnan(info.value.losses["L_s"])
    log = pd.read_csv(tmp_path / LOSS_LOG)
    assert log["step"].tolist() == [1, 2]


def test_checkpoint_files_follow_the_mode(small_corpus, tmp_path):
    for mode in ("baseline", "V"):
        run_training(tiny_train_config(mode=mode, max_epochs=1), small_corpus, small_corpus.validation,
                     run_dir=tmp_path / mode, progress=False)
    baseline = epoch_dir(tmp_path / "baseline", 1)
    assert (baseline / "separator.pt").exists()
    assert not list(baseline.glob("critic_*"))
    assert sorted(p.name for p in epoch_dir(tmp_path / "V", 1).glob("critic_*")) == ["critic_voice.json",
                                                                                     "critic_voice.pt"]
    assert (tmp_path / "V" / BEST_MARKER).exists()


def test_missing_best_marker(tmp_path):
    with pytest.raises(FileNotFoundError):
        best_checkpoint(tmp_path)


@pytest.mark.slow
def test_critic_estimate_rises_against_a_frozen_separator(small_corpus):
    from scipy.stats import spearmanr

    state = init_state(tiny_train_config(mode="V", n_disc=1, learning_rate=1e-3), 2)
    plan = state.separator.plan
    estimates = []
    for _ in range(500):
        unlabelled = sample_unlabelled_batch(small_corpus, 16, state.rng, plan)
        source = {0: sample_source_batch(small_corpus, 0, 16, state.rng, plan)}
        estimates.append(critic_steps(state, unlabelled, source)[0][0])
    smoothed = pd.Series(estimates).rolling(50).mean().dropna()
    rho, _ = spearmanr(np.arange(len(smoothed)), smoothed)
    assert rho > 0.5
