from dataclasses import replace

import numpy as np
import pytest

from src.constants import SAMPLE_RATE
from src.data.toy import ToyConfig, generate_toy_corpus, midi_to_hz, render_track, sample_track_params


def test_generation_is_deterministic(small_toy_config, small_corpus):
    again = generate_toy_corpus(small_toy_config)
    for a, b in zip(small_corpus.all_tracks(), again.all_tracks()):
        assert a.name == b.name
        np.testing.assert_array_equal(a.waveform, b.waveform)


def test_other_seed_changes_the_audio(small_toy_config, small_corpus):
    other = generate_toy_corpus(replace(small_toy_config, seed=8))
    assert not np.array_equal(other.paired[0].waveform, small_corpus.paired[0].waveform)


def test_mixtures_are_exactly_additive(small_corpus):
    for track in small_corpus.paired + small_corpus.validation + small_corpus.test:
        assert track.waveform.dtype == np.float32
        np.testing.assert_array_equal(track.sources[0] + track.sources[1], track.waveform)
        assert np.max(np.abs(track.waveform)) <= 0.95 + 1e-6


def test_pool_sizes_and_lengths(small_toy_config, small_corpus):
    assert small_corpus.pool_sizes() == {"paired": 3, "unlabelled": 3, "solo": 6, "validation": 2, "test": 2}
    n = int(round(small_toy_config.track_seconds * SAMPLE_RATE))
    assert all(len(t.waveform) == n for t in small_corpus.all_tracks())
    assert all(not t.is_paired for t in small_corpus.unlabelled)


def test_paired_pool_uses_a_single_style(small_corpus):
    assert {t.subset for t in small_corpus.paired} == {"toy_a"}
    assert all(t.params["style"] == t.subset for t in small_corpus.all_tracks())


def test_uncorrelated_sources_have_independent_keys():
    rng = np.random.default_rng(0)
    params = [sample_track_params(rng, 0.0, "toy_a") for _ in range(500)]
    voice = [p.voice_pitch_class for p in params]
    chord = [p.chord_pitch_class for p in params]
    assert abs(np.corrcoef(voice, chord)[0, 1]) < 0.15


def test_fully_correlated_sources_share_key_and_beat():
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = sample_track_params(rng, 1.0, "toy_b")
        assert p.voice_pitch_class == p.chord_pitch_class
        assert p.voice_beat == p.chord_beat


def test_draw_count_does_not_depend_on_correlation():
    a, b = np.random.default_rng(3), np.random.default_rng(3)
    sample_track_params(a, 0.0, "toy_a")
    sample_track_params(b, 1.0, "toy_a")
    assert a.random() == b.random()


def test_render_track_returns_float32_stems():
    params = sample_track_params(np.random.default_rng(1), 0.5, "toy_b")
    mix, voice, chord = render_track(params, 0.25, np.random.default_rng(2))
    assert mix.dtype == voice.dtype == chord.dtype == np.float32
    assert len(mix) == 2000
    np.testing.assert_array_equal(mix, voice + chord)


def test_midi_to_hz():
    assert midi_to_hz(69) == pytest.approx(440.0)
    assert midi_to_hz(81) == pytest.approx(880.0)


def test_config_validation():
    with pytest.raises(ValueError):
        ToyConfig(n_paired_tracks=0)
    with pytest.raises(ValueError):
        ToyConfig(track_seconds=0.01)
    with pytest.raises(ValueError):
        ToyConfig(correlation_strength=1.5)
    ToyConfig(n_validation_tracks=0, n_test_tracks=0)
