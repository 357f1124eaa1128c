import json

import numpy as np
import pandas as pd
import pytest

from conftest import tiny_separator
from src.audio.spectral import log_normalize, reconstruct, stft
from src.audio.wav import Waveform
from src.data.corpus import Track
from src.processes.evaluation import (
    DegenerateReferenceError,
    EvalReport,
    _safe_db,
    decompose,
    evaluate_model,
    reconstruct_track,
    sdr_sir_sar,
    separator_estimator,
)

N = 4000
T = np.arange(N) / 8000


def _sines():
    # integer numbers of periods over the window -> exactly orthogonal
    return np.sin(2 * np.pi * 200 * T), np.sin(2 * np.pi * 600 * T)


def test_orthogonal_sinusoid_projection():
    r0, r1 = _sines()
    parts = decompose(0.5 * r0 + 0.25 * r1, [r0, r1], 0)
    np.testing.assert_allclose(parts.s_target, 0.5 * r0, atol=1e-8)
    np.testing.assert_allclose(parts.e_interf, 0.25 * r1, atol=1e-8)
    np.testing.assert_allclose(parts.e_artif, 0.0, atol=1e-8)

    metrics = sdr_sir_sar(parts)
    expected = 10 * np.log10(0.25 * (r0 @ r0) / (0.0625 * (r1 @ r1)))
    assert metrics.SIR == pytest.approx(expected, abs=1e-8)
    assert metrics.SDR == pytest.approx(expected, abs=1e-6)


def test_artifacts_are_what_the_references_cannot_explain():
    r0, r1 = _sines()
    noise = np.sin(2 * np.pi * 1000 * T)
    parts = decompose(r0 + 0.1 * noise, [r0, r1], 0)
    np.testing.assert_allclose(parts.e_artif, 0.1 * noise, atol=1e-8)
    assert sdr_sir_sar(parts).SAR == pytest.approx(10 * np.log10((r0 @ r0) / (0.01 * noise @ noise)), abs=1e-6)


def test_safe_db_limits():
    assert _safe_db(1.0, 0.0) == np.inf
    assert _safe_db(0.0, 1.0) == -np.inf
    assert _safe_db(0.0, 0.0) == -np.inf
    assert _safe_db(10.0, 1.0) == pytest.approx(10.0)


def test_metrics_ignore_the_estimate_scale():
    rng = np.random.default_rng(0)
    refs = [rng.standard_normal(500), rng.standard_normal(500)]
    est = refs[0] + 0.3 * refs[1] + 0.2 * rng.standard_normal(500)
    base = sdr_sir_sar(decompose(est, refs, 0))
    for scale in (0.01, 3.0, 250.0):
        np.testing.assert_allclose(sdr_sir_sar(decompose(scale * est, refs, 0)), base, atol=1e-8)


def test_decomposition_identities_on_random_cases():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        refs = rng.standard_normal((2, 64))
        est = rng.standard_normal(64)
        k = int(rng.integers(2))
        s, i, a = decompose(est, list(refs), k)
        np.testing.assert_allclose(s + i + a, est, atol=1e-8)
        assert abs(s @ i) < 1e-8 * max(1.0, s @ s + i @ i)
        assert abs((s + i) @ a) < 1e-8 * max(1.0, est @ est)


def test_more_noise_lowers_the_sdr():
    rng = np.random.default_rng(2)
    r0, r1 = _sines()
    noise = rng.standard_normal(N)
    sdrs = [sdr_sir_sar(decompose(r0 + level * noise, [r0, r1], 0)).SDR for level in (0.01, 0.1, 0.5, 2.0)]
    assert sdrs == sorted(sdrs, reverse=True)


def test_degenerate_references():
    r0, r1 = _sines()
    with pytest.raises(DegenerateReferenceError):
        decompose(r0, [np.zeros(N), r1], 0)
    with pytest.raises(DegenerateReferenceError):
        decompose(r0, [r0, 2 * r0], 1)
    with pytest.raises(ValueError):
        decompose(r0[:10], [r0, r1], 0)
    with pytest.raises(ValueError):
        decompose(r0, [r0, r1], 2)
    with pytest.raises(ValueError):
        decompose(Waveform(r0, 8000), [Waveform(r0, 16000), Waveform(r1, 8000)], 0)


def _oracle(track):
    return np.stack([log_normalize(m[:, :256]) for m in track.source_magnitudes])


def test_oracle_magnitudes_score_high(small_corpus):
    report = evaluate_model(None, small_corpus.test, mode="oracle", source_names=("voice", "accompaniment"),
                            estimator=_oracle)
    assert report.failures == []
    assert len(report.tracks) == 2 * len(small_corpus.test)
    assert report.tracks["SDR"].mean() > 6.0


def test_oracle_reconstructions_have_bounded_edges(small_corpus):
    for track in small_corpus.test:
        waves = reconstruct_track(track, _oracle(track))
        refs = [s[:len(waves[0])] for s in track.sources]
        for k, (wave, ref) in enumerate(zip(waves, refs)):
            peak = np.max(np.abs(ref))
            assert np.max(np.abs(wave.samples[:256])) <= 4 * peak
            assert np.max(np.abs(wave.samples[-256:])) <= 4 * peak
            assert sdr_sir_sar(decompose(wave.samples, refs, k)).SDR > 0


def test_mixture_estimate_matches_direct_scoring(small_corpus):
    track = small_corpus.test[0]

    def mixture_twice(t):
        mix = log_normalize(t.magnitude[:, :256])
        return np.stack([mix, mix])

    report = evaluate_model(None, [track], estimator=mixture_twice)
    waveform = reconstruct_track(track, mixture_twice(track))[0]
    refs = [s[:len(waveform)] for s in track.sources]
    for k, row in report.tracks.iterrows():
        direct = sdr_sir_sar(decompose(waveform.samples, refs, k))
        assert row["SIR"] == pytest.approx(direct.SIR)
        assert row["source"] == f"source_{k}"


def test_separator_estimates_cover_every_frame(small_corpus):
    model = tiny_separator()
    track = small_corpus.test[0]
    estimates = separator_estimator(model, chunk=2)(track)
    assert estimates.shape == (2, track.n_frames, 8)
    assert np.all(estimates >= 0)


def test_reconstruct_track_length(small_corpus):
    track = small_corpus.test[0]
    waves = reconstruct_track(track, _oracle(track))
    mix = stft(Waveform(track.waveform, track.sample_rate))
    assert len(waves) == 2
    assert len(waves[0]) == mix.n_samples
    np.testing.assert_allclose(waves[0].samples, reconstruct(_oracle(track)[0], mix).samples)


def test_means_skip_perfect_scores_and_keep_failed_ones():
    tracks = pd.DataFrame([
        {"track": "a", "subset": "toy_a", "source": "voice", "SDR": 4.0, "SIR": np.inf, "SAR": 1.0},
        {"track": "b", "subset": "toy_b", "source": "voice", "SDR": 2.0, "SIR": 6.0, "SAR": 3.0},
        {"track": "c", "subset": "toy_b", "source": "accompaniment", "SDR": 5.0, "SIR": 9.0, "SAR": 7.0},
        {"track": "d", "subset": "toy_b", "source": "accompaniment", "SDR": -np.inf, "SIR": -np.inf, "SAR": -np.inf},
    ])
    means = EvalReport(mode="V", tracks=tracks).means().set_index(["subset", "source"])
    assert means.loc[("all", "voice"), "SDR"] == pytest.approx(3.0)
    assert means.loc[("all", "voice"), "SIR"] == pytest.approx(6.0)
    assert means.loc[("all", "voice"), "n_perfect"] == 1
    assert means.loc[("all", "voice"), "n_tracks"] == 2
    assert means.loc[("toy_a", "voice"), "n_perfect"] == 1
    assert means.loc[("all", "accompaniment"), "SDR"] == -np.inf
    assert means.loc[("all", "accompaniment"), "n_failed"] == 1
    assert means.loc[("all", "voice"), "n_failed"] == 0


def test_silent_estimate_scores_minus_infinity(small_corpus):
    track = small_corpus.test[0]

    def silent_voice(t):
        oracle = _oracle(t)
        oracle[0] = 0.0
        return oracle

    report = evaluate_model(None, [track], source_names=("voice", "accompaniment"), estimator=silent_voice)
    voice = report.tracks.set_index("source").loc["voice"]
    assert voice["SDR"] == voice["SIR"] == voice["SAR"] == -np.inf
    overall = report.means().query("subset == 'all'").set_index("source")
    assert overall.loc["voice", "SDR"] == -np.inf and overall.loc["voice", "n_failed"] == 1
    assert np.isfinite(overall.loc["accompaniment", "SDR"])


def test_empty_report():
    report = EvalReport(mode="V")
    assert report.means().empty
    assert "SDR" in report.means().columns


def test_degenerate_tracks_are_reported_and_skipped(small_corpus):
    track = small_corpus.test[0]
    silent = Track(name="silent", waveform=track.sources[1], sources=(np.zeros_like(track.sources[0]), track.sources[1]))
    report = evaluate_model(None, [silent, track], estimator=_oracle)
    assert len(report.failures) == 1 and report.failures[0].startswith("silent")
    assert set(report.tracks["track"]) == {track.name}


def test_report_files_and_exports(small_corpus, tmp_path):
    report = evaluate_model(None, small_corpus.test, mode="V", source_names=("voice", "accompaniment"),
                            estimator=_oracle, export_dir=tmp_path / "estimates")
    report.save(tmp_path / "eval")
    assert (tmp_path / "eval" / "eval_tracks.csv").exists()
    assert (tmp_path / "eval" / "eval_means.csv").exists()
    meta = json.loads((tmp_path / "eval" / "eval_meta.json").read_text())
    assert meta["mode"] == "V" and meta["n_tracks"] == len(small_corpus.test)
    assert (tmp_path / "estimates" / small_corpus.test[0].name / "voice.wav").exists()
