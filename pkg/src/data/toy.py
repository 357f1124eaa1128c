"""
Synthetic two-source corpus for desk-scale experiments.

Source 0 is voice-like: a harmonic tone following a melody on a note grid,
with vibrato and rests. Source 1 is accompaniment-like: a fixed chord of
sinusoids, slowly amplitude-modulated and re-articulated on every bar.
Both read their pitch class and beat length from a per-track latent with
probability `correlation_strength`, otherwise from independent draws.
"""
from dataclasses import asdict, dataclass
from typing import Dict, Tuple

import numpy as np

from src.constants import FFT_SIZE, SAMPLE_RATE
from src.data.corpus import DataCorpus, Track

MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)
BEATS = (0.25, 0.3, 0.375, 0.5)     # seconds per beat
BEATS_PER_BAR = 4
REST_PROBABILITY = 0.25
VOICE_HARMONICS = 6
CHORD_PARTIALS = 3
RAMP_SECONDS = 0.01
PEAK_LIMIT = 0.95

# Two recording styles; the supervised pool only ever sees `toy_a`
STYLES: Dict[str, Dict[str, float]] = {
    "toy_a": {"voice_midi": 60, "vibrato_depth": 0.25, "vibrato_rate": 5.0, "voice_peak": 0.5, "chord_peak": 0.4},
    "toy_b": {"voice_midi": 67, "vibrato_depth": 0.7, "vibrato_rate": 6.5, "voice_peak": 0.35, "chord_peak": 0.5},
}

POOL_CODES = {"paired": 0, "unlabelled": 1, "solo": 2, "validation": 3, "test": 4}


@dataclass(frozen=True)
class ToyConfig:
    n_paired_tracks: int = 20
    n_unlabelled_tracks: int = 200
    n_solo_tracks_per_source: int = 200
    n_validation_tracks: int = 20
    n_test_tracks: int = 160
    track_seconds: float = 6.0
    seed: int = 0
    correlation_strength: float = 0.5

    def __post_init__(self):
        if min(self.n_paired_tracks, self.n_unlabelled_tracks, self.n_solo_tracks_per_source) < 1:
            raise ValueError("Toy pools need at least one track each")
        if min(self.n_validation_tracks, self.n_test_tracks) < 0:
            raise ValueError("Validation and test track counts must be nonnegative")
        if self.track_seconds * SAMPLE_RATE < FFT_SIZE:
            raise ValueError(f"track_seconds={self.track_seconds} is shorter than one analysis frame")
        if not 0.0 <= self.correlation_strength <= 1.0:
            raise ValueError(f"correlation_strength must lie in [0, 1], got {self.correlation_strength}")


@dataclass(frozen=True)
class ToyTrackParams:
    style: str
    voice_pitch_class: int
    chord_pitch_class: int
    voice_beat: float
    chord_beat: float
    minor: bool


def sample_track_params(rng: np.random.Generator, correlation_strength: float, style: str) -> ToyTrackParams:
    """
    Draws one track's latent and the per-source parameters derived from it.

    The number of draws does not depend on `correlation_strength`.
    """
    key, beat = int(rng.integers(12)), float(rng.choice(BEATS))
    own_pc = rng.integers(12, size=2)
    own_beat = rng.choice(BEATS, size=2)
    shared = rng.random(2) < correlation_strength
    return ToyTrackParams(
        style=style,
        voice_pitch_class=key if shared[0] else int(own_pc[0]),
        chord_pitch_class=key if shared[1] else int(own_pc[1]),
        voice_beat=beat if shared[0] else float(own_beat[0]),
        chord_beat=beat if shared[1] else float(own_beat[1]),
        minor=bool(rng.random() < 0.5),
    )


def midi_to_hz(midi) -> np.ndarray:
    return 440.0 * 2.0 ** ((np.asarray(midi, dtype=np.float64) - 69) / 12)


def _ramp_envelope(gates: np.ndarray, sample_rate: int) -> np.ndarray:
    """Smooths a 0/1 gate with short linear ramps so notes start and stop without clicks."""
    width = max(1, int(RAMP_SECONDS * sample_rate))
    kernel = np.ones(width) / width
    return np.convolve(gates, kernel, mode="same")


def render_voice(params: ToyTrackParams, n_samples: int, rng: np.random.Generator,
                 sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    style = STYLES[params.style]
    t = np.arange(n_samples) / sample_rate
    note_len = params.voice_beat * rng.choice((1, 2))
    n_notes = int(np.ceil(n_samples / (note_len * sample_rate)))

    degrees = rng.choice(MAJOR_SCALE, size=n_notes)
    rests = rng.random(n_notes) < REST_PROBABILITY
    note_of_sample = np.minimum((t / note_len).astype(int), n_notes - 1)
    midi = style["voice_midi"] + params.voice_pitch_class + degrees[note_of_sample]

    vibrato = style["vibrato_depth"] * np.sin(2 * np.pi * style["vibrato_rate"] * t + rng.uniform(0, 2 * np.pi))
    freq = midi_to_hz(midi + vibrato)
    phase = 2 * np.pi * np.cumsum(freq) / sample_rate

    tone = np.zeros(n_samples)
    for h in range(1, VOICE_HARMONICS + 1):
        audible = h * freq < 0.45 * sample_rate
        tone += audible * np.sin(h * phase) / h

    gate = (~rests[note_of_sample]).astype(np.float64)
    # re-articulate every note
    boundaries = np.flatnonzero(np.diff(note_of_sample)) + 1
    gate[boundaries] = 0.0
    return tone * _ramp_envelope(gate, sample_rate)


def render_chord(params: ToyTrackParams, n_samples: int, rng: np.random.Generator,
                 sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    t = np.arange(n_samples) / sample_rate
    root = 48 + params.chord_pitch_class
    intervals = (0, 3, 7) if params.minor else (0, 4, 7)

    tone = np.zeros(n_samples)
    for interval in intervals:
        f0 = midi_to_hz(root + interval)
        for p in range(1, CHORD_PARTIALS + 1):
            tone += np.sin(2 * np.pi * p * f0 * t + rng.uniform(0, 2 * np.pi)) / p

    am = 1.0 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.2, 0.6) * t + rng.uniform(0, 2 * np.pi))
    bar = params.chord_beat * BEATS_PER_BAR
    since_bar = np.mod(t, bar)
    articulation = 0.6 + 0.4 * np.exp(-since_bar / 0.3)
    return tone * am * articulation


def _peak_normalize(x: np.ndarray, peak: float) -> np.ndarray:
    top = np.max(np.abs(x))
    return x if top == 0 else x * (peak / top)


def render_track(params: ToyTrackParams, seconds: float, rng: np.random.Generator,
                 sample_rate: int = SAMPLE_RATE) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Returns (mixture, voice, accompaniment) as float32 with mixture = voice + accompaniment exactly.
    """
    style = STYLES[params.style]
    n = int(round(seconds * sample_rate))
    voice = _peak_normalize(render_voice(params, n, rng, sample_rate), style["voice_peak"])
    chord = _peak_normalize(render_chord(params, n, rng, sample_rate), style["chord_peak"])

    top = np.max(np.abs(voice + chord))
    if top > PEAK_LIMIT:
        voice, chord = voice * (PEAK_LIMIT / top), chord * (PEAK_LIMIT / top)

    voice, chord = voice.astype(np.float32), chord.astype(np.float32)
    return voice + chord, voice, chord


def _track_rng(seed: int, pool: str, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, POOL_CODES[pool], index]))


def _make_track(cfg: ToyConfig, pool: str, index: int, keep: int = -1) -> Track:
    """Renders one track; `keep` >= 0 stores only that source as a solo recording."""
    rng = _track_rng(cfg.seed, pool, index)
    style = "toy_a" if pool == "paired" else ("toy_a", "toy_b")[int(rng.integers(2))]
    params = sample_track_params(rng, cfg.correlation_strength, style)
    mixture, *sources = render_track(params, cfg.track_seconds, rng)

    if keep >= 0:
        return Track(name=f"solo{keep}_{index:04d}", waveform=sources[keep], subset=style, params=asdict(params))
    if pool == "unlabelled":
        return Track(name=f"{pool}_{index:04d}", waveform=mixture, subset=style, params=asdict(params))
    return Track(name=f"{pool}_{index:04d}", waveform=mixture, sources=tuple(sources), subset=style,
                 params=asdict(params))


def generate_toy_corpus(cfg: ToyConfig) -> DataCorpus:
    """
    Builds all five pools; every track is rendered from its own seed stream,
    so the corpus is a pure function of `cfg`.
    """
    return DataCorpus(
        n_sources=2,
        paired=tuple(_make_track(cfg, "paired", i) for i in range(cfg.n_paired_tracks)),
        unlabelled=tuple(_make_track(cfg, "unlabelled", i) for i in range(cfg.n_unlabelled_tracks)),
        solo=tuple(
            tuple(_make_track(cfg, "solo", k * cfg.n_solo_tracks_per_source + i, keep=k)
                  for i in range(cfg.n_solo_tracks_per_source))
            for k in range(2)
        ),
        validation=tuple(_make_track(cfg, "validation", i) for i in range(cfg.n_validation_tracks)),
        test=tuple(_make_track(cfg, "test", i) for i in range(cfg.n_test_tracks)),
    )
