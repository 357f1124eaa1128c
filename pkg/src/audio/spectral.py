from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from src.audio.wav import Waveform
from src.constants import FFT_SIZE, HOP_SIZE, LOUDNESS_RANGE, SAMPLE_RATE, WINDOW

# overlap-add normaliser floor, relative to the interior window sum
EDGE_FLOOR = 0.5


@dataclass(frozen=True)
class ComplexSpectrogram:
    """
    One-sided STFT of a waveform.

    `bins` has shape [frames, fft_size // 2 + 1]; frame f covers samples
    f * hop ... f * hop + fft_size - 1.
    """

    bins: np.ndarray
    fft_size: int = FFT_SIZE
    hop: int = HOP_SIZE
    sample_rate: int = SAMPLE_RATE

    @property
    def n_frames(self) -> int:
        return self.bins.shape[0]

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.bins)

    @property
    def n_samples(self) -> int:
        """Length of the signal covered by complete frames."""
        return (self.n_frames - 1) * self.hop + self.fft_size


def analysis_window(fft_size: int = FFT_SIZE) -> np.ndarray:
    # periodic Hann: constant overlap-add at 50% overlap
    return get_window(WINDOW, fft_size, fftbins=True)


def frame_count(n_samples: int, fft_size: int = FFT_SIZE, hop: int = HOP_SIZE) -> int:
    return 1 + (n_samples - fft_size) // hop


def stft(waveform: Waveform, fft_size: int = FFT_SIZE, hop: int = HOP_SIZE) -> ComplexSpectrogram:
    """
    Short-time Fourier transform without edge padding.

    Args:
        waveform: Mono input.
        fft_size: Frame length and FFT size.
        hop: Frame advance in samples.

    Returns:
        ComplexSpectrogram with 1 + (len - fft_size) // hop frames.

    Raises:
        ValueError: If the waveform is shorter than one frame.
    """
    samples = np.asarray(waveform.samples, dtype=np.float64)
    if len(samples) < fft_size:
        raise ValueError(f"Waveform of {len(samples)} samples is shorter than one {fft_size}-sample frame")

    n_frames = frame_count(len(samples), fft_size, hop)
    frames = sliding_window_view(samples, fft_size)[: (n_frames - 1) * hop + 1 : hop] * analysis_window(fft_size)
    bins = np.fft.rfft(frames, n=fft_size, axis=1)
    return ComplexSpectrogram(bins=bins, fft_size=fft_size, hop=hop, sample_rate=waveform.sample_rate)


def istft(spec: ComplexSpectrogram, length: Optional[int] = None) -> Waveform:
    """
    Inverse STFT by overlap-add of the unwindowed frames.

    The sum is divided by the summed analysis window, floored at half its
    interior value. This inverts `stft` exactly wherever the window sum
    reaches that floor (all but the outer quarter-frame at each end); there
    the output fades to zero with at most 2x gain.

    Args:
        spec: One-sided spectrogram.
        length: Optional output length; the signal is zero-padded or trimmed to it.
    """
    window = analysis_window(spec.fft_size)
    frames = np.fft.irfft(spec.bins, n=spec.fft_size, axis=1)

    n_samples = spec.n_samples
    signal = np.zeros(n_samples)
    weight = np.zeros(n_samples)
    for f, frame in enumerate(frames):
        start = f * spec.hop
        signal[start:start + spec.fft_size] += frame
        weight[start:start + spec.fft_size] += window

    interior = window.sum() / spec.hop
    signal = signal / np.maximum(weight, EDGE_FLOOR * interior)

    if length is not None:
        signal = np.pad(signal, (0, max(0, length - n_samples)))[:length]
    return Waveform(samples=signal, sample_rate=spec.sample_rate)


def log_normalize(mag: np.ndarray) -> np.ndarray:
    """
    Maps nonnegative magnitudes through x -> log(1 + x).

    Raises:
        ValueError: If any value is negative.
    """
    mag = np.asarray(mag)
    if np.any(mag < 0):
        raise ValueError("log_normalize expects nonnegative magnitudes")
    return np.log1p(mag)


def denormalize(values: np.ndarray) -> np.ndarray:
    """Inverse of `log_normalize`: y -> exp(y) - 1."""
    return np.expm1(values)


def loudness_scale(mag: np.ndarray, factor: float, bounds: Tuple[float, float] = LOUDNESS_RANGE) -> np.ndarray:
    """
    Multiplies linear magnitudes by a loudness factor from `bounds` ([0.2, 1.2]).

    Must be applied before `log_normalize`.
    """
    low, high = bounds
    if not low <= factor <= high:
        raise ValueError(f"Loudness factor {factor} outside [{low}, {high}]")
    return factor * np.asarray(mag)


def reconstruct(est: np.ndarray, mix: ComplexSpectrogram, frame_offset: int = 0) -> Waveform:
    """
    Turns a log-normalized magnitude estimate into a waveform using mixture phase.

    The estimate covers frames `frame_offset ...` and bins `0 ...` of the mixture
    grid; uncovered frames stay silent. When the estimate stops one bin short
    of Nyquist, the mixture's Nyquist bin is passed through, gain-matched by
    the estimate/mixture magnitude ratio of the highest estimated bin.

    Args:
        est: Log-normalized magnitudes [frames, bins].
        mix: Complex mixture spectrogram supplying the phase.
        frame_offset: Mixture frame aligned with the first estimate frame.

    Returns:
        Waveform of `mix.n_samples` samples.

    Raises:
        ValueError: If the estimate does not fit inside the mixture grid.
    """
    n_frames, n_est_bins = est.shape
    n_bins = mix.bins.shape[1]
    if frame_offset < 0 or frame_offset + n_frames > mix.n_frames or n_est_bins > n_bins:
        raise ValueError(
            f"Estimate grid {est.shape} at frame offset {frame_offset} does not fit mixture grid {mix.bins.shape}"
        )

    mag = denormalize(est)
    rows = slice(frame_offset, frame_offset + n_frames)
    mix_rows = mix.bins[rows]

    out = np.zeros_like(mix.bins)
    out[rows, :n_est_bins] = mag * np.exp(1j * np.angle(mix_rows[:, :n_est_bins]))

    if n_est_bins == n_bins - 1:
        ref = np.abs(mix_rows[:, n_est_bins - 1])
        gain = np.divide(mag[:, -1], ref, out=np.zeros_like(ref), where=ref > 0)
        out[rows, -1] = mix_rows[:, -1] * gain

    return istft(ComplexSpectrogram(out, mix.fft_size, mix.hop, mix.sample_rate))
