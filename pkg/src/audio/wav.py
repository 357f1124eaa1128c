from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf
from scipy.signal import resample_poly

from src.constants import RESAMPLE_WINDOW, SAMPLE_RATE


@dataclass(frozen=True)
class Waveform:
    """Mono audio signal."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.samples.ndim != 1:
            raise ValueError(f"Waveform must be mono (1-D), got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("Waveform contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)


def resample(samples: np.ndarray, orig_rate: int, target_rate: int) -> np.ndarray:
    """
    Polyphase resampling with a Kaiser-windowed sinc low-pass filter.

    Args:
        samples: 1-D signal.
        orig_rate: Rate of `samples` in Hz.
        target_rate: Desired rate in Hz.

    Returns:
        The resampled signal; the input itself when the rates agree.
    """
    if orig_rate == target_rate:
        return samples
    ratio = Fraction(target_rate, orig_rate)
    return resample_poly(samples, ratio.numerator, ratio.denominator, window=RESAMPLE_WINDOW)


def ingest(path: Union[str, Path], target_rate: int = SAMPLE_RATE) -> Waveform:
    """
    Reads a WAV file as a mono waveform at `target_rate`.

    Channels are averaged, then the signal is resampled and clipped to [-1, 1].

    Args:
        path: PCM (8/16/24-bit) or 32-bit float WAV file.
        target_rate: Output sample rate in Hz.

    Returns:
        Waveform at `target_rate`.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If the file cannot be decoded or holds no samples.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Audio file not found: {path}")

    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except sf.SoundFileError as e:
        raise ValueError(f"Unreadable audio file {path}: {e}") from e

    if data.shape[0] == 0:
        raise ValueError(f"Audio file {path} has zero length")

    mono = data.mean(axis=1)
    mono = resample(mono, int(rate), target_rate)
    if int(rate) != target_rate:
        mono = np.clip(mono, -1.0, 1.0)
    return Waveform(samples=mono, sample_rate=target_rate)


def write_wav(path: Union[str, Path], waveform: Waveform, subtype: str = "FLOAT") -> Path:
    """
    Writes a waveform to disk, creating parent directories.

    Corpus files keep 32-bit float samples; separated estimates are exported
    with `subtype="PCM_16"`.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), waveform.samples, waveform.sample_rate, subtype=subtype)
    return path


def export_estimate(path: Union[str, Path], waveform: Waveform) -> Path:
    """Exports a separated source as 16-bit PCM at 8 kHz."""
    if waveform.sample_rate != SAMPLE_RATE:
        waveform = Waveform(resample(waveform.samples, waveform.sample_rate, SAMPLE_RATE), SAMPLE_RATE)
    clipped = Waveform(np.clip(waveform.samples, -1.0, 1.0), waveform.sample_rate)
    return write_wav(path, clipped, subtype="PCM_16")
