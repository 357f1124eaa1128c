"""
Track-wise BSS-eval metrics on mixture-phase reconstructions.

Distortion components come from time-invariant projections: the estimate is
projected onto its own reference and onto the span of all references, so
the metrics are invariant to the scale of the estimate.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch

from src.audio.spectral import reconstruct, stft
from src.audio.wav import Waveform, export_estimate
from src.data.corpus import Track
from src.data.sampling import tile_track
from src.models.separator import Separator
from src.utils.json import write_json_file

METRICS = ("SDR", "SIR", "SAR")
METRIC_VARIANT = "time-invariant projection"
REPORT_COLUMNS = ["track", "subset", "source", *METRICS]
COUNT_COLUMNS = ["n_tracks", "n_perfect", "n_failed"]

# (track) -> log-normalized estimates [K, frames, bins]
Estimator = Callable[[Track], np.ndarray]


class DegenerateReferenceError(ValueError):
    """References with zero energy or linearly dependent references."""


class Decomposition(NamedTuple):
    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray


class Metrics(NamedTuple):
    SDR: float
    SIR: float
    SAR: float


def _samples(x: Union[Waveform, np.ndarray]) -> np.ndarray:
    return np.asarray(x.samples if isinstance(x, Waveform) else x, dtype=np.float64)


def decompose(estimate: Union[Waveform, np.ndarray], references: Sequence[Union[Waveform, np.ndarray]], k: int) -> Decomposition:
    """
    Splits an estimate of source k into target, interference and artifact parts.

    Raises:
        ValueError: On length or sample-rate mismatch, or a bad k.
        DegenerateReferenceError: If reference k is silent or the references
            are linearly dependent.
    """
    rates = {x.sample_rate for x in (estimate, *references) if isinstance(x, Waveform)}
    if len(rates) > 1:
        raise ValueError(f"Estimate and references mix sample rates {sorted(rates)}")
    est = _samples(estimate)
    refs = np.stack([_samples(r) for r in references])
    if refs.shape[1] != est.shape[0]:
        raise ValueError(f"Estimate has {est.shape[0]} samples, references {refs.shape[1]}")
    if not 0 <= k < refs.shape[0]:
        raise ValueError(f"Source index {k} out of range for {refs.shape[0]} references")

    target = refs[k]
    energy = target @ target
    if energy == 0:
        raise DegenerateReferenceError(f"Reference {k} has zero energy")
    if np.linalg.matrix_rank(refs) < refs.shape[0]:
        raise DegenerateReferenceError("References are linearly dependent")

    s_target = (est @ target) / energy * target
    coefficients, *_ = np.linalg.lstsq(refs.T, est, rcond=None)
    e_interf = refs.T @ coefficients - s_target
    e_artif = est - s_target - e_interf
    return Decomposition(s_target, e_interf, e_artif)


def _safe_db(numerator: float, denominator: float) -> float:
    """
    10 log10(num / den); -inf when the numerator is zero (silent estimate
    included), +inf for a zero denominator otherwise.
    """
    if numerator == 0:
        return -np.inf
    if denominator == 0:
        return np.inf
    return float(10 * np.log10(numerator / denominator))


def _energy(x: np.ndarray) -> float:
    return float(x @ x)


def sdr_sir_sar(parts: Decomposition) -> Metrics:
    s, i, a = parts
    return Metrics(
        SDR=_safe_db(_energy(s), _energy(i + a)),
        SIR=_safe_db(_energy(s), _energy(i)),
        SAR=_safe_db(_energy(s + i), _energy(a)),
    )


# ── Separating full tracks ─────────────────────────────────────────────────────

def separator_estimator(model: Separator, chunk: int = 64) -> Estimator:
    """Runs `model` over a non-overlapping tiling of the track and stitches the outputs."""
    dtype = next(model.parameters()).dtype

    def estimate(track: Track) -> np.ndarray:
        batch = tile_track(track, model.plan)
        model.eval()
        outputs = []
        with torch.no_grad():
            for lo in range(0, len(batch), chunk):
                outputs.append(model(torch.as_tensor(batch.inputs[lo:lo + chunk], dtype=dtype)).numpy())
        tiles = np.concatenate(outputs)                         # [N, K, T_out, F_out]
        stitched = np.concatenate(list(tiles), axis=1)          # [K, N * T_out, F_out]
        return stitched[:, :track.n_frames]

    return estimate


def reconstruct_track(track: Track, estimates: np.ndarray) -> List[Waveform]:
    """Mixture-phase waveforms of each source estimate [K, frames, bins]."""
    mixture = stft(Waveform(track.waveform, track.sample_rate))
    return [reconstruct(est, mixture) for est in estimates]


@dataclass
class EvalReport:
    """
    Per-track, per-source metrics plus the tracks excluded from the means.
    """

    mode: str
    tracks: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=REPORT_COLUMNS))
    failures: List[str] = field(default_factory=list)

    def means(self) -> pd.DataFrame:
        """
        Mean of every metric per (subset, source) and over all subsets.

        +inf (perfect estimates) is left out of the means and counted in
        `n_perfect`. -inf (no target component, e.g. a silent estimate) stays
        in, so the mean drops to -inf, and is counted in `n_failed`.
        """
        if self.tracks.empty:
            return pd.DataFrame(columns=["subset", "source", *METRICS, *COUNT_COLUMNS])
        frame = pd.concat([self.tracks, self.tracks.assign(subset="all")], ignore_index=True)
        values = frame[list(METRICS)].astype(float)
        perfect = values == np.inf
        frame = frame.assign(
            **{m: values[m].where(~perfect[m]) for m in METRICS},
            n_perfect=perfect.any(axis=1).astype(int),
            n_failed=(values == -np.inf).any(axis=1).astype(int),
        )
        means = frame.groupby(["subset", "source"], sort=True).agg(
            **{m: (m, "mean") for m in METRICS},
            n_tracks=("track", "count"),
            n_perfect=("n_perfect", "sum"),
            n_failed=("n_failed", "sum"),
        )
        return means.reset_index()

    def save(self, directory: Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.tracks.to_csv(directory / "eval_tracks.csv", index=False)
        self.means().to_csv(directory / "eval_means.csv", index=False)
        write_json_file(
            {"mode": self.mode, "metric_variant": METRIC_VARIANT, "n_tracks": int(self.tracks["track"].nunique()),
             "failures": self.failures},
            directory / "eval_meta.json",
        )
        return directory


def evaluate_model(
    model: Optional[Separator],
    tracks: Sequence[Track],
    mode: str = "",
    source_names: Sequence[str] = (),
    estimator: Optional[Estimator] = None,
    export_dir: Optional[Path] = None,
) -> EvalReport:
    """
    Separates every track, reconstructs each source with mixture phase and scores it.

    Args:
        model: Trained separator (ignored when `estimator` is given).
        tracks: Paired-format test tracks.
        mode: Label carried by the report (baseline, V, VA).
        source_names: Display names per source index.
        estimator: Replaces the separator, e.g. an oracle for pipeline checks.
        export_dir: If set, estimates are written there as 16-bit WAV.

    Tracks whose references are degenerate are listed in `failures` and left out.
    """
    if estimator is None:
        estimator = separator_estimator(model)

    rows, failures = [], []
    for track in tracks:
        waveforms = reconstruct_track(track, estimator(track))
        n = len(waveforms[0])
        references = [s[:n] for s in track.sources]
        names = [source_names[k] if k < len(source_names) else f"source_{k}" for k in range(len(waveforms))]
        try:
            scores = [sdr_sir_sar(decompose(w.samples, references, k)) for k, w in enumerate(waveforms)]
        except DegenerateReferenceError as e:
            failures.append(f"{track.name}: {e}")
            continue
        for name, metrics in zip(names, scores):
            rows.append({"track": track.name, "subset": track.subset, "source": name, **metrics._asdict()})
        if export_dir is not None:
            for name, w in zip(names, waveforms):
                export_estimate(Path(export_dir) / track.name / f"{name}.wav", w)

    frame = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    return EvalReport(mode=mode, tracks=frame, failures=failures)
