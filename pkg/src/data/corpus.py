from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.audio.spectral import stft
from src.audio.wav import Waveform, ingest, write_wav
from src.constants import MANIFEST_POOLS, PAIRED_POOLS, SAMPLE_RATE

MANIFEST_COLUMNS = ["pool", "source_index", "path", "subset"]
MANIFEST_NAME = "manifest.csv"
DEFAULT_SUBSET = "all"

# paired-format tracks tolerate 16-bit quantization of all three files
ADDITIVITY_TOLERANCE = 1e-4


@dataclass(frozen=True)
class Track:
    """
    One recording of a pool.

    `waveform` is the mixture for paired/unlabelled tracks and the solo
    signal for solo tracks; `sources` holds the K stems of paired tracks.
    """

    name: str
    waveform: np.ndarray
    sources: Tuple[np.ndarray, ...] = ()
    subset: str = DEFAULT_SUBSET
    sample_rate: int = SAMPLE_RATE
    params: Mapping[str, Any] = field(default_factory=dict)

    @property
    def is_paired(self) -> bool:
        return bool(self.sources)

    @cached_property
    def magnitude(self) -> np.ndarray:
        """Linear STFT magnitude [frames, 257] of `waveform` (float32)."""
        return stft(Waveform(self.waveform, self.sample_rate)).magnitude.astype(np.float32)

    @cached_property
    def source_magnitudes(self) -> Tuple[np.ndarray, ...]:
        return tuple(
            stft(Waveform(s, self.sample_rate)).magnitude.astype(np.float32) for s in self.sources
        )

    @property
    def n_frames(self) -> int:
        return self.magnitude.shape[0]


@dataclass(frozen=True)
class DataCorpus:
    """
    The data pools of semi-supervised training.

    `paired` (multi-track, supervised), `unlabelled` (mixtures only) and
    `solo` (one tuple of solo recordings per source) train the models;
    `validation` and `test` are paired-format pools for model selection
    and evaluation. Tracks never appear in two pools.
    """

    n_sources: int
    paired: Tuple[Track, ...] = ()
    unlabelled: Tuple[Track, ...] = ()
    solo: Tuple[Tuple[Track, ...], ...] = ()
    validation: Tuple[Track, ...] = ()
    test: Tuple[Track, ...] = ()

    def __post_init__(self):
        if self.n_sources < 2:
            raise ValueError(f"A corpus needs at least 2 sources, got {self.n_sources}")
        if self.solo and len(self.solo) != self.n_sources:
            raise ValueError(f"Expected {self.n_sources} solo pools, got {len(self.solo)}")

        rates = {t.sample_rate for t in self.all_tracks()}
        if len(rates) > 1:
            raise ValueError(f"Tracks mix sample rates {sorted(rates)}")

        for pool in PAIRED_POOLS:
            for track in getattr(self, pool):
                check_additive(track, self.n_sources)

        names = [t.name for t in self.all_tracks()]
        if len(names) != len(set(names)):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"Tracks shared between pools: {dupes}")

    def all_tracks(self) -> List[Track]:
        tracks = list(self.paired) + list(self.unlabelled) + list(self.validation) + list(self.test)
        for pool in self.solo:
            tracks.extend(pool)
        return tracks

    def pool_sizes(self) -> Dict[str, int]:
        return {
            "paired": len(self.paired),
            "unlabelled": len(self.unlabelled),
            "solo": sum(len(p) for p in self.solo),
            "validation": len(self.validation),
            "test": len(self.test),
        }


def check_additive(track: Track, n_sources: int, tolerance: float = ADDITIVITY_TOLERANCE) -> None:
    """
    Raises ValueError unless the track carries K stems that sum to its mixture.
    """
    if len(track.sources) != n_sources:
        raise ValueError(f"Track {track.name} has {len(track.sources)} stems, expected {n_sources}")
    deviation = np.max(np.abs(np.sum(track.sources, axis=0) - track.waveform))
    if deviation > tolerance:
        raise ValueError(f"Stems of track {track.name} do not sum to the mixture (max deviation {deviation:.2e})")


# ── Manifest ───────────────────────────────────────────────────────────────────

def _manifest_row(pool: str, track: Track) -> Dict[str, str]:
    path = f"{pool}/{track.name}/mixture.wav" if pool in PAIRED_POOLS else f"{pool}/{track.name}.wav"
    return {"pool": pool, "source_index": "-", "path": path, "subset": track.subset}


def write_corpus(corpus: DataCorpus, root: Union[str, Path]) -> Path:
    """
    Writes every track as 32-bit float WAV plus `manifest.csv`.

    Manifest lines read `<pool>,<source_index|->,<relative wav path>,<subset>`;
    paired-format stems sit next to their mixture as `source_<k>.wav`.

    Raises:
        FileExistsError: If `root` already holds a manifest.
    """
    root = Path(root)
    manifest = root / MANIFEST_NAME
    if manifest.exists():
        raise FileExistsError(f"Corpus already exists: {manifest}")

    rows = []
    for pool in ("paired", "unlabelled", "validation", "test"):
        for track in getattr(corpus, pool):
            row = _manifest_row(pool, track)
            write_wav(root / row["path"], Waveform(track.waveform, track.sample_rate))
            for k, stem in enumerate(track.sources):
                write_wav(root / Path(row["path"]).parent / f"source_{k}.wav", Waveform(stem, track.sample_rate))
            rows.append(row)

    for k, pool in enumerate(corpus.solo):
        for track in pool:
            path = f"solo/{k}/{track.name}.wav"
            write_wav(root / path, Waveform(track.waveform, track.sample_rate))
            rows.append({"pool": "solo", "source_index": str(k), "path": path, "subset": track.subset})

    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(manifest, index=False, header=False)
    return manifest


def read_manifest(path: Union[str, Path]) -> pd.DataFrame:
    """
    Parses a manifest into a DataFrame with columns pool, source_index, path, subset.

    Raises:
        FileNotFoundError: If the manifest does not exist.
        ValueError: On unknown pools or malformed source indices.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Manifest not found: {path}")

    frame = pd.read_csv(path, header=None, names=MANIFEST_COLUMNS, dtype=str, comment="#",
                        skip_blank_lines=True, skipinitialspace=True)
    frame["subset"] = frame["subset"].fillna(DEFAULT_SUBSET)

    unknown = set(frame["pool"]) - set(MANIFEST_POOLS)
    if unknown:
        raise ValueError(f"Unknown manifest pools {sorted(unknown)} in {path}")
    solo = frame["pool"] == "solo"
    if not frame.loc[solo, "source_index"].str.fullmatch(r"\d+").all():
        raise ValueError(f"Solo entries in {path} need a numeric source index")
    return frame


def _load_paired(root: Path, row: pd.Series, n_sources: int) -> Track:
    mixture_path = root / row["path"]
    mixture = ingest(mixture_path)
    stems = tuple(
        ingest(mixture_path.parent / f"source_{k}.wav").samples.astype(np.float32) for k in range(n_sources)
    )
    return Track(
        name=mixture_path.parent.name,
        waveform=mixture.samples.astype(np.float32),
        sources=stems,
        subset=row["subset"],
        sample_rate=mixture.sample_rate,
    )


def load_corpus(manifest_path: Union[str, Path], n_sources: Optional[int] = None,
                pools: Tuple[str, ...] = MANIFEST_POOLS) -> DataCorpus:
    """
    Loads the pools listed in a manifest (paths relative to the manifest).

    Args:
        manifest_path: Manifest file.
        n_sources: K; inferred from the solo indices or stem files when omitted.
        pools: Pools to load; others stay empty.
    """
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    frame = read_manifest(manifest_path)

    if n_sources is None:
        solo_idx = frame.loc[frame["pool"] == "solo", "source_index"].astype(int)
        if len(solo_idx):
            n_sources = int(solo_idx.max()) + 1
        else:
            first = frame[frame["pool"].isin(PAIRED_POOLS)].iloc[0]
            n_sources = len(list((root / first["path"]).parent.glob("source_*.wav")))

    loaded: Dict[str, List[Track]] = {pool: [] for pool in MANIFEST_POOLS}
    solo: List[List[Track]] = [[] for _ in range(n_sources)]
    for _, row in frame[frame["pool"].isin(pools)].iterrows():
        pool = row["pool"]
        if pool in PAIRED_POOLS:
            loaded[pool].append(_load_paired(root, row, n_sources))
            continue
        wav = ingest(root / row["path"])
        track = Track(
            name=Path(row["path"]).stem,
            waveform=wav.samples.astype(np.float32),
            subset=row["subset"],
            sample_rate=wav.sample_rate,
        )
        if pool == "solo":
            k = int(row["source_index"])
            if k >= n_sources:
                raise ValueError(f"Solo source index {k} out of range for K={n_sources}")
            solo[k].append(track)
        else:
            loaded[pool].append(track)

    return DataCorpus(
        n_sources=n_sources,
        paired=tuple(loaded["paired"]),
        unlabelled=tuple(loaded["unlabelled"]),
        solo=tuple(tuple(p) for p in solo) if any(solo) else (),
        validation=tuple(loaded["validation"]),
        test=tuple(loaded["test"]),
    )
