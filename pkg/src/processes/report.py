from pathlib import Path
from typing import Iterable, List, Tuple

import pandas as pd

from src.processes.evaluation import METRICS
from src.utils.json import read_json_file

EVAL_DIR = "eval"
MODE_ORDER = ("baseline", "V", "VA")


def load_run_means(run_dir: Path) -> pd.DataFrame:
    """
    Reads one evaluated run's means, tagged with its mode and run name.

    Raises:
        FileNotFoundError: If the run has not been evaluated.
    """
    eval_dir = Path(run_dir) / EVAL_DIR
    means_path = eval_dir / "eval_means.csv"
    if not means_path.exists():
        raise FileNotFoundError(f"No evaluation found in {run_dir} (run `evaluate` first)")
    meta = read_json_file(eval_dir / "eval_meta.json")
    return pd.read_csv(means_path).assign(mode=meta["mode"], run=Path(run_dir).name)


def _ordered_modes(modes: Iterable[str]) -> List[str]:
    modes = list(dict.fromkeys(modes))
    known = [m for m in MODE_ORDER if m in modes]
    return known + sorted(m for m in modes if m not in MODE_ORDER)


def comparison_table(means: pd.DataFrame, subset: str = "all") -> pd.DataFrame:
    """
    Rows metric x source, one column per mode; runs sharing a mode (seeds) are averaged.
    """
    rows = means[means["subset"] == subset]
    long = rows.melt(id_vars=["mode", "run", "source"], value_vars=list(METRICS), var_name="metric")
    table = long.pivot_table(index=["metric", "source"], columns="mode", values="value", aggfunc="mean")
    table = table.reindex(columns=_ordered_modes(table.columns))
    table = table.reindex(pd.MultiIndex.from_product([list(METRICS), sorted(rows["source"].unique())],
                                                     names=["metric", "source"]))
    table.columns.name = None
    return table


def subset_table(means: pd.DataFrame, metric: str = "SDR") -> pd.DataFrame:
    """One metric per (source, mode) across subsets, like per-database columns."""
    if metric not in METRICS:
        raise ValueError(f"Unknown metric '{metric}' (expected one of {METRICS})")
    table = means.pivot_table(index=["source", "mode"], columns="subset", values=metric, aggfunc="mean")
    table.columns.name = None
    return table


def merge_runs(run_dirs: Iterable[Path]) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Loads the means of several evaluated runs.

    Returns:
        (comparison table over all subsets, long table of every run's means)
    """
    run_dirs = list(run_dirs)
    if not run_dirs:
        raise ValueError("report needs at least one run directory")
    means = pd.concat([load_run_means(d) for d in run_dirs], ignore_index=True)
    return comparison_table(means), means


def write_report(run_dirs: Iterable[Path], out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table, means = merge_runs(run_dirs)
    table.to_csv(out_dir / "comparison.csv")
    subset_table(means).to_csv(out_dir / "sdr_by_subset.csv")
    means.to_csv(out_dir / "all_means.csv", index=False)
    return out_dir
