from pathlib import Path
from typing import Callable, Dict, Optional, Sequence

from src.orchestrator.config import RESOLVED_NAME, ExperimentConfig, load_config, write_resolved


def _manifest_of(config: ExperimentConfig) -> Path:
    from src.data.corpus import MANIFEST_NAME

    return config.data_dir / MANIFEST_NAME


def run_config(run_dir: Path) -> ExperimentConfig:
    """The resolved config a run was trained with."""
    return load_config(Path(run_dir) / RESOLVED_NAME)


def cmd_generate(config: ExperimentConfig) -> Path:
    """Renders the toy corpus into `data.dir` (WAVs + manifest)."""
    from src.data.corpus import write_corpus
    from src.data.toy import generate_toy_corpus
    from src.utils.timer import get_current_time, get_elapsed_time

    manifest = _manifest_of(config)
    if manifest.exists():
        raise FileExistsError(f"Corpus already exists: {manifest}")

    start = get_current_time()
    toy = config.toy_config()
    print(f"⏳ Generating toy corpus (seed {toy.seed}) into {config.data_dir}")
    corpus = generate_toy_corpus(toy)
    write_corpus(corpus, config.data_dir)
    write_resolved(config, config.data_dir)

    sizes = ", ".join(f"{pool}={n}" for pool, n in corpus.pool_sizes().items())
    print(f"✅ Wrote {manifest} ({sizes}) in {get_elapsed_time(start)}s")
    return manifest


def _new_run_dir(config: ExperimentConfig) -> Path:
    from src.utils.timer import get_current_time, run_stamp

    name = config["paths.run_name"] or f"{config['train.mode']}_{run_stamp(get_current_time())}"
    run_dir = config.run_root / name
    if run_dir.exists():
        raise FileExistsError(f"Run directory already exists: {run_dir}")
    run_dir.mkdir(parents=True)
    return run_dir


def cmd_train(config: Optional[ExperimentConfig], resume: Optional[Path] = None) -> Path:
    """
    Trains a separator (and critics) on the corpus in `data.dir`.

    With `resume` (a `checkpoints/epoch_XXX` directory) the run continues in
    place using the run's own resolved config.
    """
    from src.data.corpus import load_corpus
    from src.processes.training import run_training
    from src.utils.timer import format_duration, get_current_time, get_elapsed_time

    if resume is not None:
        resume = Path(resume)
        run_dir = resume.parent.parent
        config = run_config(run_dir)
    else:
        run_dir = _new_run_dir(config)
        write_resolved(config, run_dir)

    train_config = config.train_config()
    plan = train_config.separator.plan
    for note in plan.adjustments:
        print(f"⚠️ {note}")
    plan.table().to_csv(run_dir / "shape_plan.csv", index=False)

    corpus = load_corpus(_manifest_of(config), pools=("paired", "unlabelled", "solo", "validation"))
    if not corpus.validation:
        raise ValueError(f"The corpus in {config.data_dir} has no validation tracks")

    start = get_current_time()
    print(f"⏳ Training mode {train_config.mode} into {run_dir}")
    result = run_training(train_config, corpus, corpus.validation, run_dir=run_dir, resume_from=resume)
    print(f"💾 Checkpoints in {run_dir / 'checkpoints'} ({format_duration(get_elapsed_time(start))})")
    if result.stopped_early:
        print(f"✅ Stopped early after epoch {result.state.epoch}")
    return run_dir


def cmd_evaluate(run_dir: Path, manifest: Optional[Path] = None) -> Path:
    """Scores the run's best checkpoint on the test pool and writes `eval/`."""
    from src.constants import SOURCE_NAMES
    from src.data.corpus import load_corpus
    from src.models.checkpoint import load_model
    from src.processes.evaluation import evaluate_model
    from src.processes.report import EVAL_DIR
    from src.processes.training import best_checkpoint

    run_dir = Path(run_dir)
    config = run_config(run_dir)
    manifest = Path(manifest) if manifest is not None else _manifest_of(config)
    tracks = load_corpus(manifest, pools=("test",)).test
    if not tracks:
        raise ValueError(f"No test tracks in {manifest}")

    checkpoint = best_checkpoint(run_dir)
    model = load_model(checkpoint, "separator")
    out_dir = run_dir / EVAL_DIR
    export_dir = out_dir / "estimates" if config["eval.export_estimates"] else None

    print(f"⏳ Evaluating {checkpoint.name} on {len(tracks)} test tracks")
    report = evaluate_model(model, tracks, mode=config["train.mode"], source_names=SOURCE_NAMES, export_dir=export_dir)
    report.save(out_dir)
    write_resolved(config, out_dir)

    for failure in report.failures:
        print(f"⚠️ Excluded {failure}")
    overall = report.means().query("subset == 'all'")
    for _, row in overall[overall["n_failed"] > 0].iterrows():
        print(f"⚠️ {row['n_failed']} {row['source']} estimates have no target component (-inf dB)")
    print(f"📊 Mean metrics (all subsets):\n{overall.to_string(index=False)}")
    print(f"✅ Report written to {out_dir}")
    return out_dir


def cmd_visualize(run_dir: Path, track: str, source: int) -> Path:
    """Renders estimate and critic-gradient heatmaps for one test or validation track."""
    from src.data.corpus import load_corpus
    from src.models.checkpoint import load_model
    from src.processes.training import best_checkpoint, source_name
    from src.processes.visualize import gradient_view, save_view

    run_dir = Path(run_dir)
    config = run_config(run_dir)
    checkpoint = best_checkpoint(run_dir)
    name = source_name(source)
    if not (checkpoint / f"critic_{name}.pt").exists():
        raise FileNotFoundError(f"Run {run_dir.name} has no critic for source {source} ({name})")

    corpus = load_corpus(_manifest_of(config), pools=("validation", "test"))
    matches = [t for t in corpus.validation + corpus.test if t.name == track]
    if not matches:
        raise ValueError(f"Track '{track}' is not in the validation or test pool")

    tile = config["visualize.tile"]
    view = gradient_view(
        load_model(checkpoint, "separator"),
        load_model(checkpoint, f"critic_{name}"),
        matches[0],
        source,
        tile=None if tile < 0 else tile,
    )
    png = save_view(view, run_dir / "figures", config["visualize.max_bin"], name)
    print(f"✅ Figure written to {png}")
    return png


def cmd_report(run_dirs: Sequence[Path], out_dir: Path) -> Path:
    """Merges evaluated runs into one comparison table (rows metric x source, columns mode)."""
    from src.processes.report import merge_runs, write_report

    out_dir = write_report(run_dirs, out_dir)
    table, _ = merge_runs(run_dirs)
    print(f"📊 Mean test metrics by mode:\n{table.round(2).to_string()}")
    print(f"✅ Report written to {out_dir}")
    return out_dir


def _generate(args) -> Path:
    return cmd_generate(load_config(args.config, args.set))


def _train(args) -> Path:
    if args.resume is not None:
        return cmd_train(None, resume=args.resume)
    return cmd_train(load_config(args.config, args.set))


def _evaluate(args) -> Path:
    return cmd_evaluate(args.run_dir, args.manifest)


def _visualize(args) -> Path:
    return cmd_visualize(args.run_dir, args.track, args.source)


def _report(args) -> Path:
    return cmd_report(args.run_dirs, args.out)


# Command -> handler taking the parsed CLI arguments
HANDLER_MAP: Dict[str, Callable[..., Path]] = {
    "generate": _generate,
    "train": _train,
    "evaluate": _evaluate,
    "visualize": _visualize,
    "report": _report,
}


def dispatch(command: str, args) -> Path:
    handler = HANDLER_MAP.get(command)
    if handler is None:
        raise ValueError(f"Unknown command '{command}' (expected one of {sorted(HANDLER_MAP)})")
    return handler(args)
