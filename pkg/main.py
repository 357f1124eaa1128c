import sys
import argparse
from pathlib import Path

from dotenv import load_dotenv

# -------------------- Path setup --------------------
ROOT = Path(__file__).parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

# $SEMISEP_RUN_ROOT may come from .env; load it before src.constants is imported
load_dotenv(ROOT / ".env")


# -------------------- CLI --------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Semi-supervised adversarial music source separation runner"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def add_config_args(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", type=Path, default=None, help="flat `section.key = value` config file")
        sub.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE",
            help="override one config key (repeatable)",
        )

    generate = commands.add_parser("generate", help="render the toy corpus (WAVs + manifest)")
    add_config_args(generate)

    train = commands.add_parser("train", help="train a separator (baseline, V or VA mode)")
    add_config_args(train)
    train.add_argument("--resume", type=Path, default=None, help="checkpoint directory of a run to continue")

    evaluate = commands.add_parser("evaluate", help="BSS-eval the best checkpoint of a run")
    evaluate.add_argument("run_dir", type=Path)
    evaluate.add_argument("--manifest", type=Path, default=None, help="test manifest (default: the run's corpus)")

    visualize = commands.add_parser("visualize", help="estimate and critic-gradient heatmaps")
    visualize.add_argument("run_dir", type=Path)
    visualize.add_argument("--track", required=True, help="validation or test track name")
    visualize.add_argument("--source", type=int, default=0, help="0-based source index")

    report = commands.add_parser("report", help="merge evaluated runs into one comparison table")
    report.add_argument("run_dirs", type=Path, nargs="+")
    report.add_argument("--out", type=Path, required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    from src.orchestrator.handlers import dispatch

    try:
        dispatch(args.command, args)
    except Exception as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
