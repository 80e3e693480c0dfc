"""
MCG denoising pipeline.

Usage:
    python main.py synth   --config run.cfg --set data.ecg_csv=ptbdb_normal.csv --out runs/data
    python main.py train   --config run.cfg --set data.dataset_dir=runs/data --out runs/model
    python main.py denoise --config run.cfg --set data.model_path=runs/model/model.mcgm --out runs/trace
    python main.py eval    --config run.cfg --set data.model_path=runs/model/model.mcgm --out runs/eval

Exit codes: 0 ok, 1 unexpected failure, 2 malformed input or config,
3 I/O failure or locked output directory, 4 training divergence,
5 PSD grid mismatch.
"""
import argparse
import sys
from typing import List, Optional

from dotenv import load_dotenv

from commands.denoise import cmd_denoise
from commands.evaluate import cmd_eval
from commands.synth import cmd_synth
from commands.train import cmd_train
from utils.error_handler import EXIT_OK, report_exception
from utils.logger import get_logger, set_run_id, setup_logging
from utils.run_config import build_run_config

COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "denoise": cmd_denoise,
    "eval": cmd_eval,
}

HELP = {
    "synth": "Precondition ECG cycles and synthesize noisy MCG cycles",
    "train": "Train the denoiser on a synthesized dataset",
    "denoise": "Denoise one stored MCG cycle and write a trace CSV",
    "eval": "Compare residual-noise PSDs of the model and the moving average",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Path to a section.key = value config file")
    common.add_argument("--seed", type=int, default=None, help="Global 64-bit seed")
    common.add_argument("--out", default=None, help="Output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one config key, e.g. --set train.epochs=5 (repeatable)")

    parser = argparse.ArgumentParser(
        description="Synthesize, denoise and evaluate magnetocardiography cycles",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)

    setup_logging()
    set_run_id()
    logger = get_logger("main")

    try:
        config = build_run_config(args.config, args.set, seed=args.seed, out=args.out)
        COMMANDS[args.command](config)
    except Exception as exc:
        return report_exception(exc, command=args.command)
    logger.info("Done", extra={"command": args.command})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
