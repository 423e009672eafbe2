"""``chainforge <stage> --config run.json [overrides]``

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from chainforge.config import load_config, parse_value
from chainforge.errors import ChainforgeError, ConfigError
from chainforge.pipeline import run_dpo_loss, run_stage

logger = logging.getLogger("chainforge")

SEED_KEYS = {"generate": "seeds.generate", "sample": "seeds.sample", "dpo-check": "seeds.dpo"}


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=Path("configs/run.json"), help="Path to the run config (JSON)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="Override any config key, e.g. --set generation.workers=8")
    common.add_argument("--out", type=Path, help="Output root for every stage artifact")
    common.add_argument("--verbose", action="store_true", help="Log at DEBUG level")

    parser = argparse.ArgumentParser(
        prog="chainforge",
        description="Function-calling reasoning chains -> DPO preference data -> evaluation",
    )
    stages = parser.add_subparsers(dest="stage", required=True)

    p = stages.add_parser("generate", parents=[common], help="Run the agent and store labeled chains")
    p.add_argument("--problems", type=Path)
    p.add_argument("--backend", choices=["mock", "http"])
    p.add_argument("--n-c", type=int)
    p.add_argument("--n-max", type=_int_list)
    p.add_argument("--seed", type=int)

    stages.add_parser("augment", parents=[common], help="Cross right x wrong completions per prompt")

    p = stages.add_parser("sample", parents=[common], help="Uniformly sample n_s pairs")
    p.add_argument("--n-s", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--replacement", action="store_true", default=None)

    p = stages.add_parser("split", parents=[common], help="Split pairs into train/test by problem")
    p.add_argument("--train-fol", type=_int_list)
    p.add_argument("--train-gsm", type=_int_list)

    p = stages.add_parser("export", parents=[common], help="Write DPO-ready JSONL")
    p.add_argument("--format", choices=["dpo-jsonl"], default="dpo-jsonl")

    p = stages.add_parser("eval", parents=[common], help="Score two datasets and run Wilcoxon tests")
    p.add_argument("--dataset-a", type=Path)
    p.add_argument("--dataset-b", type=Path)
    p.add_argument("--alpha", type=float)

    p = stages.add_parser("report", parents=[common], help="Render accuracy and Wilcoxon tables")
    p.add_argument("--alpha", type=float)

    p = stages.add_parser("dpo-check", parents=[common], help="Identity, gradient and toy-training checks")
    p.add_argument("--seed", type=int)
    p.add_argument("--beta", type=float)

    p = stages.add_parser("dpo-loss", help="Score an exported pair file under log-prob tables")
    p.add_argument("--pairs", type=Path, required=True)
    p.add_argument("--logps", type=Path, required=True, help="CSV: completion,policy_logp,reference_logp")
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--verbose", action="store_true")
    return parser


def collect_overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = parse_value(value)

    flags = {
        "out": "output_root",
        "problems": "problems",
        "backend": "backend.kind",
        "n_c": "generation.n_c",
        "n_max": "generation.n_max",
        "n_s": "sampling.n_s",
        "replacement": "sampling.replacement",
        "train_fol": "split.train_fol",
        "train_gsm": "split.train_gsm8k",
        "dataset_a": "evaluation.dataset_a",
        "dataset_b": "evaluation.dataset_b",
        "alpha": "evaluation.alpha",
        "beta": "dpo.beta",
    }
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = str(value) if isinstance(value, Path) else value
    if getattr(args, "seed", None) is not None:
        overrides[SEED_KEYS[args.stage]] = args.seed
    return overrides


def configure_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        force=True,
    )
    # keep the SDK's request logs out of INFO runs
    logging.getLogger("httpx").setLevel(logging.DEBUG if verbose else logging.WARNING)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        if args.stage == "dpo-loss":
            run_dpo_loss(args.pairs, args.logps, args.beta)
            return 0
        cfg = load_config(args.config, collect_overrides(args))
        logger.info("Starting stage '%s' (config %s, hash %s)...", args.stage, args.config, cfg.hash[:12])
        return run_stage(args.stage, cfg)
    except ChainforgeError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except Exception:
        logger.exception("Stage '%s' failed unexpectedly", args.stage)
        return 2


if __name__ == "__main__":
    sys.exit(main())
