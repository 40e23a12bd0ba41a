"""Command-line entry point: ``clengine {run,inspect,fetch-mnist}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import CLError, ConfigError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clengine", description="Continual-learning experiment runner")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run or resume an experiment")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--resume", type=Path, help="checkpoint to resume from")
    r.add_argument("--output", type=Path, help="override output_dir")
    r.add_argument("--stop-after", type=int, help="stop after this many experiences (checkpointing first)")

    i = sub.add_parser("inspect", help="summarise a checkpoint")
    i.add_argument("--ckpt", required=True, type=Path)

    f = sub.add_parser("fetch-mnist", help="download and verify the MNIST IDX files")
    f.add_argument("--dir", required=True, type=Path)
    f.add_argument("--manifest", type=Path, help=argparse.SUPPRESS)
    return p


def _run(args) -> int:
    from .config import load_config
    from .runner import run_experiment

    cfg = load_config(args.config)
    if args.output is not None:
        cfg.output_dir = str(args.output)
    res = run_experiment(cfg, resume=args.resume, stop_after=args.stop_after)
    state = "finished" if res.finished else f"paused before experience {res.next_experience}"
    print(f"{state}; metrics in {res.output_dir}")
    return 0


def _inspect(args) -> int:
    from .runner import inspect_checkpoint

    info = inspect_checkpoint(args.ckpt)
    print(f"format version:   {info['format_version']}")
    print(f"config digest:    {info['config_digest']}")
    print(f"next experience:  {info['next_experience']}")
    print(f"train iterations: {info['train_iterations']}")
    m = info["matrix"]
    if len(m):
        arr = m.as_array()
        print("accuracy matrix (rows: trained through k, cols: eval experience i):")
        for k, row in enumerate(arr):
            print(f"  k={k}: " + " ".join("  -  " if v != v else f"{v:.3f}" for v in row))
    else:
        print("accuracy matrix:  empty")
    return 0


def _fetch(args) -> int:
    from .fetch import fetch_mnist

    for path in fetch_mnist(args.dir, args.manifest):
        print(path)
    return 0


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    handler = {"run": _run, "inspect": _inspect, "fetch-mnist": _fetch}[args.command]
    try:
        return handler(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (CLError, OSError, RuntimeError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
