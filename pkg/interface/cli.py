from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from rich.console import Console

from interface.config_schema import COMMANDS
from interface.task_executor import TaskExecutor


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dppdyn",
        description="Glauber and Kawasaki dynamics with a determinantal invariant measure",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, required=True, help="experiment config (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--replicas", type=int, default=None, help="replica count override")
    parser.add_argument("--settings", type=Path, default=Path("config/settings.yaml"))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    console = Console(stderr=True)
    args = build_parser().parse_args(argv)
    executor = TaskExecutor(args.settings)
    result = executor.execute(args.command, args.config, seed=args.seed, out=args.out, replicas=args.replicas)
    style = "green" if result.ok else "bold red"
    console.print(result.message, style=style)
    for name, path in sorted(result.artifacts.items()):
        console.print(f"  {name}: {path}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
