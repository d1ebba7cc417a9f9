"""Command line entry point: run the service or print the effective
configuration."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

import uvicorn

from .app import create_app
from .config import ConfigError, config_to_dict, load_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="model-service",
        description="HTTP classification service for code snippets",
    )
    parser.add_argument("--config", help="JSON config file path")
    parser.add_argument("--mode", choices=("toy", "checkpoint"))
    parser.add_argument("--checkpoint", help="checkpoint hub id or local path")
    parser.add_argument("--device", help="inference device hint, e.g. cpu or cuda:0")
    parser.add_argument("--host")
    parser.add_argument("--port", type=int)
    parser.add_argument("--watch", help="pipe-separated watched identifiers (toy mode)")
    parser.add_argument(
        "--print-config", action="store_true",
        help="print the effective configuration as JSON and exit",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {
        "mode": args.mode,
        "checkpoint": args.checkpoint,
        "device": args.device,
        "host": args.host,
        "port": args.port,
    }
    if args.watch is not None:
        overrides["watch"] = frozenset(name for name in args.watch.split("|") if name)
    try:
        config = load_config(path=args.config, overrides=overrides)
    except ConfigError as exc:
        print(f"model-service: error: {exc}", file=sys.stderr)
        return 2
    if args.print_config:
        print(json.dumps(config_to_dict(config), indent=2, sort_keys=True))
        return 0
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
