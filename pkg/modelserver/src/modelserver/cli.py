"""``crop-vqa-modelserver``: serve configured engines over the wire protocol."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import create_app
from .config import ServerConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crop-vqa-modelserver", description=__doc__)
    parser.add_argument("--config", default=None, help="JSON config naming an engine per capability")
    parser.add_argument(
        "--all-toy",
        action="store_true",
        help="serve the deterministic weightless engines on every capability",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9100)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.all_toy:
        cfg = ServerConfig.all_toy()
    elif args.config:
        cfg = ServerConfig.from_file(args.config)
    else:
        print("pass --config FILE or --all-toy", file=sys.stderr)
        return 1
    uvicorn.run(create_app(cfg), host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
