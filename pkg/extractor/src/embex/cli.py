"""CLI: train and export embedding sets from a config file."""

from __future__ import annotations

import argparse
import sys

from .config import ExtractorConfig, ExtractorError
from .train import train_and_export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="embex", description="Train a metric-learning embedder and export "
                                  "embedding sets for analysis")
    parser.add_argument("--config", required=True, help="extractor config (JSON)")
    args = parser.parse_args(argv)
    try:
        written = train_and_export(ExtractorConfig.load(args.config))
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
