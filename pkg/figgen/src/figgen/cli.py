"""figgen command line: render one figure from experiment CSV logs."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import KINDS, FigureSpec, FiggenError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figgen",
        description="Render trajectory/gain figures from experiment CSV logs",
    )
    parser.add_argument("--log", required=True, nargs="+",
                        help="log directory (two directories for controller_comparison)")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--joint", type=int, default=1, help="1-based joint index")
    parser.add_argument("--out", required=True, help="output PNG path")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(
            log_dirs=tuple(Path(p) for p in args.log),
            kind=args.kind,
            joint=args.joint,
            out=Path(args.out),
        )
        render(spec)
    except FiggenError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
