"""plotkit <kind> <inputs...> -o out.png [--smooth N]"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, SchemaError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="plotkit", description=__doc__)
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("inputs", nargs="+", help="rounds.csv / sweep.csv / metrics JSON files")
    parser.add_argument("-o", "--output", required=True, help="output image path")
    parser.add_argument("--smooth", type=int, default=1, help="rolling-mean window")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(
            kind=args.kind,
            inputs=tuple(args.inputs),
            output=args.output,
            smooth=args.smooth,
        )
        out = render(spec)
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
