#!/usr/bin/env python3
"""Write the built-in federation profiles to recipes/*.json."""

import argparse
from pathlib import Path

from fedsim import recipes
from fedsim.datagen import save_recipe


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("-o", "--out", default="recipes", help="output directory")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(recipes.BUILTIN):
        recipe, spec = recipes.get(name)
        path = out / f"{name}.json"
        save_recipe(path, recipe, spec)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
