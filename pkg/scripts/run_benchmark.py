#!/usr/bin/env python3
"""Strategy comparison on the built-in federations.

Runs every selection strategy on the chosen recipes over several seeds
and prints the worst-group accuracy table, mirroring the engine's
`fedsim sweep` but convenient for interactive use.

Example:
    python scripts/run_benchmark.py --recipes gsc24,waterbirds30 --seeds 1,2,3
"""

import argparse
import time

from fedsim import recipes
from fedsim.datagen import build_federation
from fedsim.engine import FederationConfig, run_federation
from fedsim.runio import report_table


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--recipes", default="gsc24,waterbirds30")
    parser.add_argument(
        "--strategies",
        default="feddiverse,uniform,round_robin,pow_d,fedpns,hcsfed",
    )
    parser.add_argument("--seeds", default="1,2,3")
    parser.add_argument("--rounds", type=int, default=60)
    parser.add_argument("--clients-per-round", type=int, default=9)
    args = parser.parse_args()

    rows = []
    start = time.perf_counter()
    for name in args.recipes.split(","):
        recipe, spec = recipes.get(name.strip())
        fd = build_federation(recipe, spec)
        for strategy in args.strategies.split(","):
            for seed in (int(s) for s in args.seeds.split(",")):
                cfg = FederationConfig(
                    rounds=args.rounds,
                    clients_per_round=args.clients_per_round,
                    strategy=strategy.strip(),
                    seed=seed,
                )
                result = run_federation(cfg, fd)
                rows.append(
                    {
                        "recipe": name.strip(),
                        "strategy": strategy.strip(),
                        "seed": seed,
                        "final_worst_group_acc": result.final_worst_group,
                        "final_test_loss": result.rounds[-1].test_loss,
                    }
                )
                print(
                    f"{name:>14s} {strategy:>12s} seed={seed} "
                    f"worst-group={result.final_worst_group:.3f}"
                )
    print(f"\n{len(rows)} runs in {time.perf_counter() - start:.1f}s\n")
    print(report_table(rows))


if __name__ == "__main__":
    main()
