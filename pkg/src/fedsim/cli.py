"""Command-line interface.

Subcommands:
    gen-data  materialize a federation recipe and export dataset.csv
    metrics   print federation heterogeneity metrics as JSON
    run       run one federation per seed, writing rounds.csv + summary.json
    sweep     compare strategies across seeds, writing sweep.csv
    report    print a mean+/-std worst-group accuracy table from a sweep

Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .configio import RunConfig, load_config, resolve_recipe
from .datagen import (
    FederatedDataset,
    IntegrityError,
    RecipeError,
    build_federation,
    export_csv,
    load_csv,
)
from .engine import ConfigError, run_federation
from .metrics import InteractionMatrix, federation_metrics
from .runio import (
    DataFormatError,
    read_sweep_csv,
    report_table,
    write_rounds_csv,
    write_summary,
    write_sweep_csv,
)
from .selection import STRATEGIES

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="materialize a recipe and export CSV")
    p.add_argument("recipe", help="recipe file or built-in profile name")
    p.add_argument("-o", "--out", required=True, help="output directory")

    p = sub.add_parser("metrics", help="print federation metrics JSON")
    p.add_argument("source", help="recipe file, built-in name, or gen-data output dir")

    p = sub.add_parser("run", help="run a federation per configured seed")
    p.add_argument("config", help="run config JSON")
    p.add_argument("-o", "--out", required=True, help="output directory")

    p = sub.add_parser("sweep", help="compare strategies across seeds")
    p.add_argument("config", help="run config JSON")
    p.add_argument("--strategies", required=True, help="comma-separated strategy list")
    p.add_argument("-o", "--out", required=True, help="output directory")

    p = sub.add_parser("report", help="summarize a sweep directory")
    p.add_argument("directory", help="directory containing sweep.csv")
    return parser


def cmd_gen_data(args) -> int:
    recipe, spec = resolve_recipe(args.recipe)
    fd = build_federation(recipe, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_csv(fd, out / "dataset.csv")
    print(f"wrote {out / 'dataset.csv'} ({fd.n_clients} clients, {len(fd.test)} test samples)")
    return EXIT_OK


def _metrics_from_dir(path: Path) -> tuple[str, list[InteractionMatrix]]:
    csv_path = path / "dataset.csv"
    if not csv_path.exists():
        raise DataFormatError(f"{path} contains no dataset.csv")
    clients, _ = load_csv(csv_path)
    n_classes = 1 + max(int(c.y.max()) for c in clients.values())
    n_attrs = 1 + max(int(c.a.max()) for c in clients.values())
    mats = [
        clients[k].interaction_matrix(n_classes, n_attrs) for k in sorted(clients)
    ]
    return path.name, mats


def cmd_metrics(args) -> int:
    src = Path(args.source)
    if src.is_dir():
        name, mats = _metrics_from_dir(src)
    else:
        recipe, _ = resolve_recipe(args.source)
        name, mats = recipe.name, recipe.client_matrices
    fm = federation_metrics(mats)
    print(json.dumps({"name": name, **fm.to_dict()}))
    return EXIT_OK


def _run_one(cfg: RunConfig, fd: FederatedDataset, strategy: str, seed: int, out: Path) -> dict:
    federation = dataclasses.replace(cfg.federation, strategy=strategy, seed=seed)
    if strategy == "variance_oracle":
        federation = dataclasses.replace(federation, ablation="known_matrix_weights")
    elif federation.ablation == "known_matrix_weights":
        federation = dataclasses.replace(federation, ablation="estimated")
    result = run_federation(federation, fd)
    out.mkdir(parents=True, exist_ok=True)
    write_rounds_csv(result, out / "rounds.csv")
    write_summary(result, cfg.recipe.name, out / "summary.json")
    if cfg.snapshot_params:
        from .models import params_to_json

        (out / "params.json").write_text(params_to_json(result.final_params) + "\n")
    return {
        "recipe": cfg.recipe.name,
        "strategy": strategy,
        "seed": seed,
        "final_worst_group_acc": result.final_worst_group,
        "final_test_loss": result.rounds[-1].test_loss,
    }


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    fd = build_federation(cfg.recipe, cfg.generator)
    out = Path(args.out)
    for seed in cfg.seeds:
        row = _run_one(cfg, fd, cfg.federation.strategy, seed, out / f"seed{seed}")
        print(
            f"seed {seed}: worst-group {row['final_worst_group_acc']:.3f}, "
            f"test loss {row['final_test_loss']:.3f}"
        )
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        raise ConfigError(f"unknown strategies {unknown}; choose from {STRATEGIES}")
    fd = build_federation(cfg.recipe, cfg.generator)
    out = Path(args.out)
    rows = []
    for strategy in strategies:
        for seed in cfg.seeds:
            rows.append(_run_one(cfg, fd, strategy, seed, out / strategy / f"seed{seed}"))
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out / "sweep.csv")
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} runs)")
    print(report_table(rows))
    return EXIT_OK


def cmd_report(args) -> int:
    sweep_path = Path(args.directory) / "sweep.csv"
    if not sweep_path.exists():
        raise DataFormatError(f"{sweep_path} not found")
    print(report_table(read_sweep_csv(sweep_path)))
    return EXIT_OK


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "metrics": cmd_metrics,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, RecipeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, IntegrityError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
