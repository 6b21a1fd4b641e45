"""Result persistence: per-round CSV, run summary JSON, sweep CSV.

rounds.csv starts with a ``# schema=1`` line, then a fixed header:
round, strategy, selected_ids (pipe-separated), test_loss, one accuracy
column per (class, attribute) group in row-major order, and the
worst-group accuracy. Floats are written with ``repr`` so identical runs
produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

from .engine import RunResult

SCHEMA_LINE = "# schema=1"


class DataFormatError(ValueError):
    """A results file does not match the expected schema."""


def group_columns(result: RunResult) -> list[tuple[int, int]]:
    return sorted(result.rounds[0].per_group)


def write_rounds_csv(result: RunResult, path: str | Path) -> None:
    groups = group_columns(result)
    header = (
        ["round", "strategy", "selected_ids", "test_loss"]
        + [f"acc_g{y}_{a}" for y, a in groups]
        + ["worst_group_acc"]
    )
    lines = [SCHEMA_LINE, ",".join(header)]
    for r in result.rounds:
        row = [
            str(r.round_index),
            result.strategy,
            "|".join(str(k) for k in r.selected),
            repr(r.test_loss),
        ]
        row += [repr(r.per_group[g]) for g in groups]
        row.append(repr(r.worst_group_accuracy))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_rounds_csv(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0].strip() != SCHEMA_LINE:
        raise DataFormatError(f"{path}: missing '{SCHEMA_LINE}' header")
    header = lines[1].split(",")
    required = {"round", "strategy", "selected_ids", "test_loss", "worst_group_acc"}
    missing = required - set(header)
    if missing:
        raise DataFormatError(f"{path}: missing columns {sorted(missing)}")
    rows = []
    for line in lines[2:]:
        parts = line.split(",")
        row: dict = dict(zip(header, parts))
        row["round"] = int(row["round"])
        row["selected_ids"] = [int(k) for k in row["selected_ids"].split("|")]
        row["test_loss"] = float(row["test_loss"])
        row["worst_group_acc"] = float(row["worst_group_acc"])
        for col in header:
            if col.startswith("acc_g"):
                row[col] = float(row[col])
        rows.append(row)
    return rows


def params_digest(result: RunResult) -> str:
    h = hashlib.sha256()
    h.update(repr(result.final_params.layer_shapes).encode())
    h.update(result.final_params.values.tobytes())
    return h.hexdigest()


def summary_dict(result: RunResult, recipe_name: str) -> dict:
    last = result.rounds[-1]
    out = {
        "recipe": recipe_name,
        "strategy": result.strategy,
        "seed": result.config.seed,
        "config": asdict(result.config),
        "rounds": len(result.rounds),
        "pretrain_rounds": result.pretrain_rounds_run,
        "final_params_digest": params_digest(result),
        "final": {
            "test_loss": last.test_loss,
            "worst_group_accuracy": last.worst_group_accuracy,
            "per_group": {f"{y}_{a}": v for (y, a), v in sorted(last.per_group.items())},
        },
        "wall_time_s": result.wall_time_s,
    }
    if result.dht_source is not None:
        block: dict = {"source": result.dht_source}
        if result.dht_estimates is not None:
            block["clients"] = [
                {
                    "ci": e.triplet.ci,
                    "ai": e.triplet.ai,
                    "sc": e.triplet.sc,
                    "pivot": e.pivot,
                    "fallback": e.fallback,
                    "group_sizes": {str(y): list(gs) for y, gs in e.group_sizes.items()},
                }
                for e in result.dht_estimates
            ]
        out["dht_estimation"] = block
    return out


def write_summary(result: RunResult, recipe_name: str, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary_dict(result, recipe_name), indent=2) + "\n")


SWEEP_HEADER = ["recipe", "strategy", "seed", "final_worst_group_acc", "final_test_loss"]


def write_sweep_csv(rows: list[dict], path: str | Path) -> None:
    lines = [",".join(SWEEP_HEADER)]
    for row in rows:
        lines.append(
            ",".join(
                [
                    row["recipe"],
                    row["strategy"],
                    str(row["seed"]),
                    repr(row["final_worst_group_acc"]),
                    repr(row["final_test_loss"]),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_sweep_csv(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0].split(",") != SWEEP_HEADER:
        raise DataFormatError(f"{path}: expected header {','.join(SWEEP_HEADER)}")
    rows = []
    for line in lines[1:]:
        recipe, strategy, seed, wga, loss = line.split(",")
        rows.append(
            {
                "recipe": recipe,
                "strategy": strategy,
                "seed": int(seed),
                "final_worst_group_acc": float(wga),
                "final_test_loss": float(loss),
            }
        )
    return rows


def report_table(rows: list[dict]) -> str:
    """Mean and std of final worst-group accuracy, strategy by recipe."""
    import numpy as np

    recipes = sorted({r["recipe"] for r in rows})
    strategies = sorted({r["strategy"] for r in rows})
    width = max(len(s) for s in strategies + ["strategy"]) + 2
    cells = {}
    for s in strategies:
        for rec in recipes:
            vals = [
                r["final_worst_group_acc"]
                for r in rows
                if r["strategy"] == s and r["recipe"] == rec
            ]
            if vals:
                cells[(s, rec)] = f"{np.mean(vals):.3f}±{np.std(vals):.3f}"
            else:
                cells[(s, rec)] = "-"
    col_w = max([len(rec) for rec in recipes] + [13]) + 2
    lines = ["strategy".ljust(width) + "".join(rec.rjust(col_w) for rec in recipes)]
    for s in strategies:
        lines.append(s.ljust(width) + "".join(cells[(s, rec)].rjust(col_w) for rec in recipes))
    return "\n".join(lines)
