"""Figures over the simulator's result files.

Three figure kinds, all driven entirely by files the engine writes; the
only arithmetic here is mean, std and rolling mean.

    metric_bars      six grouped heterogeneity bars per recipe, from the
                     JSON records printed by `fedsim metrics`
    learning_curves  worst-group accuracy vs round per strategy, with a
                     mean +/- std band over seeds, from rounds.csv files
    sweep_table      mean +/- std table from sweep.csv

rounds.csv files must carry the `# schema=1` marker.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SCHEMA_LINE = "# schema=1"
METRIC_KEYS = ("gci", "cci", "gai", "cai", "gsc", "csc")
KINDS = ("metric_bars", "learning_curves", "sweep_table")

# fixed style so identical inputs render identical images
STYLE = {
    "figure.figsize": (8.0, 4.5),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


class SchemaError(ValueError):
    """An input file does not match the expected schema."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[str, ...]
    output: str
    smooth: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not self.inputs:
            raise ValueError("at least one input file is required")
        if self.smooth < 0:
            raise ValueError("smoothing window must be non-negative")


# --- input readers ----------------------------------------------------------

def read_rounds_csv(path: str | Path) -> dict:
    """Parse one rounds.csv into {strategy, rounds, worst_group}."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0].strip() != SCHEMA_LINE:
        raise SchemaError(f"{path}: missing '{SCHEMA_LINE}' marker line")
    header = lines[1].split(",")
    for col in ("round", "strategy", "worst_group_acc"):
        if col not in header:
            raise SchemaError(f"{path}: missing column '{col}'")
    idx = {col: header.index(col) for col in header}
    rounds, worst, strategy = [], [], None
    for line in lines[2:]:
        parts = line.split(",")
        rounds.append(int(parts[idx["round"]]))
        worst.append(float(parts[idx["worst_group_acc"]]))
        strategy = parts[idx["strategy"]]
    if strategy is None:
        raise SchemaError(f"{path}: no data rows")
    return {"strategy": strategy, "rounds": np.array(rounds), "worst": np.array(worst)}


def read_metrics_json(path: str | Path) -> dict:
    obj = json.loads(Path(path).read_text())
    for key in METRIC_KEYS:
        if key not in obj:
            raise SchemaError(f"{path}: missing metric '{key}'")
    obj.setdefault("name", Path(path).stem)
    return obj


def read_sweep_csv(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",") if lines else []
    for col in ("recipe", "strategy", "seed", "final_worst_group_acc"):
        if col not in header:
            raise SchemaError(f"{path}: missing column '{col}'")
    idx = {col: header.index(col) for col in header}
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        rows.append(
            {
                "recipe": parts[idx["recipe"]],
                "strategy": parts[idx["strategy"]],
                "seed": int(parts[idx["seed"]]),
                "final_worst_group_acc": float(parts[idx["final_worst_group_acc"]]),
            }
        )
    return rows


# --- the only arithmetic ------------------------------------------------------

def rolling_mean(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing rolling mean; windows 0 and 1 are the identity."""
    if window <= 1:
        return np.asarray(values, dtype=float).copy()
    out = np.empty(len(values), dtype=float)
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out[i] = float(np.mean(values[lo : i + 1]))
    return out


def curve_data(inputs, smooth: int) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per-strategy (rounds, mean, std) across seed files."""
    by_strategy: dict[str, list[dict]] = {}
    for path in inputs:
        run = read_rounds_csv(path)
        by_strategy.setdefault(run["strategy"], []).append(run)
    out = {}
    for strategy, runs in sorted(by_strategy.items()):
        rounds = runs[0]["rounds"]
        for run in runs[1:]:
            if not np.array_equal(run["rounds"], rounds):
                raise SchemaError(f"round axes disagree across files for '{strategy}'")
        curves = np.array([rolling_mean(run["worst"], smooth) for run in runs])
        out[strategy] = (rounds, curves.mean(axis=0), curves.std(axis=0))
    return out


# --- renderers ----------------------------------------------------------------

def render(spec: FigureSpec) -> Path:
    with plt.rc_context(STYLE):
        fig = plt.figure()
        try:
            if spec.kind == "metric_bars":
                _metric_bars(fig, spec)
            elif spec.kind == "learning_curves":
                _learning_curves(fig, spec)
            else:
                _sweep_table(fig, spec)
            out = Path(spec.output)
            out.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(out)
        finally:
            plt.close(fig)
    return Path(spec.output)


def _metric_bars(fig, spec: FigureSpec) -> None:
    records = [read_metrics_json(p) for p in spec.inputs]
    ax = fig.add_subplot(111)
    n_groups = len(records)
    width = 0.8 / len(METRIC_KEYS)
    x = np.arange(n_groups)
    for j, key in enumerate(METRIC_KEYS):
        vals = [r[key] for r in records]
        ax.bar(x + j * width, vals, width=width, label=key.upper())
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels([r["name"] for r in records])
    ax.set_ylim(0, 1)
    ax.set_ylabel("metric value")
    ax.set_title("federation heterogeneity metrics")
    ax.legend(ncol=6, fontsize=7)


def _learning_curves(fig, spec: FigureSpec) -> None:
    ax = fig.add_subplot(111)
    for strategy, (rounds, mean, std) in curve_data(spec.inputs, spec.smooth).items():
        ax.plot(rounds, mean, label=strategy)
        ax.fill_between(rounds, mean - std, mean + std, alpha=0.2)
    ax.set_xlabel("round")
    ax.set_ylabel("worst-group accuracy")
    ax.set_title(f"worst-group accuracy (smoothing window {max(spec.smooth, 1)})")
    ax.legend()


def _sweep_table(fig, spec: FigureSpec) -> None:
    rows = []
    for path in spec.inputs:
        rows.extend(read_sweep_csv(path))
    recipes = sorted({r["recipe"] for r in rows})
    strategies = sorted({r["strategy"] for r in rows})
    cells = []
    for s in strategies:
        line = []
        for rec in recipes:
            vals = [
                r["final_worst_group_acc"]
                for r in rows
                if r["strategy"] == s and r["recipe"] == rec
            ]
            line.append(f"{np.mean(vals):.3f}±{np.std(vals):.3f}" if vals else "-")
        cells.append(line)
    ax = fig.add_subplot(111)
    ax.axis("off")
    table = ax.table(
        cellText=cells, rowLabels=strategies, colLabels=recipes, loc="center"
    )
    table.scale(1, 1.4)
    ax.set_title("final worst-group accuracy (mean ± std)")
