"""Run configuration files.

A run config is JSON with a recipe reference (built-in profile name or
path to a recipe file), a selection strategy, optional federation
overrides and a seeds list. Unknown keys are rejected so typos fail
loudly. Minimal config: {"recipe": ..., "strategy": ...}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import recipes as builtin_recipes
from .datagen import FederationRecipe, GeneratorSpec, load_recipe
from .engine import ABLATIONS, FederationConfig, ConfigError
from .estimation import EstimationConfig
from .models import TrainConfig
from .selection import STRATEGIES

_TOP_KEYS = {
    "recipe",
    "strategy",
    "rounds",
    "clients_per_round",
    "aggregator",
    "momentum",
    "weight_mode",
    "local_epochs",
    "batch_size",
    "learning_rate",
    "prox_mu",
    "prox_unsquared",
    "ablation",
    "estimation",
    "powd_ascending",
    "hidden_units",
    "seeds",
    "snapshot_params",
}

_ESTIMATION_KEYS = {
    "pretrain_rounds",
    "biased_epochs",
    "biased_lr",
    "attr_epochs",
    "attr_lr",
    "gce_q",
    "batch_size",
}


@dataclass(frozen=True)
class RunConfig:
    recipe_ref: str
    recipe: FederationRecipe
    generator: GeneratorSpec
    federation: FederationConfig  # template; seed replaced per run
    seeds: tuple[int, ...] = (7,)
    snapshot_params: bool = False

    @property
    def estimation_pipeline_skipped(self) -> bool:
        """True when no client ever runs the estimation pipeline."""
        return self.federation.strategy != "feddiverse" or self.federation.ablation != "estimated"


def resolve_recipe(ref: str) -> tuple[FederationRecipe, GeneratorSpec]:
    if ref in builtin_recipes.BUILTIN:
        return builtin_recipes.get(ref)
    path = Path(ref)
    if not path.exists():
        raise ConfigError(f"recipe {ref!r} is neither a built-in profile nor an existing file")
    return load_recipe(path)


def _estimation_from(obj: dict) -> EstimationConfig:
    unknown = set(obj) - _ESTIMATION_KEYS
    if unknown:
        raise ConfigError(f"unknown estimation keys: {sorted(unknown)}")
    batch = int(obj.get("batch_size", 28))
    return EstimationConfig(
        pretrain_rounds=int(obj.get("pretrain_rounds", 1)),
        biased_train=TrainConfig(
            epochs=int(obj.get("biased_epochs", 50)),
            batch_size=batch,
            learning_rate=float(obj.get("biased_lr", 0.005)),
        ),
        attr_train=TrainConfig(
            epochs=int(obj.get("attr_epochs", 50)),
            batch_size=batch,
            learning_rate=float(obj.get("attr_lr", 0.005)),
        ),
        gce_q=float(obj.get("gce_q", 0.7)),
    )


def config_from_dict(obj: dict) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("recipe", "strategy"):
        if key not in obj:
            raise ConfigError(f"config is missing required key {key!r}")
    if obj["strategy"] not in STRATEGIES:
        raise ConfigError(f"strategy must be one of {STRATEGIES}")

    seeds = obj.get("seeds", [7])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a non-empty list of integers")

    ablation = obj.get("ablation")
    if ablation is None:
        # the oracle strategy implies its ablation mode; everything else
        # defaults to the realistic estimated pipeline
        ablation = "known_matrix_weights" if obj["strategy"] == "variance_oracle" else "estimated"
    if ablation not in ABLATIONS:
        raise ConfigError(f"ablation must be one of {ABLATIONS}")

    try:
        federation = FederationConfig(
            rounds=int(obj.get("rounds", 60)),
            clients_per_round=int(obj.get("clients_per_round", 9)),
            aggregator=str(obj.get("aggregator", "fedavgm")),
            momentum=float(obj.get("momentum", 0.95)),
            weight_mode=str(obj.get("weight_mode", "uniform")),
            local_epochs=int(obj.get("local_epochs", 1)),
            batch_size=int(obj.get("batch_size", 28)),
            learning_rate=float(obj.get("learning_rate", 0.001)),
            prox_mu=float(obj.get("prox_mu", 0.0)),
            prox_unsquared=bool(obj.get("prox_unsquared", False)),
            strategy=str(obj["strategy"]),
            ablation=ablation,
            estimation=_estimation_from(obj.get("estimation", {})),
            powd_ascending=bool(obj.get("powd_ascending", False)),
            hidden_units=int(obj.get("hidden_units", 16)),
            seed=int(seeds[0]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    recipe, generator = resolve_recipe(str(obj["recipe"]))
    if federation.clients_per_round > recipe.n_clients:
        raise ConfigError("clients_per_round exceeds federation size")
    return RunConfig(
        recipe_ref=str(obj["recipe"]),
        recipe=recipe,
        generator=generator,
        federation=federation,
        seeds=tuple(seeds),
        snapshot_params=bool(obj.get("snapshot_params", False)),
    )


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(obj)
