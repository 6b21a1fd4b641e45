"""Round-based federation orchestrator.

One round: select clients, train local copies of the global model, merge
them (plain weighted mean, server momentum, or step-normalized updates
with momentum), evaluate on the group-balanced test set.

Heterogeneity-aware strategies get their inputs before the first round:
an optional pre-training phase with full participation, then either the
per-client estimation pipeline or, in the ablation modes, the true
interaction matrices.

Determinism contract: every stochastic stage draws from a stream keyed by
(seed, stage, round, client), local training of selected clients may fan
out to a thread pool (FEDSIM_THREADS) without changing results, and
aggregation always reduces in ascending client order.
"""

from __future__ import annotations

import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .datagen import ClientData, FederatedDataset
from .estimation import ClientEstimate, DhtMatrix, EstimationConfig, client_dht
from .models import (
    LossSpec,
    ModelParams,
    TrainConfig,
    init_params,
    loss_and_grad,
    mlp_shapes,
    predict,
    sgd_train,
)
from .rng import derive, stream
from .selection import (
    RoundContext,
    RoundFeedback,
    Selector,
    make_selector,
    variance_min_weights,
)

AGGREGATORS = ("fedavg", "fedavgm", "fednova")
WEIGHT_MODES = ("uniform", "by_samples")
ABLATIONS = ("estimated", "known_dht", "known_matrix_weights")


class ConfigError(ValueError):
    """Invalid federation configuration."""


@dataclass(frozen=True)
class FederationConfig:
    rounds: int = 60
    clients_per_round: int = 9
    aggregator: str = "fedavgm"
    momentum: float = 0.95
    weight_mode: str = "uniform"
    local_epochs: int = 1
    batch_size: int = 28
    learning_rate: float = 0.001
    prox_mu: float = 0.0
    prox_unsquared: bool = False
    strategy: str = "feddiverse"
    ablation: str = "estimated"
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    powd_ascending: bool = False
    hidden_units: int = 16
    seed: int = 7

    def __post_init__(self):
        if self.rounds <= 0 or self.clients_per_round <= 0:
            raise ConfigError("rounds and clients_per_round must be positive")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"aggregator must be one of {AGGREGATORS}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"weight_mode must be one of {WEIGHT_MODES}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}")
        if self.local_epochs < 0 or self.prox_mu < 0:
            raise ConfigError("local_epochs and prox_mu must be non-negative")
        if (self.strategy == "variance_oracle") != (self.ablation == "known_matrix_weights"):
            raise ConfigError(
                "strategy variance_oracle and ablation known_matrix_weights imply each other"
            )

    def validate_against(self, fd: FederatedDataset) -> None:
        if self.clients_per_round > fd.n_clients:
            raise ConfigError("clients_per_round exceeds federation size")

    def client_loss_spec(self, anchor: ModelParams) -> LossSpec:
        if self.prox_mu > 0:
            return LossSpec(
                "proximal",
                prox_mu=self.prox_mu,
                anchor=anchor,
                prox_unsquared=self.prox_unsquared,
            )
        return LossSpec("cross_entropy")


@dataclass
class MomentumState:
    velocity: np.ndarray | None = None


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    params: ModelParams
    n_samples: int
    steps: int


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    selected: list[int]
    steps: dict[int, int]
    test_loss: float
    per_group: dict[tuple[int, int], float]
    worst_group_accuracy: float


@dataclass
class RunResult:
    config: FederationConfig
    strategy: str
    rounds: list[RoundRecord]
    final_params: ModelParams
    dht_source: str | None
    dht_estimates: list[ClientEstimate] | None
    pretrain_rounds_run: int
    wall_time_s: float

    @property
    def final_worst_group(self) -> float:
        return self.rounds[-1].worst_group_accuracy


def aggregate(
    global_params: ModelParams,
    updates: list[ClientUpdate],
    aggregator: str,
    momentum: float,
    state: MomentumState,
    weight_mode: str = "uniform",
) -> tuple[ModelParams, MomentumState]:
    """Merge client updates into new global parameters.

    fedavg    weighted mean of client parameters
    fedavgm   server momentum over the pseudo-gradient of that mean
    fednova   per-client updates normalized by their step counts, weighted
              mean rescaled by the effective step count, with the same
              momentum buffer applied to the normalized update
    """
    if not updates:
        raise ValueError("no client updates to aggregate")
    updates = sorted(updates, key=lambda u: u.client_id)
    if weight_mode == "by_samples":
        raw = np.array([u.n_samples for u in updates], dtype=np.float64)
    else:
        raw = np.ones(len(updates))
    if raw.sum() <= 0:
        raise ValueError("total aggregation weight is zero")
    p = raw / raw.sum()
    stacked = np.array([u.params.values for u in updates])
    # difference form: aggregating unchanged parameters is exactly a no-op
    mean_shift = p @ (stacked - global_params.values[None, :])

    if aggregator == "fedavg":
        return global_params.with_values(global_params.values + mean_shift), state

    if aggregator == "fedavgm":
        delta = -mean_shift
        velocity = delta if state.velocity is None else momentum * state.velocity + delta
        return global_params.with_values(global_params.values - velocity), MomentumState(velocity)

    if aggregator == "fednova":
        taus = np.array([u.steps for u in updates], dtype=np.float64)
        diffs = global_params.values[None, :] - stacked
        normalized = np.divide(
            diffs, taus[:, None], out=np.zeros_like(diffs), where=taus[:, None] > 0
        )
        agg_d = p @ normalized
        tau_eff = float(p @ taus)
        velocity = agg_d if state.velocity is None else momentum * state.velocity + agg_d
        new_values = global_params.values - tau_eff * velocity
        return global_params.with_values(new_values), MomentumState(velocity)

    raise ValueError(f"unknown aggregator {aggregator!r}")


def worst_group_accuracy(
    params: ModelParams, test: ClientData, n_classes: int, n_attributes: int
) -> tuple[float, dict[tuple[int, int], float]]:
    """Minimum per-(class, attribute) accuracy on the test set."""
    pred = predict(params, test.features)
    per_group: dict[tuple[int, int], float] = {}
    for y in range(n_classes):
        for a in range(n_attributes):
            mask = (test.y == y) & (test.a == a)
            if not mask.any():
                warnings.warn(f"empty test group (y={y}, a={a}) excluded", stacklevel=2)
                continue
            per_group[(y, a)] = float((pred[mask] == y).mean())
    return min(per_group.values()), per_group


def _n_workers() -> int:
    try:
        return max(1, int(os.environ.get("FEDSIM_THREADS", "1")))
    except ValueError:
        return 1


def _map_clients(fn, items):
    workers = _n_workers()
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class Federation:
    """Mutable run state; ``run_federation`` is the one-call wrapper."""

    def __init__(self, cfg: FederationConfig, fd: FederatedDataset):
        cfg.validate_against(fd)
        self.cfg = cfg
        self.fd = fd
        self.global_params = init_params(
            mlp_shapes(fd.test.features.shape[1], fd.n_classes, cfg.hidden_units),
            stream(cfg.seed, rngmod.INIT),
        )
        self.momentum_state = MomentumState()
        self.records: list[RoundRecord] = []
        self.selector: Selector | None = None
        self.dht_source: str | None = None
        self.dht_estimates: list[ClientEstimate] | None = None
        self.pretrain_rounds_run = 0

    # --- setup ---------------------------------------------------------

    def prepare_selector(self) -> None:
        cfg = self.cfg
        weights = None
        if cfg.strategy == "variance_oracle":
            weights = variance_min_weights(self.fd.true_matrices)
        self.selector = make_selector(
            cfg.strategy,
            self.fd.n_clients,
            seed=derive(cfg.seed, rngmod.SELECT),
            powd_ascending=cfg.powd_ascending,
            weights=weights,
        )

        needs_heterogeneity = self.selector.wants_dht or cfg.strategy == "variance_oracle"
        if not needs_heterogeneity:
            return
        self._pretrain(cfg.estimation.pretrain_rounds)
        if self.selector.wants_dht:
            if cfg.ablation == "known_dht":
                dht = DhtMatrix.from_matrices(self.fd.true_matrices)
                self.dht_source = "known"
            else:
                self.dht_estimates = self._estimate_clients()
                dht = DhtMatrix.from_triplets([e.triplet for e in self.dht_estimates])
                self.dht_source = "estimated"
            self.selector.set_dht(dht)

    def _pretrain(self, rounds: int) -> None:
        """Full-participation FedAvg warm-up shared by the heterogeneity-aware
        strategies; baselines skip it (their selection needs no estimate)."""
        cfg = self.cfg
        for r in range(rounds):
            updates = self._train_clients(
                list(range(self.fd.n_clients)), rngmod.PRETRAIN, r
            )
            self.global_params, _ = aggregate(
                self.global_params,
                updates,
                "fedavg",
                0.0,
                MomentumState(),
                cfg.weight_mode,
            )
            self.pretrain_rounds_run += 1

    def _estimate_clients(self) -> list[ClientEstimate]:
        cfg = self.cfg

        def one(k: int) -> ClientEstimate:
            return client_dht(
                self.fd.clients[k],
                self.global_params,
                self.fd.n_classes,
                cfg.estimation,
                cfg.seed,
                k,
            )

        return _map_clients(one, list(range(self.fd.n_clients)))

    # --- per-round machinery --------------------------------------------

    def _train_clients(self, ids: list[int], stage: int, round_index: int) -> list[ClientUpdate]:
        cfg = self.cfg
        anchor = self.global_params
        loss_spec = cfg.client_loss_spec(anchor)

        def one(k: int) -> ClientUpdate:
            data = self.fd.clients[k]
            train_cfg = TrainConfig(
                epochs=cfg.local_epochs,
                batch_size=cfg.batch_size,
                learning_rate=cfg.learning_rate,
                seed=derive(cfg.seed, stage, round_index, k),
            )
            fit = sgd_train(anchor, data.features, data.y, train_cfg, loss_spec)
            return ClientUpdate(k, fit.params, len(data), fit.steps)

        return _map_clients(one, ids)

    def _client_loss(self, k: int) -> float:
        data = self.fd.clients[k]
        loss, _ = loss_and_grad(
            self.global_params, data.features, data.y, LossSpec("cross_entropy")
        )
        return loss

    def run_round(self) -> RoundRecord:
        if self.selector is None:
            raise RuntimeError("call prepare_selector() before running rounds")
        cfg = self.cfg
        t = len(self.records) + 1
        ctx = RoundContext(
            round_index=t,
            rng=stream(cfg.seed, rngmod.SELECT, t),
            client_loss=self._client_loss,
        )
        selected = self.selector.select(cfg.clients_per_round, ctx)

        before = self.global_params.values
        updates = self._train_clients(selected, rngmod.TRAIN, t)
        self.global_params, self.momentum_state = aggregate(
            self.global_params,
            updates,
            cfg.aggregator,
            cfg.momentum,
            self.momentum_state,
            cfg.weight_mode,
        )

        feedback = RoundFeedback(
            round_index=t,
            selected=list(selected),
            client_updates={u.client_id: u.params.values - before for u in updates},
            aggregate_update=self.global_params.values - before,
            all_client_updates=self._round1_probe(t) if self._wants_probe(t) else None,
        )
        self.selector.observe(feedback)

        record = self._evaluate(t, selected, updates)
        self.records.append(record)
        return record

    def _wants_probe(self, t: int) -> bool:
        return t == 1 and self.selector.wants_round1_probe

    def _round1_probe(self, t: int) -> dict[int, np.ndarray]:
        """Every client computes one local update from the current global
        parameters; only cluster-based selection pays this cost."""
        before = self.global_params.values
        updates = self._train_clients(list(range(self.fd.n_clients)), rngmod.PROBE, t)
        return {u.client_id: u.params.values - before for u in updates}

    def _evaluate(self, t: int, selected: list[int], updates: list[ClientUpdate]) -> RoundRecord:
        test = self.fd.test
        loss, _ = loss_and_grad(
            self.global_params, test.features, test.y, LossSpec("cross_entropy")
        )
        worst, per_group = worst_group_accuracy(
            self.global_params, test, self.fd.n_classes, self.fd.n_attributes
        )
        return RoundRecord(
            round_index=t,
            selected=list(selected),
            steps={u.client_id: u.steps for u in updates},
            test_loss=loss,
            per_group=per_group,
            worst_group_accuracy=worst,
        )


def run_federation(cfg: FederationConfig, fd: FederatedDataset) -> RunResult:
    start = time.perf_counter()
    fed = Federation(cfg, fd)
    fed.prepare_selector()
    for _ in range(cfg.rounds):
        fed.run_round()
    return RunResult(
        config=cfg,
        strategy=cfg.strategy,
        rounds=fed.records,
        final_params=fed.global_params,
        dht_source=fed.dht_source,
        dht_estimates=fed.dht_estimates,
        pretrain_rounds_run=fed.pretrain_rounds_run,
        wall_time_s=time.perf_counter() - start,
    )
