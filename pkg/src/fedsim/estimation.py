"""Client-side heterogeneity estimation without attribute labels.

Each client reconstructs an approximate interaction matrix from raw
samples in three steps, then reduces it to a heterogeneity triplet:

1. start from globally pre-trained parameters (the orchestrator runs the
   pre-training rounds; this module only consumes the result);
2. overfit a biased model with generalized cross-entropy, whose errors
   expose the per-class minority groups (one-vs-rest heads when there
   are more than two classes);
3. pick the pivot class with the most balanced majority/minority split,
   pseudo-label its samples by group membership, train an attribute
   classifier on them, and count (true class, predicted attribute) pairs
   over the whole client dataset.

Only the resulting triplet leaves the client; the estimated matrix and
group sizes stay in local diagnostics. The estimate runs once per
federation, not per round.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .datagen import ClientData
from .metrics import HeterogeneityTriplet, InteractionMatrix, dht_from_matrix, entropy
from .models import (
    LossSpec,
    ModelParams,
    TrainConfig,
    init_params,
    predict,
    sgd_train,
)

# sub-stage tags under rng.ESTIMATE
_BIASED = 0
_HEAD = 1
_ATTR = 2

# attribute classifier must fit its own pseudo-labels this well WITHIN each
# group, otherwise the estimate degrades to "no attribute structure
# detected"; per-group accuracy rules out constant predictors on imbalanced
# pivot sets
MIN_ATTR_GROUP_FIT = 0.75


@dataclass(frozen=True)
class EstimationConfig:
    """Knobs of the one-shot estimation pass.

    ``pretrain_rounds`` = 0 means estimation starts from the initial
    global parameters. The biased schedule deliberately overtrains; both
    trainers stop early at perfect training accuracy.
    """

    pretrain_rounds: int = 1
    biased_train: TrainConfig = field(
        default_factory=lambda: TrainConfig(epochs=50, batch_size=28, learning_rate=0.005)
    )
    attr_train: TrainConfig = field(
        default_factory=lambda: TrainConfig(epochs=50, batch_size=28, learning_rate=0.005)
    )
    gce_q: float = 0.7

    def __post_init__(self):
        if self.pretrain_rounds < 0:
            raise ValueError("pretrain_rounds must be >= 0")


@dataclass(frozen=True)
class BiasedModels:
    """One joint binary classifier, or one one-vs-rest head per class."""

    joint: ModelParams | None
    per_class: dict[int, ModelParams]

    @property
    def n_classifiers(self) -> int:
        return 1 if self.joint is not None else len(self.per_class)


@dataclass(frozen=True)
class GroupAssignment:
    """Per-class partition of sample indices into predicted majority
    (correctly classified) and minority (misclassified) groups."""

    majority: dict[int, np.ndarray]
    minority: dict[int, np.ndarray]

    def classes(self) -> list[int]:
        return sorted(self.majority)

    def sizes(self) -> dict[int, tuple[int, int]]:
        return {y: (len(self.majority[y]), len(self.minority[y])) for y in self.classes()}


@dataclass(frozen=True)
class ClientEstimate:
    triplet: HeterogeneityTriplet
    matrix: InteractionMatrix | None  # never shared with the coordinator
    pivot: int | None
    group_sizes: dict[int, tuple[int, int]]
    fallback: str | None  # reason, when the pipeline degenerated


@dataclass(frozen=True)
class DhtMatrix:
    """Triplets of all clients; row k belongs to client k."""

    values: np.ndarray  # (K, 3)

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != 3:
            raise ValueError("expected a (K, 3) triplet table")
        if ((self.values < -1e-12) | (self.values > 1 + 1e-12)).any():
            raise ValueError("triplet entries must lie in [0, 1]")
        # remove float-cancellation dust so downstream probabilities stay valid
        object.__setattr__(self, "values", np.clip(self.values, 0.0, 1.0))

    @property
    def n_clients(self) -> int:
        return self.values.shape[0]

    @staticmethod
    def from_triplets(triplets: list[HeterogeneityTriplet]) -> "DhtMatrix":
        return DhtMatrix(np.array([t.as_array() for t in triplets]))

    @staticmethod
    def from_matrices(matrices: list[InteractionMatrix]) -> "DhtMatrix":
        return DhtMatrix.from_triplets([dht_from_matrix(m) for m in matrices])


def fit_biased_models(
    global_params: ModelParams,
    data: ClientData,
    n_classes: int,
    cfg: EstimationConfig,
    seed: int,
    client_id: int,
) -> BiasedModels:
    """Overfit GCE classifiers from the pre-trained parameters."""
    gce = LossSpec("gce", gce_q=cfg.gce_q)
    if n_classes == 2:
        train_cfg = replace(
            cfg.biased_train, seed=rngmod.derive(seed, rngmod.ESTIMATE, client_id, _BIASED)
        )
        fit = sgd_train(global_params, data.features, data.y, train_cfg, gce, early_stop_acc=1.0)
        return BiasedModels(joint=fit.params, per_class={})

    per_class = {}
    for y in range(n_classes):
        head_rng = rngmod.stream(seed, rngmod.ESTIMATE, client_id, _HEAD, y)
        params = _with_binary_head(global_params, head_rng)
        train_cfg = replace(
            cfg.biased_train, seed=rngmod.derive(seed, rngmod.ESTIMATE, client_id, _BIASED, y)
        )
        labels = (data.y == y).astype(np.int64)
        fit = sgd_train(params, data.features, labels, train_cfg, gce, early_stop_acc=1.0)
        per_class[y] = fit.params
    return BiasedModels(joint=None, per_class=per_class)


def _with_binary_head(global_params: ModelParams, rng: np.random.Generator) -> ModelParams:
    """Keep the trunk, replace the output layer with a fresh 2-way head."""
    trunk_shapes = global_params.layer_shapes[:-1]
    hidden = global_params.layer_shapes[-1][0]
    shapes = trunk_shapes + ((hidden, 2),)
    trunk_size = sum(i * o + o for i, o in trunk_shapes)
    head = init_params(((hidden, 2),), rng)
    return ModelParams(
        layer_shapes=shapes,
        values=np.concatenate([global_params.values[:trunk_size], head.values]),
    )


def split_groups(models: BiasedModels, data: ClientData) -> GroupAssignment:
    """Correctly predicted samples form the majority group of their class."""
    majority: dict[int, np.ndarray] = {}
    minority: dict[int, np.ndarray] = {}
    if models.joint is not None:
        pred = predict(models.joint, data.features)
        for y in np.unique(data.y):
            idx = np.flatnonzero(data.y == y)
            correct = pred[idx] == y
            majority[int(y)] = idx[correct]
            minority[int(y)] = idx[~correct]
    else:
        for y, model in models.per_class.items():
            idx = np.flatnonzero(data.y == y)
            if len(idx) == 0:
                continue
            correct = predict(model, data.features[idx]) == 1
            majority[int(y)] = idx[correct]
            minority[int(y)] = idx[~correct]
    return GroupAssignment(majority=majority, minority=minority)


def pick_pivot_class(ga: GroupAssignment) -> int:
    """Class with the smallest |majority| - |minority| gap, lowest id on ties."""
    classes = ga.classes()
    if not classes:
        raise ValueError("no classes present")
    return min(classes, key=lambda y: (abs(len(ga.majority[y]) - len(ga.minority[y])), y))


def estimate_interaction_matrix(
    data: ClientData,
    ga: GroupAssignment,
    pivot: int,
    n_classes: int,
    cfg: EstimationConfig,
    seed: int,
    client_id: int,
) -> tuple[InteractionMatrix, str | None]:
    """Pseudo-label the pivot class by group, train the attribute
    classifier, and count (class, predicted attribute) pairs.

    Returns the estimated matrix and a fallback reason (or None). When the
    pivot has a single group, no classifier is trainable: every sample is
    assigned the first attribute column and attribute imbalance saturates.
    """
    maj, mino = ga.majority[pivot], ga.minority[pivot]
    counts = np.zeros((n_classes, 2), dtype=np.int64)
    class_counts = np.bincount(data.y, minlength=n_classes)
    if len(mino) == 0:
        # nothing was misclassified: consistent with a single-attribute
        # client, so attribute imbalance saturates
        np.add.at(counts, (data.y, 0), 1)
        return InteractionMatrix.from_counts(counts), "single-group pivot"
    if len(maj) == 0:
        # the biased model failed on the whole pivot class (majority-class
        # collapse); its errors say nothing about attributes
        counts[:, 0] = (class_counts + 1) // 2
        counts[:, 1] = class_counts // 2
        return InteractionMatrix.from_counts(counts), "collapsed biased model"

    pivot_idx = np.concatenate([maj, mino])
    pseudo = np.concatenate([np.ones(len(maj), np.int64), np.zeros(len(mino), np.int64)])

    # standardise by the pivot-set statistics so that coordinates constant
    # within the pivot class (e.g. its own class signature) carry no trained
    # weight and the classifier transfers to the other classes
    train_x = data.features[pivot_idx]
    mean = train_x.mean(axis=0)
    std = train_x.std(axis=0)
    std[std < 1e-9] = 1.0

    head_rng = rngmod.stream(seed, rngmod.ESTIMATE, client_id, _ATTR)
    classifier = _zero_entry_mlp(data.features.shape[1], head_rng)
    train_cfg = replace(
        cfg.attr_train, seed=rngmod.derive(seed, rngmod.ESTIMATE, client_id, _ATTR)
    )
    fit = sgd_train(
        classifier,
        (train_x - mean) / std,
        pseudo,
        train_cfg,
        LossSpec("cross_entropy"),
        early_stop_acc=1.0,
    )

    # self-consistency: a classifier that cannot reproduce its own pseudo
    # labels in both groups found no attribute boundary, and its output on
    # the rest of the data would be noise; report attribute-uninformative
    # counts instead
    pred_fit = predict(fit.params, (train_x - mean) / std)
    maj_fit = (pred_fit[: len(maj)] == 1).mean()
    min_fit = (pred_fit[len(maj) :] == 0).mean()
    if min(maj_fit, min_fit) < MIN_ATTR_GROUP_FIT:
        counts[:, 0] = (class_counts + 1) // 2
        counts[:, 1] = class_counts // 2
        return InteractionMatrix.from_counts(counts), "attribute signal unlearnable"

    predicted_attr = predict(fit.params, (data.features - mean) / std)
    np.add.at(counts, (data.y, predicted_attr), 1)
    return InteractionMatrix.from_counts(counts), None


def _zero_entry_mlp(n_inputs: int, rng: np.random.Generator, hidden: int = 16) -> ModelParams:
    """Zero first layer, random second: inputs that never vary during
    training then keep exactly zero influence on predictions."""
    head = init_params(((hidden, 2),), rng)
    return ModelParams(
        layer_shapes=((n_inputs, hidden), (hidden, 2)),
        values=np.concatenate([np.zeros(n_inputs * hidden + hidden), head.values]),
    )


def client_dht(
    data: ClientData,
    global_params: ModelParams,
    n_classes: int,
    cfg: EstimationConfig,
    seed: int,
    client_id: int,
) -> ClientEstimate:
    """Full per-client pipeline; degrades to class-marginal information
    instead of blocking the federation."""
    class_counts = np.bincount(data.y, minlength=n_classes)
    try:
        models = fit_biased_models(global_params, data, n_classes, cfg, seed, client_id)
        ga = split_groups(models, data)
        pivot = pick_pivot_class(ga)
        matrix, fallback = estimate_interaction_matrix(
            data, ga, pivot, n_classes, cfg, seed, client_id
        )
        return ClientEstimate(
            triplet=dht_from_matrix(matrix),
            matrix=matrix,
            pivot=pivot,
            group_sizes=ga.sizes(),
            fallback=fallback,
        )
    except Exception as exc:  # noqa: BLE001 - estimation must not kill the run
        ci = 1.0 if n_classes == 1 else 1.0 - entropy(class_counts) / np.log(n_classes)
        return ClientEstimate(
            triplet=HeterogeneityTriplet(ci=float(ci), ai=1.0, sc=0.0),
            matrix=None,
            pivot=None,
            group_sizes={},
            fallback=f"pipeline error: {exc}",
        )
