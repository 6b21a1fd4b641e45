"""Federated-learning simulator with diversity-driven client selection."""

from .datagen import (
    ClientData,
    FederatedDataset,
    FederationRecipe,
    GeneratorSpec,
    build_federation,
    load_recipe,
    save_recipe,
)
from .engine import FederationConfig, RunResult, aggregate, run_federation, worst_group_accuracy
from .estimation import DhtMatrix, EstimationConfig, client_dht
from .metrics import (
    FederationMetrics,
    HeterogeneityTriplet,
    InteractionMatrix,
    dht_from_matrix,
    entropy,
    federation_metrics,
    mutual_information,
)
from .models import LossSpec, ModelParams, TrainConfig, sgd_train
from .selection import feddiverse_select, make_selector, variance_min_weights

__version__ = "0.1.0"

__all__ = [
    "ClientData",
    "DhtMatrix",
    "EstimationConfig",
    "FederatedDataset",
    "FederationConfig",
    "FederationMetrics",
    "FederationRecipe",
    "GeneratorSpec",
    "HeterogeneityTriplet",
    "InteractionMatrix",
    "LossSpec",
    "ModelParams",
    "RunResult",
    "TrainConfig",
    "aggregate",
    "build_federation",
    "client_dht",
    "dht_from_matrix",
    "entropy",
    "feddiverse_select",
    "federation_metrics",
    "load_recipe",
    "make_selector",
    "mutual_information",
    "run_federation",
    "save_recipe",
    "sgd_train",
    "variance_min_weights",
    "worst_group_accuracy",
]
