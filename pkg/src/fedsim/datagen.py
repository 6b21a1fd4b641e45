"""Synthetic federation builder.

Features live in two blocks: a task-intrinsic block that determines the
class label and an attribute block that determines the attribute label.
Each (class, attribute) cell draws from an isotropic Gaussian around the
concatenated block means, so the joint label distribution of every client
can be pinned exactly by an interaction-matrix recipe while the feature
noise stays controllable.

Federation recipes list one target interaction matrix per client plus a
group-balanced test set size; building a federation realises those counts
exactly and deterministically for a given seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .metrics import FederationMetrics, InteractionMatrix, federation_metrics
from .rng import stream

DEFAULT_DIM = 5
# The attribute block is deliberately easier to read than the task block
# (wider mean separation at lower noise): correlated clients then tempt
# overfit models into attribute shortcuts, which is the regime the
# heterogeneity estimation pipeline relies on.
DEFAULT_CLASS_MEAN_SCALE = 1.2
DEFAULT_ATTRIBUTE_MEAN_SCALE = 3.5
DEFAULT_NOISE_STD = 1.0
DEFAULT_ATTRIBUTE_NOISE_STD = 0.5


class RecipeError(ValueError):
    """Invalid federation recipe."""


class IntegrityError(RuntimeError):
    """Realized dataset disagrees with its recipe."""


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    y: int
    a: int


@dataclass
class ClientData:
    """Columnar sample store for one client: features[i] has labels y[i], a[i]."""

    features: np.ndarray  # (n, d) float64
    y: np.ndarray  # (n,) int64
    a: np.ndarray  # (n,) int64

    def __len__(self) -> int:
        return len(self.y)

    def samples(self):
        for i in range(len(self.y)):
            yield Sample(self.features[i], int(self.y[i]), int(self.a[i]))

    def interaction_matrix(self, n_classes: int, n_attributes: int) -> InteractionMatrix:
        counts = np.zeros((n_classes, n_attributes), dtype=np.int64)
        np.add.at(counts, (self.y, self.a), 1)
        return InteractionMatrix.from_counts(counts)


@dataclass(frozen=True)
class GeneratorSpec:
    """Gaussian feature model: one mean per class and per attribute."""

    class_means: np.ndarray  # (|Y|, d_y)
    attribute_means: np.ndarray  # (|A|, d_a)
    noise_std: float = DEFAULT_NOISE_STD
    attribute_noise_std: float = DEFAULT_ATTRIBUTE_NOISE_STD

    def __post_init__(self):
        for name, means in (("class", self.class_means), ("attribute", self.attribute_means)):
            if means.ndim != 2:
                raise ValueError(f"{name}_means must be 2-D")
            diffs = means[:, None, :] - means[None, :, :]
            dist = np.linalg.norm(diffs, axis=-1)
            np.fill_diagonal(dist, np.inf)
            if (dist == 0).any():
                raise ValueError(f"{name}_means must be pairwise distinct")
        if self.noise_std < 0 or self.attribute_noise_std < 0:
            raise ValueError("noise levels must be non-negative")

    @property
    def d_y(self) -> int:
        return self.class_means.shape[1]

    @property
    def d_a(self) -> int:
        return self.attribute_means.shape[1]

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.attribute_means.shape[0]

    @staticmethod
    def default(
        n_classes: int,
        n_attributes: int,
        d_y: int = DEFAULT_DIM,
        d_a: int = DEFAULT_DIM,
        noise_std: float = DEFAULT_NOISE_STD,
        attribute_noise_std: float = DEFAULT_ATTRIBUTE_NOISE_STD,
        class_mean_scale: float = DEFAULT_CLASS_MEAN_SCALE,
        attribute_mean_scale: float = DEFAULT_ATTRIBUTE_MEAN_SCALE,
    ) -> "GeneratorSpec":
        """One-hot scaled means; needs d >= number of labels."""
        if d_y < n_classes or d_a < n_attributes:
            raise ValueError("default one-hot means need d_y >= |Y| and d_a >= |A|")
        return GeneratorSpec(
            class_means=class_mean_scale * np.eye(n_classes, d_y),
            attribute_means=attribute_mean_scale * np.eye(n_attributes, d_a),
            noise_std=noise_std,
            attribute_noise_std=attribute_noise_std,
        )


@dataclass(frozen=True)
class FederationRecipe:
    name: str
    client_matrices: list[InteractionMatrix]
    test_per_group: int
    seed: int

    def __post_init__(self):
        if not self.client_matrices:
            raise RecipeError("recipe needs at least one client")
        first = self.client_matrices[0]
        bad = [
            f"client {k}: label set differs"
            for k, m in enumerate(self.client_matrices)
            if not m.same_labels(first)
        ]
        bad += [
            f"client {k}: empty matrix"
            for k, m in enumerate(self.client_matrices)
            if m.n == 0
        ]
        if self.test_per_group <= 0:
            bad.append("test_per_group must be positive")
        if bad:
            raise RecipeError("; ".join(bad))

    @property
    def n_clients(self) -> int:
        return len(self.client_matrices)

    @property
    def n_classes(self) -> int:
        return len(self.client_matrices[0].class_labels)

    @property
    def n_attributes(self) -> int:
        return len(self.client_matrices[0].attribute_labels)


@dataclass
class FederatedDataset:
    clients: list[ClientData]
    test: ClientData
    true_matrices: list[InteractionMatrix]
    n_classes: int
    n_attributes: int

    @property
    def n_clients(self) -> int:
        return len(self.clients)

    def client_sizes(self) -> list[int]:
        return [len(c) for c in self.clients]


def sample_point(spec: GeneratorSpec, y: int, a: int, rng: np.random.Generator) -> Sample:
    """Draw one sample of cell (y, a)."""
    if not 0 <= y < spec.n_classes:
        raise IndexError(f"class id {y} out of range")
    if not 0 <= a < spec.n_attributes:
        raise IndexError(f"attribute id {a} out of range")
    features = _draw_cell(spec, y, a, 1, rng)[0]
    return Sample(features=features, y=y, a=a)


def _draw_cell(spec: GeneratorSpec, y: int, a: int, count: int, rng: np.random.Generator) -> np.ndarray:
    eps_y = rng.normal(0.0, spec.noise_std, size=(count, spec.d_y))
    eps_a = rng.normal(0.0, spec.attribute_noise_std, size=(count, spec.d_a))
    return np.concatenate(
        [spec.class_means[y] + eps_y, spec.attribute_means[a] + eps_a], axis=1
    )


def _materialize(matrix: InteractionMatrix, spec: GeneratorSpec, rng: np.random.Generator) -> ClientData:
    """Realise counts exactly, iterating cells in row-major order."""
    blocks, ys, aas = [], [], []
    counts = matrix.counts
    for y in range(counts.shape[0]):
        for a in range(counts.shape[1]):
            c = int(counts[y, a])
            if c == 0:
                continue
            blocks.append(_draw_cell(spec, y, a, c, rng))
            ys.append(np.full(c, y, dtype=np.int64))
            aas.append(np.full(c, a, dtype=np.int64))
    return ClientData(
        features=np.concatenate(blocks, axis=0),
        y=np.concatenate(ys),
        a=np.concatenate(aas),
    )


def build_federation(recipe: FederationRecipe, spec: GeneratorSpec) -> FederatedDataset:
    """Materialise a federation; per-client RNG streams keyed by (seed, client id)."""
    if spec.n_classes != recipe.n_classes or spec.n_attributes != recipe.n_attributes:
        raise RecipeError(
            f"generator covers {spec.n_classes}x{spec.n_attributes} labels, "
            f"recipe needs {recipe.n_classes}x{recipe.n_attributes}"
        )
    clients = [
        _materialize(m, spec, stream(recipe.seed, rngmod.DATA, k))
        for k, m in enumerate(recipe.client_matrices)
    ]
    test_counts = np.full((recipe.n_classes, recipe.n_attributes), recipe.test_per_group)
    test = _materialize(
        InteractionMatrix.from_counts(test_counts), spec, stream(recipe.seed, rngmod.TEST)
    )
    return FederatedDataset(
        clients=clients,
        test=test,
        true_matrices=list(recipe.client_matrices),
        n_classes=recipe.n_classes,
        n_attributes=recipe.n_attributes,
    )


def verify_recipe(fd: FederatedDataset, recipe: FederationRecipe) -> FederationMetrics:
    """Recompute matrices from realised labels and check them against the recipe."""
    recomputed = [
        c.interaction_matrix(recipe.n_classes, recipe.n_attributes) for c in fd.clients
    ]
    for k, (got, want) in enumerate(zip(recomputed, recipe.client_matrices)):
        if not np.array_equal(got.counts, want.counts):
            bad = np.argwhere(got.counts != want.counts)[0]
            raise IntegrityError(
                f"client {k} cell (y={bad[0]}, a={bad[1]}): "
                f"realized {got.counts[bad[0], bad[1]]}, recipe {want.counts[bad[0], bad[1]]}"
            )
    return federation_metrics(recomputed)


# --- recipe file round-trip ------------------------------------------------

def recipe_to_dict(recipe: FederationRecipe, spec: GeneratorSpec) -> dict:
    return {
        "name": recipe.name,
        "seed": recipe.seed,
        "test_per_group": recipe.test_per_group,
        "clients": [
            {"id": k, "counts": m.counts.tolist()}
            for k, m in enumerate(recipe.client_matrices)
        ],
        "generator": {
            "d_y": spec.d_y,
            "d_a": spec.d_a,
            "class_means": spec.class_means.tolist(),
            "attribute_means": spec.attribute_means.tolist(),
            "noise_std": spec.noise_std,
            "attribute_noise_std": spec.attribute_noise_std,
        },
    }


def recipe_from_dict(obj: dict) -> tuple[FederationRecipe, GeneratorSpec]:
    try:
        clients = sorted(obj["clients"], key=lambda c: c["id"])
        matrices = [InteractionMatrix.from_counts(c["counts"]) for c in clients]
        recipe = FederationRecipe(
            name=obj["name"],
            client_matrices=matrices,
            test_per_group=int(obj["test_per_group"]),
            seed=int(obj["seed"]),
        )
        gen = dict(obj.get("generator", {}))
    except (KeyError, TypeError) as exc:
        raise RecipeError(f"malformed recipe: {exc}") from exc

    n_classes, n_attributes = recipe.n_classes, recipe.n_attributes
    noise_std = float(gen.get("noise_std", DEFAULT_NOISE_STD))
    attr_noise = float(gen.get("attribute_noise_std", DEFAULT_ATTRIBUTE_NOISE_STD))
    if "class_means" in gen or "attribute_means" in gen:
        spec = GeneratorSpec(
            class_means=np.asarray(gen["class_means"], dtype=np.float64),
            attribute_means=np.asarray(gen["attribute_means"], dtype=np.float64),
            noise_std=noise_std,
            attribute_noise_std=attr_noise,
        )
    else:
        spec = GeneratorSpec.default(
            n_classes,
            n_attributes,
            d_y=int(gen.get("d_y", DEFAULT_DIM)),
            d_a=int(gen.get("d_a", DEFAULT_DIM)),
            noise_std=noise_std,
            attribute_noise_std=attr_noise,
        )
    return recipe, spec


def save_recipe(path: str | Path, recipe: FederationRecipe, spec: GeneratorSpec) -> None:
    Path(path).write_text(json.dumps(recipe_to_dict(recipe, spec), indent=2) + "\n")


def load_recipe(path: str | Path) -> tuple[FederationRecipe, GeneratorSpec]:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise RecipeError(f"{path}: {exc}") from exc
    return recipe_from_dict(obj)


def export_csv(fd: FederatedDataset, path: str | Path) -> None:
    """One row per sample: client_id, y, a, f0..fD. Test rows use client_id -1."""
    d = fd.test.features.shape[1]
    header = "client_id,y,a," + ",".join(f"f{i}" for i in range(d))
    lines = [header]
    for k, c in enumerate(fd.clients):
        lines.extend(_csv_rows(k, c))
    lines.extend(_csv_rows(-1, fd.test))
    Path(path).write_text("\n".join(lines) + "\n")


def _csv_rows(client_id: int, data: ClientData) -> list[str]:
    return [
        f"{client_id},{data.y[i]},{data.a[i]},"
        + ",".join(repr(float(v)) for v in data.features[i])
        for i in range(len(data))
    ]


def load_csv(path: str | Path) -> tuple[dict[int, ClientData], ClientData | None]:
    """Inverse of export_csv: per-client data keyed by id, plus the test split."""
    text = Path(path).read_text().strip().splitlines()
    rows_by_client: dict[int, list[list[float]]] = {}
    for line in text[1:]:
        parts = line.split(",")
        rows_by_client.setdefault(int(parts[0]), []).append([float(v) for v in parts[1:]])
    out: dict[int, ClientData] = {}
    for cid, rows in rows_by_client.items():
        arr = np.asarray(rows)
        out[cid] = ClientData(
            features=arr[:, 2:], y=arr[:, 0].astype(np.int64), a=arr[:, 1].astype(np.int64)
        )
    test = out.pop(-1, None)
    return out, test
