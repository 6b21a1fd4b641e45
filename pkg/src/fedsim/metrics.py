"""Statistical data-heterogeneity metrics over class/attribute count tables.

A dataset with class labels Y and attribute labels A is summarised by its
interaction matrix: the |Y| x |A| table of joint sample counts. Three
normalised metrics are derived from it, each in [0, 1]:

    ci = 1 - H(Y) / ln|Y|           class imbalance
    ai = 1 - H(A) / ln|A|           attribute imbalance
    sc = 2 I(Y;A) / (H(Y) + H(A))   spurious correlation

with H the empirical entropy (nats) and I the mutual information. For a
federation, global metrics are computed on the element-wise sum of the
client matrices, client metrics as the unweighted mean of per-client
values.

Degenerate conventions (the raw formulas are 0/0 there): a single class
gives ci = 1, a single attribute gives ai = 1, and H(Y) + H(A) = 0 gives
sc = 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "InteractionMatrix",
    "HeterogeneityTriplet",
    "FederationMetrics",
    "entropy",
    "mutual_information",
    "dht_from_matrix",
    "federation_metrics",
]


class EmptyDistributionError(ValueError):
    """Raised when a metric is asked for on an all-zero count table."""


class LabelMismatchError(ValueError):
    """Raised when matrices with different label sets are combined."""


@dataclass(frozen=True)
class InteractionMatrix:
    """Non-normalised joint distribution of classes and attributes.

    ``counts[y][a]`` is the number of samples with class ``class_labels[y]``
    and attribute ``attribute_labels[a]``. Row sums are the class marginal
    counts, column sums the attribute marginal counts.
    """

    counts: np.ndarray
    class_labels: tuple[int, ...]
    attribute_labels: tuple[int, ...]

    @staticmethod
    def from_counts(counts) -> "InteractionMatrix":
        """Build from any 2-D array-like, labelling rows/columns 0..n-1."""
        arr = np.asarray(counts, dtype=np.int64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"counts must be a non-empty 2-D table, got shape {arr.shape}")
        if (arr < 0).any():
            raise ValueError("counts must be non-negative")
        return InteractionMatrix(
            counts=arr,
            class_labels=tuple(range(arr.shape[0])),
            attribute_labels=tuple(range(arr.shape[1])),
        )

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def class_counts(self) -> np.ndarray:
        """Marginal class counts (row sums)."""
        return self.counts.sum(axis=1)

    @property
    def attribute_counts(self) -> np.ndarray:
        """Marginal attribute counts (column sums)."""
        return self.counts.sum(axis=0)

    def same_labels(self, other: "InteractionMatrix") -> bool:
        return (
            self.class_labels == other.class_labels
            and self.attribute_labels == other.attribute_labels
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "classes": list(self.class_labels),
                "attributes": list(self.attribute_labels),
                "counts": self.counts.tolist(),
            }
        )

    @staticmethod
    def from_json(text: str) -> "InteractionMatrix":
        obj = json.loads(text)
        arr = np.asarray(obj["counts"], dtype=np.int64)
        if arr.ndim != 2:
            raise ValueError("counts must be a 2-D table")
        if (arr < 0).any():
            raise ValueError("counts must be non-negative")
        m = InteractionMatrix(
            counts=arr,
            class_labels=tuple(obj["classes"]),
            attribute_labels=tuple(obj["attributes"]),
        )
        if arr.shape != (len(m.class_labels), len(m.attribute_labels)):
            raise ValueError("counts shape does not match label lists")
        return m


@dataclass(frozen=True)
class HeterogeneityTriplet:
    """(ci, ai, sc) for one dataset, each in [0, 1]."""

    ci: float
    ai: float
    sc: float

    def as_array(self) -> np.ndarray:
        return np.array([self.ci, self.ai, self.sc])


@dataclass(frozen=True)
class FederationMetrics:
    """Global (summed-matrix) and client (mean-triplet) metrics."""

    gci: float
    gai: float
    gsc: float
    cci: float
    cai: float
    csc: float

    def to_dict(self) -> dict[str, float]:
        return {
            "gci": self.gci,
            "cci": self.cci,
            "gai": self.gai,
            "cai": self.cai,
            "gsc": self.gsc,
            "csc": self.csc,
        }


def entropy(counts) -> float:
    """Empirical entropy in nats of a count vector; 0*ln(0) terms drop out."""
    c = np.asarray(counts, dtype=np.float64).ravel()
    if (c < 0).any():
        raise ValueError("counts must be non-negative")
    n = c.sum()
    if n <= 0:
        raise EmptyDistributionError("empty distribution")
    p = c[c > 0] / n
    return float(-np.sum(p * np.log(p)))


def mutual_information(m: InteractionMatrix) -> float:
    """I(Y;A) in nats, computed as H(Y) + H(A) - H(Y,A)."""
    if m.n <= 0:
        raise EmptyDistributionError("empty distribution")
    return entropy(m.class_counts) + entropy(m.attribute_counts) - entropy(m.counts)


def dht_from_matrix(m: InteractionMatrix) -> HeterogeneityTriplet:
    """Heterogeneity triplet (ci, ai, sc) of one interaction matrix."""
    if m.n <= 0:
        raise EmptyDistributionError("empty distribution")
    hy = entropy(m.class_counts)
    ha = entropy(m.attribute_counts)
    n_classes = len(m.class_labels)
    n_attrs = len(m.attribute_labels)

    ci = 1.0 if n_classes == 1 else 1.0 - hy / math.log(n_classes)
    ai = 1.0 if n_attrs == 1 else 1.0 - ha / math.log(n_attrs)
    if hy + ha == 0.0:
        sc = 0.0
    else:
        sc = 2.0 * mutual_information(m) / (hy + ha)
    return HeterogeneityTriplet(ci=ci, ai=ai, sc=sc)


def federation_metrics(matrices: list[InteractionMatrix]) -> FederationMetrics:
    """Global and client heterogeneity metrics for a federation.

    Global values come from the summed matrix, client values are the
    unweighted mean of the per-client triplets.
    """
    if not matrices:
        raise ValueError("need at least one interaction matrix")
    first = matrices[0]
    for k, m in enumerate(matrices):
        if not m.same_labels(first):
            raise LabelMismatchError(f"client {k} has a different class/attribute label set")

    total = InteractionMatrix(
        counts=sum(m.counts for m in matrices),
        class_labels=first.class_labels,
        attribute_labels=first.attribute_labels,
    )
    g = dht_from_matrix(total)
    triplets = np.array([dht_from_matrix(m).as_array() for m in matrices])
    cci, cai, csc = triplets.mean(axis=0)
    return FederationMetrics(
        gci=g.ci, gai=g.ai, gsc=g.sc, cci=float(cci), cai=float(cai), csc=float(csc)
    )
