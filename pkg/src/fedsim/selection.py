"""Client selection strategies.

The diversity-driven selector picks clients in blocks of three using the
per-client heterogeneity triplets (ci, ai, sc):

1. a probabilistic draw proportional to the block's priority dimension,
2. the remaining client whose L1-normalized triplet has the smallest dot
   product with the first pick (least aligned),
3. the remaining client whose normalized triplet aligns best with the
   cross product of the first two (the direction both of them miss).

The priority dimension rotates sc -> ci -> ai after every completed
block, and the rotation offset persists across rounds.

Baselines: uniform, round robin, loss-ranked pow-d, flag-weighted FedPNS
and cluster-stratified HCSFed. Step-normalized FedNova is a weighting
scheme, not a selector; it lives in the aggregation code and composes
with uniform selection here. A variance-minimizing weight oracle backs
the known-matrix ablation.

All ties break toward the lowest client id, and every strategy is
deterministic given its RNG stream.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .estimation import DhtMatrix
from .metrics import InteractionMatrix

STRATEGIES = (
    "feddiverse",
    "uniform",
    "round_robin",
    "pow_d",
    "fedpns",
    "hcsfed",
    "variance_oracle",
)

# priority dimensions per block: sc, then ci, then ai (triplet is (ci, ai, sc))
_ROTATION = (2, 0, 1)


class ContractError(ValueError):
    """A strategy was invoked without the context it requires."""


@dataclass
class RoundContext:
    """What the coordinator knows when selecting for a round."""

    round_index: int
    rng: np.random.Generator
    # local loss of the current global parameters on a client's data;
    # required by pow_d, lazy so other strategies never pay for it
    client_loss: Callable[[int], float] | None = None


@dataclass
class RoundFeedback:
    """Post-round information handed back to stateful strategies."""

    round_index: int
    selected: list[int]
    client_updates: dict[int, np.ndarray] = field(default_factory=dict)
    aggregate_update: np.ndarray | None = None
    all_client_updates: dict[int, np.ndarray] | None = None


class Selector:
    name = "base"
    #: engine must probe every client's local update after round 1
    wants_round1_probe = False
    #: engine must run heterogeneity estimation before round 1
    wants_dht = False

    def __init__(self, n_clients: int):
        if n_clients <= 0:
            raise ValueError("need at least one client")
        self.n_clients = n_clients

    def select(self, m: int, ctx: RoundContext) -> list[int]:
        raise NotImplementedError

    def observe(self, feedback: RoundFeedback) -> None:
        pass

    def _check_m(self, m: int) -> None:
        if not 1 <= m <= self.n_clients:
            raise ContractError(f"cannot select {m} of {self.n_clients} clients")


def feddiverse_select(
    dht: DhtMatrix,
    m: int,
    rng: np.random.Generator,
    start_offset: int = 0,
) -> tuple[list[int], int]:
    """One round of three-step geometric selection.

    Returns the ordered picks and the rotation offset after the last
    completed block. Fallbacks: a zero priority dimension turns step 1
    into a uniform draw, a zero cross product turns step 3 into one.
    """
    raw = dht.values
    norms = raw.sum(axis=1, keepdims=True)
    normalized = np.divide(raw, norms, out=np.zeros_like(raw), where=norms > 0)

    remaining = sorted(range(dht.n_clients))
    if not 1 <= m <= len(remaining):
        raise ContractError(f"cannot select {m} of {len(remaining)} clients")

    picks: list[int] = []
    offset = start_offset

    def take(k: int) -> None:
        picks.append(k)
        remaining.remove(k)

    while len(picks) < m:
        pool = np.array(remaining)

        # step 1: probabilistic draw on the priority dimension
        vals = raw[pool, _ROTATION[offset % 3]]
        total = vals.sum()
        if total > 0:
            k_p = int(rng.choice(pool, p=vals / total))
        else:
            k_p = int(rng.choice(pool))
        take(k_p)
        if len(picks) == m:
            break

        # step 2: least aligned with the probabilistic pick
        pool = np.array(remaining)
        dots = normalized[pool] @ normalized[k_p]
        k_c = int(pool[np.argmin(dots)])
        take(k_c)
        if len(picks) == m:
            break

        # step 3: best aligned with the direction orthogonal to both
        pool = np.array(remaining)
        ortho = np.cross(normalized[k_p], normalized[k_c])
        if np.all(ortho == 0.0):
            k_r = int(rng.choice(pool))
        else:
            k_r = int(pool[np.argmax(normalized[pool] @ ortho)])
        take(k_r)
        offset += 1
    return picks, offset


class FedDiverseSelector(Selector):
    name = "feddiverse"
    wants_dht = True

    def __init__(self, n_clients: int, dht: DhtMatrix | None = None):
        super().__init__(n_clients)
        self.dht = dht
        self.rotation_offset = 0

    def set_dht(self, dht: DhtMatrix) -> None:
        if dht.n_clients != self.n_clients:
            raise ContractError("triplet table size does not match federation")
        self.dht = dht

    def select(self, m: int, ctx: RoundContext) -> list[int]:
        self._check_m(m)
        if self.dht is None:
            raise ContractError("feddiverse needs the heterogeneity triplets")
        picks, self.rotation_offset = feddiverse_select(
            self.dht, m, ctx.rng, self.rotation_offset
        )
        return picks


class UniformSelector(Selector):
    name = "uniform"

    def select(self, m: int, ctx: RoundContext) -> list[int]:
        self._check_m(m)
        return [int(k) for k in ctx.rng.choice(self.n_clients, size=m, replace=False)]


class RoundRobinSelector(Selector):
    name = "round_robin"

    def __init__(self, n_clients: int):
        super().__init__(n_clients)
        self.times_selected = np.zeros(n_clients, dtype=np.int64)

    def select(self, m: int, ctx: RoundContext) -> list[int]:
        self._check_m(m)
        order = sorted(range(self.n_clients), key=lambda k: (self.times_selected[k], k))
        picks = order[:m]
        self.times_selected[picks] += 1
        return picks


class PowDSelector(Selector):
    """Uniform candidate pool, then the highest-loss clients.

    ``ascending=True`` keeps the lowest-loss candidates instead.
    """

    name = "pow_d"

    def __init__(self, n_clients: int, ascending: bool = False, pool_size: int | None = None):
        super().__init__(n_clients)
        self.ascending = ascending
        self.pool_size = pool_size

    def candidate_pool_size(self, m: int) -> int:
        if self.pool_size is not None:
            return min(self.n_clients, max(m, self.pool_size))
        return min(self.n_clients, 2 * m)

    def select(self, m: int, ctx: RoundContext) -> list[int]:
        self._check_m(m)
        if ctx.client_loss is None:
            raise ContractError("pow_d needs client_loss in the round context")
        pool = ctx.rng.choice(self.n_clients, size=self.candidate_pool_size(m), replace=False)
        losses = [(ctx.client_loss(int(k)), int(k)) for k in pool]
        sign = 1.0 if self.ascending else -1.0
        ranked = sorted(losses, key=lambda lk: (sign * lk[0], lk[1]))
        return [k for _, k in ranked[:m]]


class FedPnsSelector(Selector):
    """Weighted sampling; clients whose update opposes the aggregate get
    their weight halved (floor 0.05) and become less likely."""

    name = "fedpns"

    def __init__(self, n_clients: int):
        super().__init__(n_clients)
        self.weights = np.ones(n_clients)

    def select(self, m: int, ctx: RoundContext) -> list[int]:
        self._check_m(m)
        return _weighted_no_replacement(self.weights, m, ctx.rng)

    def observe(self, feedback: RoundFeedback) -> None:
        agg = feedback.aggregate_update
        if agg is None or not feedback.client_updates:
            return
        for k, upd in feedback.client_updates.items():
            if float(agg @ (agg - upd)) > 0.0:
                self.weights[k] = max(self.weights[k] * 0.5, 0.05)


class HcsfedSelector(Selector):
    """Cluster clients by randomly projected round-1 updates, then sample
    each round proportionally to cluster sizes."""

    name = "hcsfed"
    wants_round1_probe = True

    def __init__(
        self,
        n_clients: int,
        seed: int = 0,
        n_clusters: int = 3,
        compression_ratio: float = 1e-5,
    ):
        super().__init__(n_clients)
        self.seed = seed
        self.n_clusters = n_clusters
        self.compression_ratio = compression_ratio
        self.clusters: np.ndarray | None = None

    def compressed_dim(self, n_params: int) -> int:
        return max(8, round(self.compression_ratio * n_params))

    def observe(self, feedback: RoundFeedback) -> None:
        if self.clusters is not None or feedback.all_client_updates is None:
            return
        updates = np.array(
            [feedback.all_client_updates[k] for k in range(self.n_clients)]
        )
        rng = np.random.default_rng(self.seed)
        d_c = self.compressed_dim(updates.shape[1])
        projection = rng.normal(size=(updates.shape[1], d_c)) / np.sqrt(d_c)
        compressed = updates @ projection
        self.clusters = _kmeans(compressed, min(self.n_clusters, self.n_clients), rng)

    def select(self, m: int, ctx: RoundContext) -> list[int]:
        self._check_m(m)
        if self.clusters is None:
            # no cluster information before the first round of training
            return [int(k) for k in ctx.rng.choice(self.n_clients, size=m, replace=False)]
        return self._stratified(m, ctx.rng)

    def _stratified(self, m: int, rng: np.random.Generator) -> list[int]:
        members = {
            c: np.flatnonzero(self.clusters == c) for c in np.unique(self.clusters)
        }
        quota = _largest_remainder(
            {c: len(idx) for c, idx in members.items()}, m, cap={c: len(i) for c, i in members.items()}
        )
        picks: list[int] = []
        for c in sorted(members):
            take = quota[c]
            if take > 0:
                picks.extend(int(k) for k in rng.choice(members[c], size=take, replace=False))
        return picks


class VarianceOracleSelector(Selector):
    """Samples clients with the variance-minimizing weights computed from
    the true interaction matrices (known-matrix ablation only)."""

    name = "variance_oracle"

    def __init__(self, n_clients: int, weights: np.ndarray):
        super().__init__(n_clients)
        if len(weights) != n_clients:
            raise ContractError("one weight per client required")
        self.weights = np.clip(np.asarray(weights, dtype=np.float64), 0.0, None)

    def select(self, m: int, ctx: RoundContext) -> list[int]:
        self._check_m(m)
        return _weighted_no_replacement(self.weights, m, ctx.rng)


def _weighted_no_replacement(weights: np.ndarray, m: int, rng: np.random.Generator) -> list[int]:
    w = weights.astype(np.float64).copy()
    picks: list[int] = []
    for _ in range(m):
        total = w.sum()
        if total <= 0:
            pool = np.array([k for k in range(len(w)) if k not in picks])
            picks.append(int(rng.choice(pool)))
            continue
        k = int(rng.choice(len(w), p=w / total))
        picks.append(k)
        w[k] = 0.0
    return picks


def _largest_remainder(sizes: dict, m: int, cap: dict) -> dict:
    """Proportional integer allocation of m slots, capped by group size."""
    total = sum(sizes.values())
    exact = {c: m * s / total for c, s in sizes.items()}
    quota = {c: min(int(exact[c]), cap[c]) for c in sizes}
    while sum(quota.values()) < m:
        # hand remaining slots to the largest fractional remainders
        order = sorted(
            (c for c in sizes if quota[c] < cap[c]),
            key=lambda c: (-(exact[c] - int(exact[c])), c),
        )
        quota[order[0]] += 1
    return quota


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator, iters: int = 50) -> np.ndarray:
    centroids = points[rng.choice(len(points), size=k, replace=False)]
    assign = np.zeros(len(points), dtype=np.int64)
    for _ in range(iters):
        dist = np.linalg.norm(points[:, None, :] - centroids[None, :, :], axis=2)
        new_assign = dist.argmin(axis=1)
        if (new_assign == assign).all():
            break
        assign = new_assign
        for c in range(k):
            mask = assign == c
            if mask.any():
                centroids[c] = points[mask].mean(axis=0)
    return assign


def variance_min_weights(
    matrices: list[InteractionMatrix],
    iters: int = 500,
    step: float = 1e-3,
    tol: float = 1e-3,
) -> np.ndarray:
    """Weights minimizing the cell variance of the weighted matrix sum.

    Projected gradient descent on the probability simplex from the uniform
    start; the best iterate is returned, with a warning if the projected
    gradient has not vanished by the last iteration.
    """
    if not matrices:
        raise ValueError("need at least one interaction matrix")
    cells = np.array([m.counts.ravel() for m in matrices], dtype=np.float64)
    n_cells = cells.shape[1]
    centered = cells - cells.mean(axis=1, keepdims=True)

    def var(w: np.ndarray) -> float:
        s = w @ cells
        return float(np.mean((s - s.mean()) ** 2))

    def grad(w: np.ndarray) -> np.ndarray:
        s = w @ cells
        return (2.0 / n_cells) * (centered @ (s - s.mean()))

    w = np.full(len(matrices), 1.0 / len(matrices))
    best_w, best_var = w.copy(), var(w)
    for _ in range(iters):
        w = _project_simplex(w - step * grad(w))
        v = var(w)
        if v < best_var:
            best_w, best_var = w.copy(), v
    displacement = np.linalg.norm(best_w - _project_simplex(best_w - step * grad(best_w))) / step
    if displacement > tol:
        warnings.warn(
            f"variance minimization did not converge (projected gradient {displacement:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
    return best_w


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.flatnonzero(u + (1.0 - css) / np.arange(1, len(v) + 1) > 0)[-1]
    theta = (css[rho] - 1.0) / (rho + 1)
    return np.clip(v - theta, 0.0, None)


def make_selector(
    strategy: str,
    n_clients: int,
    seed: int = 0,
    dht: DhtMatrix | None = None,
    weights: np.ndarray | None = None,
    powd_ascending: bool = False,
) -> Selector:
    if strategy == "feddiverse":
        return FedDiverseSelector(n_clients, dht)
    if strategy == "uniform":
        return UniformSelector(n_clients)
    if strategy == "round_robin":
        return RoundRobinSelector(n_clients)
    if strategy == "pow_d":
        return PowDSelector(n_clients, ascending=powd_ascending)
    if strategy == "fedpns":
        return FedPnsSelector(n_clients)
    if strategy == "hcsfed":
        return HcsfedSelector(n_clients, seed=seed)
    if strategy == "variance_oracle":
        if weights is None:
            raise ContractError("variance_oracle needs precomputed client weights")
        return VarianceOracleSelector(n_clients, weights)
    raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
