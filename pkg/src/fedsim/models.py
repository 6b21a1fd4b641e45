"""Small feed-forward classifier with hand-derived gradients.

The model is an MLP with tanh hidden activations and a softmax output,
stored as one flat parameter vector (weights then biases, layer by
layer). Three training losses are supported:

    cross_entropy   -ln p_target
    gce             (1 - p_target^q) / q, interpolating CE (q -> 0)
                    and MAE (q = 1); its gradient damps hard samples,
                    which makes overfit models latch onto easy patterns
    proximal        cross-entropy plus (mu/2) * ||theta - anchor||^2

Everything here is pure numpy and deterministic given the seeds; the
trainer is plain mini-batch SGD with per-epoch shuffling.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

PROB_FLOOR = 1e-12  # clamp for p_target before log/pow

LOSS_KINDS = ("cross_entropy", "gce", "proximal")


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector plus the (in, out) shape of every layer."""

    layer_shapes: tuple[tuple[int, int], ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.size:
            raise ValueError(
                f"expected {self.size} parameters for shapes {self.layer_shapes}, "
                f"got {len(self.values)}"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("parameters must be finite")

    @property
    def size(self) -> int:
        return sum(i * o + o for i, o in self.layer_shapes)

    @property
    def n_inputs(self) -> int:
        return self.layer_shapes[0][0]

    @property
    def n_outputs(self) -> int:
        return self.layer_shapes[-1][1]

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Unpack into (W, b) views in declaration order."""
        out = []
        pos = 0
        for i, o in self.layer_shapes:
            w = self.values[pos : pos + i * o].reshape(i, o)
            pos += i * o
            b = self.values[pos : pos + o]
            pos += o
            out.append((w, b))
        return out

    def with_values(self, values: np.ndarray) -> "ModelParams":
        return replace(self, values=values)


def init_params(
    layer_shapes: tuple[tuple[int, int], ...], rng: np.random.Generator
) -> ModelParams:
    """Fan-in scaled Gaussian weights, zero biases."""
    chunks = []
    for i, o in layer_shapes:
        chunks.append(rng.normal(0.0, 1.0 / np.sqrt(i), size=i * o))
        chunks.append(np.zeros(o))
    return ModelParams(layer_shapes=tuple(layer_shapes), values=np.concatenate(chunks))


def params_to_json(params: ModelParams) -> str:
    """Shape header plus the flat value list; full float precision."""
    import json

    return json.dumps(
        {
            "layer_shapes": [list(s) for s in params.layer_shapes],
            "values": [float(v) for v in params.values],
        }
    )


def params_from_json(text: str) -> ModelParams:
    import json

    obj = json.loads(text)
    return ModelParams(
        layer_shapes=tuple(tuple(s) for s in obj["layer_shapes"]),
        values=np.asarray(obj["values"], dtype=np.float64),
    )


def mlp_shapes(n_inputs: int, n_outputs: int, hidden: int = 16) -> tuple[tuple[int, int], ...]:
    return ((n_inputs, hidden), (hidden, n_outputs))


@dataclass(frozen=True)
class LossSpec:
    kind: str = "cross_entropy"
    gce_q: float = 0.7
    prox_mu: float = 0.0
    anchor: ModelParams | None = None
    prox_unsquared: bool = False

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if not 0.0 < self.gce_q <= 1.0:
            raise ValueError("gce_q must be in (0, 1]")
        if self.prox_mu < 0:
            raise ValueError("prox_mu must be non-negative")
        if self.kind == "proximal" and self.anchor is None:
            raise ValueError("proximal loss needs anchor parameters")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    batch_size: int = 28
    learning_rate: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate < 0:
            raise ValueError("invalid training configuration")


@dataclass(frozen=True)
class TrainResult:
    params: ModelParams
    steps: int  # tau, consumed by step-normalized aggregation


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_pass(params: ModelParams, X: np.ndarray):
    """Returns (activations per layer incl. input, output probabilities)."""
    layers = params.layers()
    acts = [X]
    h = X
    for idx, (w, b) in enumerate(layers):
        z = h @ w + b
        h = np.tanh(z) if idx < len(layers) - 1 else z
        acts.append(h)
    return acts, _softmax(acts[-1])


def predict_proba(params: ModelParams, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != params.n_inputs:
        raise ValueError(f"expected {params.n_inputs} features, got {X.shape[1]}")
    return _forward_pass(params, X)[1]


def forward(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Probability vector for a single sample."""
    return predict_proba(params, np.asarray(features).reshape(1, -1))[0]


def predict(params: ModelParams, X: np.ndarray) -> np.ndarray:
    return predict_proba(params, X).argmax(axis=1)


def accuracy(params: ModelParams, X: np.ndarray, y: np.ndarray) -> float:
    return float((predict(params, X) == y).mean())


def loss_and_grad(
    params: ModelParams, X: np.ndarray, y: np.ndarray, spec: LossSpec
) -> tuple[float, np.ndarray]:
    """Batch-mean loss and its exact gradient as a flat vector."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).ravel()
    if len(y) == 0:
        raise ValueError("empty batch")
    if X.shape[0] != len(y):
        raise ValueError("features and targets disagree in length")

    acts, probs = _forward_pass(params, X)
    n = len(y)
    p_target = np.clip(probs[np.arange(n), y], PROB_FLOOR, None)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), y] = 1.0

    if spec.kind == "gce":
        q = spec.gce_q
        loss = float(np.mean((1.0 - p_target**q) / q))
        # d/dz of (1 - p_t^q)/q through softmax: p_t^q * (p - onehot)
        g_out = (p_target**q)[:, None] * (probs - onehot) / n
    else:
        loss = float(np.mean(-np.log(p_target)))
        g_out = (probs - onehot) / n

    grad = _backprop(params, acts, g_out)

    if spec.kind == "proximal":
        diff = params.values - spec.anchor.values
        if spec.prox_unsquared:
            norm = float(np.linalg.norm(diff))
            loss += 0.5 * spec.prox_mu * norm
            if norm > 0:
                grad = grad + 0.5 * spec.prox_mu * diff / norm
        else:
            loss += 0.5 * spec.prox_mu * float(diff @ diff)
            grad = grad + spec.prox_mu * diff
    return loss, grad


def _backprop(params: ModelParams, acts: list[np.ndarray], g_out: np.ndarray) -> np.ndarray:
    layers = params.layers()
    grads: list[np.ndarray] = [None] * len(layers)
    g = g_out
    for idx in range(len(layers) - 1, -1, -1):
        w, _ = layers[idx]
        h_in = acts[idx]
        gw = h_in.T @ g
        gb = g.sum(axis=0)
        grads[idx] = np.concatenate([gw.ravel(), gb])
        if idx > 0:
            g = (g @ w.T) * (1.0 - acts[idx] ** 2)  # tanh'
    return np.concatenate(grads)


def sgd_train(
    params: ModelParams,
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    spec: LossSpec,
    early_stop_acc: float | None = None,
) -> TrainResult:
    """Mini-batch SGD with per-epoch seeded shuffling.

    Runs epochs * ceil(n / batch_size) steps, or fewer if the training
    accuracy reaches ``early_stop_acc`` at an epoch boundary.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).ravel()
    if len(y) == 0:
        raise ValueError("empty dataset")

    rng = np.random.default_rng(cfg.seed)
    values = params.values.copy()
    current = params.with_values(values)
    steps = 0
    n = len(y)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grad = loss_and_grad(current, X[idx], y[idx], spec)
            values = values - cfg.learning_rate * grad
            current = current.with_values(values)
            steps += 1
        if early_stop_acc is not None and accuracy(current, X, y) >= early_stop_acc:
            break
    return TrainResult(params=current, steps=steps)
