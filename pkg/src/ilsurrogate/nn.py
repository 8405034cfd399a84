"""Fully connected network with analytic backprop and Adam, in float64 numpy.

Inputs are batched row-wise: ``x`` has shape ``(n, layer_sizes[0])``. A
single 1-D vector is treated as a batch of one.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ilsurrogate.errors import TrainingDivergence
from ilsurrogate.physics_loss import LossSpec, combined_loss

log = logging.getLogger(__name__)

HIDDEN_ACTIVATIONS = ("tanh", "relu")
OUTPUT_ACTIVATIONS = ("identity", "softplus")


def softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    # exp(-logaddexp(0, -z)) is exact in both tails
    return np.exp(-np.logaddexp(0.0, -z))


def _activate(tag, z):
    if tag == "tanh":
        return np.tanh(z)
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "identity":
        return z
    if tag == "softplus":
        return softplus(z)
    raise ValueError(f"unknown activation {tag!r}")


def _activation_grad(tag, z, a):
    """Derivative of the activation at pre-activation ``z`` (output ``a``)."""
    if tag == "tanh":
        return 1.0 - a * a
    if tag == "relu":
        return (z > 0).astype(float)
    if tag == "identity":
        return np.ones_like(z)
    if tag == "softplus":
        return _sigmoid(z)
    raise ValueError(f"unknown activation {tag!r}")


@dataclass(frozen=True, eq=False)
class MlpModel:
    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]
    output_activation: str
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"need >= 2 layers of size >= 1, got {list(sizes)}")
        acts = tuple(self.activations)
        if len(acts) != len(sizes) - 2:
            raise ValueError(f"{len(sizes) - 2} hidden layers but {len(acts)} activation tags")
        for a in acts:
            if a not in HIDDEN_ACTIVATIONS:
                raise ValueError(f"unknown hidden activation {a!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        ws, bs = tuple(np.asarray(w, dtype=float) for w in self.weights), tuple(
            np.asarray(b, dtype=float) for b in self.biases
        )
        if len(ws) != len(sizes) - 1 or len(bs) != len(sizes) - 1:
            raise ValueError("weights/biases count does not match layer_sizes")
        for k, (w, b) in enumerate(zip(ws, bs)):
            if w.shape != (sizes[k + 1], sizes[k]) or b.shape != (sizes[k + 1],):
                raise ValueError(
                    f"layer {k}: weight {w.shape} / bias {b.shape} inconsistent with sizes {sizes[k]}->{sizes[k + 1]}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} has non-finite parameters")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "activations", acts)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def layer_activation(self, k: int) -> str:
        return self.activations[k] if k < self.n_layers - 1 else self.output_activation

    def with_params(self, weights, biases) -> "MlpModel":
        return MlpModel(self.layer_sizes, self.activations, self.output_activation, tuple(weights), tuple(biases))

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)[0]

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activations": list(self.activations),
            "output_activation": self.output_activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        return cls(
            tuple(d["layer_sizes"]),
            tuple(d["activations"]),
            d["output_activation"],
            tuple(np.array(w, dtype=float).reshape(d["layer_sizes"][k + 1], d["layer_sizes"][k])
                  for k, w in enumerate(d["weights"])),
            tuple(np.array(b, dtype=float) for b in d["biases"]),
        )


def init_model(layer_sizes, activations="tanh", output_activation="identity", seed=0) -> MlpModel:
    """Xavier-uniform weights, zero biases.

    ``activations`` is either one tag applied to every hidden layer or a
    sequence with one tag per hidden layer.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("layer_sizes needs at least an input and an output size")
    if isinstance(activations, str):
        activations = (activations,) * (len(sizes) - 2)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(tuple(sizes), tuple(activations), output_activation, tuple(weights), tuple(biases))


@dataclass
class ForwardCache:
    inputs: list  # input to each layer
    preacts: list
    outputs: list
    batched: bool


def forward(model: MlpModel, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=float)
    batched = x.ndim == 2
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"input has shape {x.shape}, model expects (n, {model.layer_sizes[0]})")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    inputs, preacts, outputs = [], [], []
    a = x
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(a)
        z = a @ w.T + b
        a = _activate(model.layer_activation(k), z)
        preacts.append(z)
        outputs.append(a)
    out = a if batched else a[0]
    return out, ForwardCache(inputs, preacts, outputs, batched)


@dataclass(frozen=True, eq=False)
class Gradients:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def arrays(self):
        return list(self.weights) + list(self.biases)


def backward(model: MlpModel, cache: ForwardCache, output_gradient) -> Gradients:
    """Gradient of a scalar loss w.r.t. all parameters, given dLoss/dOutput."""
    g = np.asarray(output_gradient, dtype=float)
    if not cache.batched:
        g = g[None, :] if g.ndim == 1 else g
    expected = cache.outputs[-1].shape
    if g.shape != expected:
        raise ValueError(f"output gradient has shape {g.shape}, expected {expected}")
    n_layers = model.n_layers
    gw, gb = [None] * n_layers, [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        dz = g * _activation_grad(model.layer_activation(k), cache.preacts[k], cache.outputs[k])
        gw[k] = dz.T @ cache.inputs[k]
        gb[k] = dz.sum(axis=0)
        if k:
            g = dz @ model.weights[k]
    return Gradients(tuple(gw), tuple(gb))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 128
    seed: int = 0
    lambda_penalty: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.lambda_penalty < 0:
            raise ValueError("lambda_penalty must be >= 0")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1) or not self.adam_eps > 0:
            raise ValueError("invalid Adam hyperparameters")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class AdamState:
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    step: int = 0

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "AdamState":
        params = list(model.weights) + list(model.biases)
        return cls(tuple(np.zeros_like(p) for p in params), tuple(np.zeros_like(p) for p in params), 0)


def adam_step(model: MlpModel, grads: Gradients, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update. Returns ``(new_model, new_state)``."""
    g_list = grads.arrays()
    params = list(model.weights) + list(model.biases)
    if len(g_list) != len(params) or any(g.shape != p.shape for g, p in zip(g_list, params)):
        raise ValueError("gradient shapes do not match model parameters")
    for g in g_list:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergence(f"non-finite gradient at optimizer step {state.step + 1}")
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.step + 1
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, g_list, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        p = p - config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
        if not np.all(np.isfinite(p)):
            raise TrainingDivergence(f"non-finite parameters after optimizer step {t}")
        new_p.append(p)
        new_m.append(m)
        new_v.append(v)
    k = model.n_layers
    return model.with_params(new_p[:k], new_p[k:]), AdamState(tuple(new_m), tuple(new_v), t)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    total: float
    mse: float
    penalty: float
    seconds: float


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def total_seconds(self) -> float:
        return float(sum(r.seconds for r in self.records))

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,total_loss,mse,penalty,seconds\n")
            for r in self.records:
                fh.write(f"{r.epoch},{r.total!r},{r.mse!r},{r.penalty!r},{r.seconds!r}\n")


def _reshape_targets(model: MlpModel, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] != model.layer_sizes[-1]:
        raise ValueError(f"targets have {y.shape[1]} columns, model outputs {model.layer_sizes[-1]}")
    return y


def train(model: MlpModel, x, y, loss_spec: LossSpec, config: TrainConfig) -> tuple[MlpModel, TrainTrace]:
    """Mini-batch Adam on normalized data.

    Each epoch draws a seeded permutation of the rows and walks it in
    ``batch_size`` chunks (the last one may be short). After every epoch
    the loss over the full training set is recorded in the trace, so the
    last trace entry is the loss of the returned model.
    """
    x = np.asarray(x, dtype=float)
    y = _reshape_targets(model, y)
    n = len(x)
    if n == 0:
        raise ValueError("training data is empty")
    if len(y) != n:
        raise ValueError(f"{n} inputs but {len(y)} targets")
    if config.batch_size > n:
        raise ValueError(f"batch_size {config.batch_size} exceeds training-set size {n}")

    rng = np.random.default_rng(config.seed)
    state = AdamState.zeros_like(model)
    trace = TrainTrace()
    log_every = max(1, config.epochs // 5)
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            out, cache = forward(model, x[idx])
            value, grad = combined_loss(out, y[idx], loss_spec, with_grad=True)
            if not np.isfinite(value.total):
                raise TrainingDivergence(f"non-finite loss in epoch {epoch}", epoch=epoch)
            try:
                model, state = adam_step(model, backward(model, cache, grad), state, config)
            except TrainingDivergence as exc:
                raise TrainingDivergence(f"{exc} (epoch {epoch})", epoch=epoch) from None
        value = combined_loss(forward(model, x)[0], y, loss_spec)
        seconds = time.perf_counter() - t0
        if not np.isfinite(value.total):
            raise TrainingDivergence(f"non-finite loss after epoch {epoch}", epoch=epoch)
        trace.records.append(EpochRecord(epoch, value.total, value.mse, value.penalty, seconds))
        if epoch == 1 or epoch % log_every == 0 or epoch == config.epochs:
            log.info("epoch %d: loss %.6g (mse %.6g, penalty %.6g)", epoch, value.total, value.mse, value.penalty)
    return model, trace
