"""Direct MLP surrogates (baseline NN and penalty-trained PDNN) and model
file loading for every method."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ilsurrogate.data import N_INPUT, Dataset, MinMaxScaler, fit_scaler
from ilsurrogate.errors import DataError
from ilsurrogate.nn import MlpModel, TrainConfig, TrainTrace, init_model, train
from ilsurrogate.physics_loss import LossSpec

MLP_METHODS = ("nn", "pdnn")
METHODS = ("nn", "pdnn", "pdeeponet")
DEFAULT_HIDDEN = (64, 64, 64)


@dataclass(frozen=True, eq=False)
class MlpSurrogate:
    """An MLP on normalized ``(design, frequency)`` inputs predicting the
    normalized insertion loss."""

    net: MlpModel
    scaler: MinMaxScaler
    method: str = "nn"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in MLP_METHODS:
            raise ValueError(f"unknown MLP method {self.method!r}")
        if self.net.layer_sizes[0] != N_INPUT or self.net.layer_sizes[-1] != 1:
            raise ValueError(f"network must map {N_INPUT} inputs to 1 output, got {self.net.layer_sizes}")

    @property
    def input_scaler(self) -> MinMaxScaler:
        return self.scaler

    def predict_normalized(self, features) -> np.ndarray:
        x = self.scaler.transform_inputs(np.atleast_2d(np.asarray(features, dtype=float)))
        return self.net(x)[:, 0]

    def predict_rows(self, features, timings: list | None = None) -> np.ndarray:
        t0 = time.perf_counter()
        out = self.scaler.inverse_labels(self.predict_normalized(features))
        if timings is not None:
            timings.append(time.perf_counter() - t0)
        return out

    def predict_db(self, features) -> np.ndarray:
        return self.predict_rows(features)

    def to_dict(self) -> dict:
        return {
            "kind": "mlp",
            "method": self.method,
            "network": self.net.to_dict(),
            "scaler": self.scaler.to_dict(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSurrogate":
        return cls(MlpModel.from_dict(d["network"]), MinMaxScaler.from_dict(d["scaler"]), d["method"], d.get("provenance", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")


def train_surrogate(
    train_set: Dataset,
    method: str = "nn",
    config: TrainConfig = TrainConfig(),
    scaler: MinMaxScaler | None = None,
    hidden=DEFAULT_HIDDEN,
    activation: str = "tanh",
) -> tuple[MlpSurrogate, TrainTrace, float]:
    """Train the baseline (``nn``, no penalty) or ``pdnn`` surrogate.

    ``nn`` ignores ``config.lambda_penalty``. Returns the surrogate, its
    trace and the training wall time in seconds.
    """
    if method not in MLP_METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {MLP_METHODS}")
    if method == "nn":
        config = replace(config, lambda_penalty=0.0)
    scaler = scaler or fit_scaler(train_set)
    spec = LossSpec(config.lambda_penalty, scaler.il_zero_normalized)
    net = init_model((N_INPUT, *hidden, 1), activation, "identity", seed=config.seed)
    x = scaler.transform_inputs(train_set.features)
    y = scaler.transform_labels(train_set.labels)
    t0 = time.perf_counter()
    net, trace = train(net, x, y, spec, config)
    seconds = time.perf_counter() - t0
    provenance = {"dataset": train_set.name, "config": config.to_dict()}
    return MlpSurrogate(net, scaler, method, provenance), trace, seconds


def model_from_dict(d: dict):
    from ilsurrogate.deeponet import PDeepONetModel

    kind = d.get("kind")
    if kind == "mlp":
        return MlpSurrogate.from_dict(d)
    if kind == "pdeeponet":
        return PDeepONetModel.from_dict(d)
    raise DataError(f"unknown model kind {kind!r}")


def load_model(path):
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    try:
        return model_from_dict(d)
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed model file {path}: {exc}") from exc

