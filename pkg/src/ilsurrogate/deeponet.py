"""Polynomial DeepONet: a branch MLP maps the seven design parameters to
cubic coefficients, a fixed power-series trunk supplies ``(w, w**2, w**3)``,
and the prediction is their dot product.

Training is two-stage. Stage 1 fits a cubic to every frequency sweep;
stage 2 regresses the fitted coefficients on the design parameters.

In ``softplus_head`` mode the coefficient scaler has its minimum pinned at
0 and the branch head is softplus, shifted so that a zero head output maps
to a zero coefficient. Every coefficient is then non-negative and so is
every prediction at ``w >= 0``.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ilsurrogate.data import DESIGN_COLUMNS, N_DESIGN, Dataset, DesignParams, MinMaxScaler, fit_scaler
from ilsurrogate.errors import DataError
from ilsurrogate.nn import MlpModel, TrainConfig, TrainTrace, init_model, train
from ilsurrogate.physics_loss import LossSpec
from ilsurrogate.polynomial import COEFF_NAMES, FitAllResult, eval_poly, fit_all

POSITIVITY_MODES = ("softplus_head", "unconstrained")
DEFAULT_BRANCH_HIDDEN = (64, 64)


def _coefficient_scaler(coeffs: np.ndarray, mode: str) -> MinMaxScaler:
    lo = coeffs.min(axis=0)
    hi = coeffs.max(axis=0)
    if mode == "softplus_head":
        lo = np.zeros(3)
        hi = np.where(hi > 0, hi, 1.0)
    else:
        pad = 0.5 * np.maximum(np.abs(lo), 1.0)
        flat = hi <= lo
        lo = np.where(flat, lo - pad, lo)
        hi = np.where(flat, hi + pad, hi)
    return MinMaxScaler(COEFF_NAMES, lo, hi)


@dataclass(frozen=True, eq=False)
class PDeepONetModel:
    branch: MlpModel
    coeff_scaler: MinMaxScaler
    input_scaler: MinMaxScaler
    positivity_mode: str = "softplus_head"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.positivity_mode not in POSITIVITY_MODES:
            raise ValueError(f"unknown positivity mode {self.positivity_mode!r}")
        if self.branch.layer_sizes[0] != N_DESIGN or self.branch.layer_sizes[-1] != 3:
            raise ValueError(f"branch must map {N_DESIGN} inputs to 3 coefficients, got {self.branch.layer_sizes}")
        head = "softplus" if self.positivity_mode == "softplus_head" else "identity"
        if self.branch.output_activation != head:
            raise ValueError(f"{self.positivity_mode} mode needs a {head} branch head")

    method = "pdeeponet"

    @property
    def head_offset(self) -> float:
        """Added to the branch output to obtain normalized coefficients."""
        return -1.0 if self.positivity_mode == "softplus_head" else 0.0

    def branch_targets(self, coeffs: np.ndarray) -> np.ndarray:
        return self.coeff_scaler.transform(coeffs) - self.head_offset

    def coefficients(self, designs) -> np.ndarray:
        """Physical ``(a, b, c)`` for each design row (shape ``(n, 3)``)."""
        d = np.asarray(designs, dtype=float)
        single = d.ndim == 1
        d = np.atleast_2d(d)
        if d.shape[-1] != N_DESIGN:
            raise ValueError(f"designs must have {N_DESIGN} columns, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("non-finite design input")
        z = self.input_scaler.transform(d, list(DESIGN_COLUMNS))
        coeffs = self.coeff_scaler.inverse_transform(self.branch(z) + self.head_offset)
        return coeffs[0] if single else coeffs

    def predict_rows(self, features, timings: list | None = None) -> np.ndarray:
        """Insertion loss (dB) for rows of ``(7 design params, frequency)``.

        When ``timings`` is a list, the branch and polynomial stage times are
        appended to it.
        """
        x = np.atleast_2d(np.asarray(features, dtype=float))
        freqs = x[:, N_DESIGN]
        if not np.all(np.isfinite(freqs)):
            raise ValueError("non-finite frequency")
        t0 = time.perf_counter()
        coeffs = self.coefficients(x[:, :N_DESIGN])
        t1 = time.perf_counter()
        il = eval_poly(coeffs, freqs)
        t2 = time.perf_counter()
        if timings is not None:
            timings.extend([t1 - t0, t2 - t1])
        return np.asarray(il)

    def predict_db(self, features) -> np.ndarray:
        return self.predict_rows(features)

    def to_dict(self) -> dict:
        return {
            "kind": "pdeeponet",
            "method": "pdeeponet",
            "positivity_mode": self.positivity_mode,
            "branch": self.branch.to_dict(),
            "coeff_scaler": self.coeff_scaler.to_dict(),
            "scaler": self.input_scaler.to_dict(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PDeepONetModel":
        return cls(
            MlpModel.from_dict(d["branch"]),
            MinMaxScaler.from_dict(d["coeff_scaler"]),
            MinMaxScaler.from_dict(d["scaler"]),
            d["positivity_mode"],
            d.get("provenance", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")


def predict(model: PDeepONetModel, params: DesignParams, frequency: float) -> float:
    if not np.isfinite(frequency):
        raise ValueError("non-finite frequency")
    if frequency < 0:
        raise ValueError("frequency must be >= 0")
    return float(eval_poly(model.coefficients(params.as_array()), frequency))


def predict_curve(model: PDeepONetModel, params: DesignParams, frequencies) -> list[tuple[float, float]]:
    freqs = np.asarray(frequencies, dtype=float).reshape(-1)
    if np.any(freqs < 0) or not np.all(np.isfinite(freqs)):
        raise ValueError("frequencies must be finite and >= 0")
    il = eval_poly(model.coefficients(params.as_array()), freqs)
    return list(zip(freqs.tolist(), np.atleast_1d(il).tolist()))


@dataclass
class TwoStageResult:
    model: PDeepONetModel
    trace: TrainTrace
    fits: FitAllResult
    stage_seconds: tuple[float, float] = (0.0, 0.0)


def train_two_stage(
    dataset: Dataset,
    fit_method: str = "nnls",
    config: TrainConfig = TrainConfig(epochs=2000),
    positivity_mode: str = "softplus_head",
    scaler: MinMaxScaler | None = None,
    hidden=DEFAULT_BRANCH_HIDDEN,
    activation: str = "tanh",
) -> TwoStageResult:
    """Fit per-curve cubics, then train the branch net on the coefficients.

    ``scaler`` is the dataset scaler whose design columns normalize the
    branch input; it is fitted on ``dataset`` when omitted. The batch size
    is capped at the number of fitted curves.
    """
    if positivity_mode not in POSITIVITY_MODES:
        raise ValueError(f"unknown positivity mode {positivity_mode!r}")
    scaler = scaler or fit_scaler(dataset)

    t0 = time.perf_counter()
    fits = fit_all(dataset, fit_method)
    stage1 = time.perf_counter() - t0
    if len(fits.fits) < 2:
        raise DataError(f"need at least 2 fittable curves, got {len(fits.fits)}")

    coeffs = fits.coefficients
    head = "softplus" if positivity_mode == "softplus_head" else "identity"
    branch = init_model((N_DESIGN, *hidden, 3), activation, head, seed=config.seed)
    model = PDeepONetModel(branch, _coefficient_scaler(coeffs, positivity_mode), scaler, positivity_mode)

    x = scaler.transform(fits.designs, list(DESIGN_COLUMNS))
    y = model.branch_targets(coeffs)
    cfg = replace(config, batch_size=min(config.batch_size, len(x)), lambda_penalty=0.0)
    t1 = time.perf_counter()
    branch, trace = train(branch, x, y, LossSpec(0.0), cfg)
    stage2 = time.perf_counter() - t1

    provenance = {
        "fit_method": fit_method,
        "dataset": dataset.name,
        "n_curves": len(fits.fits),
        "max_fit_residual_db": fits.max_epsilon,
        "config": cfg.to_dict(),
    }
    model = PDeepONetModel(branch, model.coeff_scaler, scaler, positivity_mode, provenance)
    return TwoStageResult(model, trace, fits, (stage1, stage2))
