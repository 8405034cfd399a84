"""File-level workflow steps shared by the CLI and the seeded benchmark."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from ilsurrogate.data import (
    Dataset,
    MinMaxScaler,
    SplitSpec,
    fit_scaler,
    generate_synthetic,
    load_csv,
    parse_frequency_grid,
    save_csv,
    split,
)
from ilsurrogate.deeponet import train_two_stage
from ilsurrogate.errors import DataError
from ilsurrogate.evaluation import Comparison, EvalReport, compare, evaluate
from ilsurrogate.nn import TrainConfig
from ilsurrogate.polynomial import FitAllResult, fit_all
from ilsurrogate.surrogate import METHODS, load_model, train_surrogate

log = logging.getLogger(__name__)

DEFAULT_EPOCHS = {"nn": 200, "pdnn": 200, "pdeeponet": 2000}


@dataclass(frozen=True)
class BenchmarkRecipe:
    n_designs: int = 190
    frequencies: str = "0.1:40:37"
    data_seed: int = 7
    model_seed: int = 0
    split_seed: int = 0
    train_fraction: float = 0.8
    lambda_penalty: float = 1.0
    fit_method: str = "nnls"
    positivity: str = "softplus_head"


def sidecar(model_path, kind: str) -> Path:
    """``nn.json`` -> ``nn.trace.csv`` / ``nn.timing.json``."""
    p = Path(model_path)
    return p.with_name(p.stem + {"trace": ".trace.csv", "timing": ".timing.json"}[kind])


def gen_data(output, n_designs: int, frequencies, seed: int, noise_sd: float | None = None) -> Dataset:
    if isinstance(frequencies, str):
        frequencies = parse_frequency_grid(frequencies)
    kwargs = {} if noise_sd is None else {"noise_sd": noise_sd}
    ds = generate_synthetic(n_designs, frequencies, seed, name=Path(output).stem, **kwargs)
    save_csv(ds, output)
    log.info("wrote %s: %d rows, %d designs x %d frequencies", output, len(ds), n_designs, len(frequencies))
    return ds


def load_split(data_path, split_spec: SplitSpec) -> tuple[Dataset, Dataset | None]:
    return split(load_csv(data_path), split_spec)


def train_model(
    data_path,
    output,
    method: str,
    config: TrainConfig,
    split_spec: SplitSpec = SplitSpec(),
    fit_method: str = "nnls",
    positivity: str = "softplus_head",
):
    """Train one method on the training split of ``data_path``.

    Writes the model JSON plus trace CSV and timing sidecars; the scaler is
    fitted on the training split only. Returns the model.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    train_set, _ = load_split(data_path, split_spec)
    scaler = fit_scaler(train_set)
    if method == "pdeeponet":
        result = train_two_stage(train_set, fit_method, config, positivity, scaler)
        model, trace = result.model, result.trace
        timing = {"stage1_s": result.stage_seconds[0], "stage2_s": result.stage_seconds[1]}
        if result.fits.failures:
            log.warning("%d curve fit(s) failed", len(result.fits.failures))
    else:
        model, trace, seconds = train_surrogate(train_set, method, config, scaler)
        timing = {"train_time_s": seconds}

    provenance = dict(model.provenance)
    provenance.update(
        method=method,
        data_file=Path(data_path).name,
        split={"train_fraction": split_spec.train_fraction, "seed": split_spec.seed},
    )
    model = replace(model, provenance=provenance)
    model.save(output)
    trace.to_csv(sidecar(output, "trace"))
    sidecar(output, "timing").write_text(json.dumps(timing) + "\n", encoding="utf-8")
    log.info("wrote %s (final train loss %.6g)", output, trace.final.total if len(trace) else float("nan"))
    return model


def _split_of(model) -> SplitSpec:
    s = model.provenance.get("split")
    if not s:
        raise DataError("model file does not record its train/test split")
    return SplitSpec(s["train_fraction"], s["seed"])


def _train_time(model_path):
    path = sidecar(model_path, "timing")
    if not path.exists():
        return None
    t = json.loads(path.read_text(encoding="utf-8"))
    if "stage1_s" in t:
        return (float(t["stage1_s"]), float(t["stage2_s"]))
    return float(t["train_time_s"])


def evaluate_model(model_path, data_path, output=None, scaler_path=None) -> EvalReport:
    """Re-create the model's split of ``data_path`` and score both parts."""
    model = load_model(model_path)
    scaler: MinMaxScaler = MinMaxScaler.load(scaler_path) if scaler_path else model.input_scaler
    train_set, test_set = load_split(data_path, _split_of(model))
    if test_set is None:
        raise DataError("the model's split leaves no test rows")
    report = evaluate(model, test_set, scaler, train_set=train_set, train_time_s=_train_time(model_path))
    if output:
        report.save(output)
    return report


def compare_reports(report_paths, output_prefix=None) -> Comparison:
    comparison = compare([EvalReport.load(p) for p in report_paths])
    if output_prefix:
        comparison.write(output_prefix)
    return comparison


def fit_poly(data_path, method: str = "nnls", output=None) -> FitAllResult:
    result = fit_all(load_csv(data_path), method)
    if output:
        result.to_csv(output)
    return result


def run_benchmark(workdir, recipe: BenchmarkRecipe = BenchmarkRecipe(), epochs: dict | None = None) -> dict:
    """Seeded end-to-end run: data, three models, reports, comparison.

    Returns a dict with the reports per method and the comparison.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    epochs = {**DEFAULT_EPOCHS, **(epochs or {})}
    data = workdir / "data.csv"
    gen_data(data, recipe.n_designs, recipe.frequencies, recipe.data_seed)
    spec = SplitSpec(recipe.train_fraction, recipe.split_seed)

    reports = {}
    for method in METHODS:
        cfg = TrainConfig(
            epochs=epochs[method],
            seed=recipe.model_seed,
            lambda_penalty=recipe.lambda_penalty if method == "pdnn" else 0.0,
        )
        model_path = workdir / f"{method}.json"
        train_model(data, model_path, method, cfg, spec, recipe.fit_method, recipe.positivity)
        reports[method] = evaluate_model(model_path, data, workdir / f"{method}.report.json")
    comparison = compare_reports([workdir / f"{m}.report.json" for m in METHODS], workdir / "comparison")
    return {"reports": reports, "comparison": comparison, "data": data, "workdir": workdir}
