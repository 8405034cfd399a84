"""Accuracy/positivity metrics and the method comparison table."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ilsurrogate.data import CurveGroup, Dataset, DesignParams, MinMaxScaler
from ilsurrogate.errors import DataError

SCHEMA = "evalreport/1"
METHOD_ORDER = ("nn", "pdnn", "pdeeponet")
METHOD_LABELS = {"nn": "NN", "pdnn": "PDNN", "pdeeponet": "PDeepONet"}
COMPARE_COLUMNS = (
    "method",
    "train_mse",
    "train_time_s",
    "test_mse",
    "infer_time_s",
    "n_negative",
    "negative_rate",
    "min_prediction_db",
)

Timing = Union[float, tuple[float, float], None]


@dataclass(frozen=True)
class EvalReport:
    method: str
    train_mse: float | None
    test_mse: float
    train_time_s: Timing
    infer_time_s: Timing
    n_negative: int
    n_evaluations: int
    negative_rate: float
    min_prediction_db: float
    rmse_db: float | None = None

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "method": self.method,
            "train_mse": self.train_mse,
            "test_mse": self.test_mse,
            "train_time_s": _timing_to_json(self.train_time_s),
            "infer_time_s": _timing_to_json(self.infer_time_s),
            "n_negative": self.n_negative,
            "n_evaluations": self.n_evaluations,
            "negative_rate": self.negative_rate,
            "min_prediction_db": self.min_prediction_db,
            "rmse_db": self.rmse_db,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("schema") != SCHEMA:
            raise DataError(f"unsupported report schema {d.get('schema')!r}, expected {SCHEMA!r}")
        try:
            return cls(
                d["method"],
                d["train_mse"],
                d["test_mse"],
                _timing_from_json(d["train_time_s"]),
                _timing_from_json(d["infer_time_s"]),
                int(d["n_negative"]),
                int(d["n_evaluations"]),
                d["negative_rate"],
                d["min_prediction_db"],
                d.get("rmse_db"),
            )
        except KeyError as exc:
            raise DataError(f"report missing field {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EvalReport":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read report {path}: {exc}") from exc


def _timing_to_json(t: Timing):
    if isinstance(t, tuple):
        return {"stage1_s": t[0], "stage2_s": t[1], "total_s": t[0] + t[1]}
    return t


def _timing_from_json(v) -> Timing:
    if isinstance(v, dict):
        return (float(v["stage1_s"]), float(v["stage2_s"]))
    if isinstance(v, (list, tuple)):
        return (float(v[0]), float(v[1]))
    return None if v is None else float(v)


def _label_mse(scaler: MinMaxScaler, pred_db, true_db) -> float:
    r = scaler.transform_labels(pred_db) - scaler.transform_labels(true_db)
    return float(np.mean(r * r))


def evaluate(model, dataset: Dataset, scaler: MinMaxScaler, *, train_set: Dataset | None = None,
             train_time_s: Timing = None) -> EvalReport:
    """Score ``model`` on ``dataset`` (normally the test split).

    MSE is measured in the scaler's normalized label space; the negativity
    audit counts physical predictions strictly below 0 dB. Inference time
    covers the prediction call only, split into branch and polynomial
    stages for DeepONet models.
    """
    scaler.check_compatible(model.input_scaler)
    timings: list[float] = []
    pred = model.predict_rows(dataset.features, timings)
    infer: Timing = (timings[0], timings[1]) if len(timings) == 2 else timings[0]

    negative = pred < 0
    train_mse = None
    if train_set is not None:
        train_mse = _label_mse(scaler, model.predict_rows(train_set.features), train_set.labels)
    resid = pred - dataset.labels
    return EvalReport(
        method=model.method,
        train_mse=train_mse,
        test_mse=_label_mse(scaler, pred, dataset.labels),
        train_time_s=train_time_s,
        infer_time_s=infer,
        n_negative=int(negative.sum()),
        n_evaluations=len(pred),
        negative_rate=float(negative.sum()) / len(pred),
        min_prediction_db=float(pred.min()),
        rmse_db=float(np.sqrt(np.mean(resid * resid))),
    )


# comparison table ----------------------------------------------------------


def _order(reports: Sequence[EvalReport]) -> list[EvalReport]:
    rank = {m: i for i, m in enumerate(METHOD_ORDER)}
    return sorted(reports, key=lambda r: rank.get(r.method, len(rank)))


def _fmt_time(t: float) -> str:
    return f"{t:.2f}" if t >= 1 else f"{t:.3f}"


def format_timing(t: Timing) -> str:
    if t is None:
        return "-"
    if isinstance(t, tuple):
        return f"{_fmt_time(t[0])}+{_fmt_time(t[1])} = {_fmt_time(t[0] + t[1])}"
    return _fmt_time(t)


def _fmt_mse(v) -> str:
    return "-" if v is None else f"{v:#.3g}"


def render_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text table: training MSE/time, test MSE/time, positivity audit."""
    rows = [
        (
            METHOD_LABELS.get(r.method, r.method),
            _fmt_mse(r.train_mse),
            format_timing(r.train_time_s),
            _fmt_mse(r.test_mse),
            format_timing(r.infer_time_s),
            str(r.n_negative),
            f"{r.negative_rate:.4g}",
            f"{r.min_prediction_db:.4g}",
        )
        for r in _order(reports)
    ]
    head = ("", "MSE", "Time (s)", "MSE", "Time (s)", "Negatives", "Neg. rate", "Min IL (dB)")
    widths = [max(len(row[i]) for row in rows + [head]) for i in range(len(head))]

    def line(cells):
        parts = [cells[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return " | ".join(parts)

    train_w = widths[1] + widths[2] + 3
    test_w = widths[3] + widths[4] + 3
    pos_w = widths[5] + widths[6] + widths[7] + 6
    group = " | ".join(
        ["".ljust(widths[0]), "Training set".center(train_w), "Test set".center(test_w), "Test positivity".center(pos_w)]
    )
    out = [group, line(head), "=" * len(line(head))]
    out += [line(row) for row in rows]
    return "\n".join(out) + "\n"


def _csv_timing(t: Timing) -> str:
    if t is None:
        return ""
    if isinstance(t, tuple):
        return f"{t[0]!r}+{t[1]!r}"
    return repr(float(t))


def _parse_timing(cell: str) -> Timing:
    cell = cell.split("=")[0].strip()
    if not cell:
        return None
    for i in range(1, len(cell)):
        # a '+' after e/E is an exponent sign, not the stage separator
        if cell[i] == "+" and cell[i - 1] not in "eE":
            return (float(cell[:i]), float(cell[i + 1:]))
    return float(cell)


def _csv_float(v) -> str:
    return "" if v is None else repr(float(v))


def comparison_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COMPARE_COLUMNS)
    for r in _order(reports):
        writer.writerow(
            [
                r.method,
                _csv_float(r.train_mse),
                _csv_timing(r.train_time_s),
                _csv_float(r.test_mse),
                _csv_timing(r.infer_time_s),
                str(r.n_negative),
                _csv_float(r.negative_rate),
                _csv_float(r.min_prediction_db),
            ]
        )
    return buf.getvalue()


def parse_comparison_csv(text: str) -> list[dict]:
    """Parse :func:`comparison_csv` output back into typed field dicts."""
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    if header != COMPARE_COLUMNS:
        raise DataError(f"unexpected comparison header {header}")
    rows = []
    for cells in reader:
        d = dict(zip(header, cells))
        rows.append(
            {
                "method": d["method"],
                "train_mse": float(d["train_mse"]) if d["train_mse"] else None,
                "train_time_s": _parse_timing(d["train_time_s"]),
                "test_mse": float(d["test_mse"]),
                "infer_time_s": _parse_timing(d["infer_time_s"]),
                "n_negative": int(d["n_negative"]),
                "negative_rate": float(d["negative_rate"]),
                "min_prediction_db": float(d["min_prediction_db"]),
            }
        )
    return rows


@dataclass(frozen=True)
class Comparison:
    reports: tuple[EvalReport, ...]

    @property
    def text(self) -> str:
        return render_table(self.reports)

    @property
    def csv(self) -> str:
        return comparison_csv(self.reports)

    @property
    def json(self) -> str:
        return json.dumps({"schema": "comparison/1", "reports": [r.to_dict() for r in self.reports]}, indent=2) + "\n"

    def write(self, prefix) -> list[Path]:
        prefix = Path(prefix)
        paths = [prefix.with_suffix(s) for s in (".txt", ".csv", ".json")]
        for p, content in zip(paths, (self.text, self.csv, self.json)):
            p.write_text(content, encoding="utf-8")
        return paths


def compare(reports: Sequence[EvalReport]) -> Comparison:
    if not reports:
        raise ValueError("compare needs at least one report")
    return Comparison(tuple(_order(reports)))


# per-frequency profile -----------------------------------------------------


def frequency_profile(model, design: DesignParams, frequencies, truth: CurveGroup | None = None) -> str:
    """CSV of predictions across ``frequencies`` for one design.

    With ``truth`` given, a ``truth_db`` column is added (blank where the
    sweep has no point at that frequency).
    """
    freqs = np.asarray(frequencies, dtype=float).reshape(-1)
    if np.any(freqs < 0):
        raise ValueError("frequencies must be >= 0")
    rows = np.column_stack([np.tile(design.as_array(), (len(freqs), 1)), freqs])
    pred = model.predict_rows(rows)
    lookup = {}
    if truth is not None:
        lookup = dict(zip(truth.frequencies.tolist(), truth.insertion_loss.tolist()))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["frequency_ghz", "prediction_db"] + (["truth_db"] if truth is not None else []) + ["violation"]
    writer.writerow(header)
    for f, p in zip(freqs.tolist(), pred.tolist()):
        row = [repr(f), repr(p)]
        if truth is not None:
            row.append(repr(lookup[f]) if f in lookup else "")
        row.append("1" if p < 0 else "0")
        writer.writerow(row)
    return buf.getvalue()


def low_band_violations(model, dataset: Dataset, band_fraction: float = 0.1) -> tuple[int, float]:
    """Count negative predictions whose frequency lies in the lowest
    ``band_fraction`` of the dataset's frequency span; returns the count and
    the band's upper edge (GHz)."""
    f = dataset.frequencies
    edge = f.min() + band_fraction * (f.max() - f.min())
    pred = model.predict_rows(dataset.features)
    return int(np.sum((pred < 0) & (f <= edge))), float(edge)
