"""Dataset schema, CSV I/O, min-max scaling, splitting, curve grouping and
the synthetic insertion-loss generator.

Rows are stored column-wise in numpy arrays; :class:`Sample` and
:class:`DesignParams` are the per-row views.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ilsurrogate.errors import DataError, ScalerMismatchError

log = logging.getLogger(__name__)

DESIGN_COLUMNS = (
    "via_pitch_mm",
    "via_radius_mm",
    "antipad_radius_mm",
    "cavity_height_mm",
    "trace_length_mm",
    "permittivity",
    "loss_tangent",
)
FREQUENCY_COLUMN = "frequency_ghz"
LABEL_COLUMN = "insertion_loss_db"
INPUT_COLUMNS = DESIGN_COLUMNS + (FREQUENCY_COLUMN,)
CSV_COLUMNS = INPUT_COLUMNS + (LABEL_COLUMN,)

N_DESIGN = len(DESIGN_COLUMNS)
N_INPUT = len(INPUT_COLUMNS)

MIN_CURVE_POINTS = 4


@dataclass(frozen=True)
class DesignParams:
    """The seven geometry/material parameters of one interconnect design."""

    via_pitch: float
    via_radius: float
    antipad_radius: float
    cavity_height: float
    trace_length: float
    permittivity: float
    loss_tangent: float

    def __post_init__(self):
        problems = check_design_values(self.as_array())
        if problems:
            raise DataError("; ".join(problems))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "DesignParams":
        if len(values) != N_DESIGN:
            raise DataError(f"expected {N_DESIGN} design values, got {len(values)}")
        return cls(*(float(v) for v in values))


def check_design_values(values: np.ndarray) -> list[str]:
    """Return the violated invariants of a single design row (empty if valid)."""
    problems = []
    for name, v in zip(DESIGN_COLUMNS, values):
        if not math.isfinite(v):
            problems.append(f"{name} is not finite")
        elif name.endswith("_mm") and v <= 0:
            problems.append(f"{name} must be > 0, got {v!r}")
    if values[5] < 1:
        problems.append(f"permittivity must be >= 1, got {values[5]!r}")
    if values[6] < 0:
        problems.append(f"loss_tangent must be >= 0, got {values[6]!r}")
    return problems


@dataclass(frozen=True)
class Sample:
    params: DesignParams
    frequency: float
    insertion_loss: float


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered, immutable table of labeled rows.

    ``features`` has shape ``(n, 8)`` in :data:`INPUT_COLUMNS` order and
    ``labels`` holds insertion loss in dB.
    """

    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.labels, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[1] != N_INPUT:
            raise DataError(f"features must have shape (n, {N_INPUT}), got {X.shape}")
        if len(X) == 0:
            raise DataError("dataset is empty")
        if len(y) != len(X):
            raise DataError(f"{len(X)} feature rows but {len(y)} labels")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def designs(self) -> np.ndarray:
        return self.features[:, :N_DESIGN]

    @property
    def frequencies(self) -> np.ndarray:
        return self.features[:, N_DESIGN]

    @property
    def samples(self) -> list[Sample]:
        return [
            Sample(DesignParams.from_array(row[:N_DESIGN]), float(row[N_DESIGN]), float(il))
            for row, il in zip(self.features, self.labels)
        ]

    def subset(self, indices, name: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.features[idx], self.labels[idx], name or self.name)

    @classmethod
    def from_samples(cls, samples: Iterable[Sample], name: str = "dataset") -> "Dataset":
        rows, labels = [], []
        for s in samples:
            rows.append(np.append(s.params.as_array(), s.frequency))
            labels.append(s.insertion_loss)
        if not rows:
            raise DataError("dataset is empty")
        return cls(np.array(rows), np.array(labels), name)


def load_csv(path, name: str | None = None) -> Dataset:
    """Read a dataset CSV with the canonical header.

    Every problem is reported with its 1-based data row and column name.
    Negative insertion-loss labels are rejected since ground truth must be
    passive.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if tuple(header) != CSV_COLUMNS:
            missing = [c for c in CSV_COLUMNS if c not in header]
            extra = [c for c in header if c not in CSV_COLUMNS]
            detail = []
            if missing:
                detail.append(f"missing columns {missing}")
            if extra:
                detail.append(f"unexpected columns {extra}")
            if not detail:
                detail.append("columns out of order")
            raise DataError(f"{path}: bad header: " + ", ".join(detail))

        values = []
        for k, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_COLUMNS):
                raise DataError(f"{path}: row {k}: expected {len(CSV_COLUMNS)} cells, got {len(row)}")
            parsed = []
            for col, cell in zip(CSV_COLUMNS, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {k}, column {col}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {k}, column {col}: non-finite value {cell!r}")
                parsed.append(v)
            problems = check_design_values(np.array(parsed[:N_DESIGN]))
            if problems:
                raise DataError(f"{path}: row {k}: " + "; ".join(problems))
            if parsed[N_DESIGN] < 0:
                raise DataError(f"{path}: row {k}, column {FREQUENCY_COLUMN}: negative frequency")
            if parsed[-1] < 0:
                raise DataError(f"{path}: negative label at row {k} ({LABEL_COLUMN}={parsed[-1]!r})")
            values.append(parsed)

    if not values:
        raise DataError(f"{path}: no data rows")
    table = np.array(values)
    return Dataset(table[:, :N_INPUT], table[:, N_INPUT], name or path.stem)


def save_csv(dataset: Dataset, path) -> None:
    """Write ``dataset`` with shortest round-trip float formatting."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row, il in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(il))])


@dataclass(frozen=True, eq=False)
class MinMaxScaler:
    """Per-feature affine map of ``[min, max]`` onto ``[-1, 1]``."""

    feature_names: tuple[str, ...]
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.array(self.min, dtype=float).reshape(-1)
        hi = np.array(self.max, dtype=float).reshape(-1)
        names = tuple(self.feature_names)
        if not (len(names) == len(lo) == len(hi)):
            raise DataError("scaler names/min/max lengths differ")
        for name, a, b in zip(names, lo, hi):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise DataError(f"feature {name!r} has non-finite range")
            if not b > a:
                raise DataError(f"feature {name!r} is constant (min == max == {a!r}); cannot scale")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def fit(cls, values: np.ndarray, feature_names: Sequence[str]) -> "MinMaxScaler":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if len(values) == 0:
            raise DataError("cannot fit a scaler on zero rows")
        return cls(tuple(feature_names), values.min(axis=0), values.max(axis=0))

    def _cols(self, columns):
        if columns is None:
            return slice(None)
        if isinstance(columns, str):
            return self.feature_names.index(columns)
        return [self.feature_names.index(c) if isinstance(c, str) else c for c in columns]

    def transform(self, x, columns=None) -> np.ndarray:
        """Map physical values to [-1, 1]; ``columns`` selects a subset of features."""
        c = self._cols(columns)
        lo, hi = self.min[c], self.max[c]
        return 2.0 * (np.asarray(x, dtype=float) - lo) / (hi - lo) - 1.0

    def inverse_transform(self, z, columns=None) -> np.ndarray:
        c = self._cols(columns)
        lo, hi = self.min[c], self.max[c]
        return (np.asarray(z, dtype=float) + 1.0) / 2.0 * (hi - lo) + lo

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def zero_normalized(self, column) -> float:
        """Normalized image of the physical value 0 for ``column``."""
        return float(self.transform(0.0, column))

    @property
    def il_zero_normalized(self) -> float:
        return self.zero_normalized(LABEL_COLUMN)

    # dataset-scaler conveniences
    def transform_inputs(self, features) -> np.ndarray:
        return self.transform(features, list(INPUT_COLUMNS))

    def transform_labels(self, labels) -> np.ndarray:
        return self.transform(labels, LABEL_COLUMN)

    def inverse_labels(self, z) -> np.ndarray:
        return self.inverse_transform(z, LABEL_COLUMN)

    def check_compatible(self, other: "MinMaxScaler") -> None:
        if self.feature_names != other.feature_names:
            raise ScalerMismatchError(
                f"scaler feature names differ: {list(self.feature_names)} vs {list(other.feature_names)}"
            )

    def to_dict(self) -> dict:
        d = {"feature_names": list(self.feature_names), "min": self.min.tolist(), "max": self.max.tolist()}
        if LABEL_COLUMN in self.feature_names:
            d["il_zero_normalized"] = self.il_zero_normalized
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        try:
            return cls(tuple(d["feature_names"]), d["min"], d["max"])
        except KeyError as exc:
            raise DataError(f"scaler JSON missing key {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MinMaxScaler":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_scaler(dataset: Dataset) -> MinMaxScaler:
    """Fit the 8-input + 1-label scaler on ``dataset``'s extrema."""
    table = np.column_stack([dataset.features, dataset.labels])
    return MinMaxScaler.fit(table, CSV_COLUMNS)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train_fraction must be in (0, 1), got {self.train_fraction!r}")


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    n_train = int(math.floor(spec.train_fraction * n + 0.5))
    if n_train < 1:
        raise DataError(f"train fraction {spec.train_fraction} of {n} rows leaves no training rows")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return perm[:n_train], perm[n_train:]


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset | None]:
    """Seeded shuffle, then prefix cut; ``round(fraction * N)`` rows go to train.

    The test part is ``None`` when the cut leaves no rows for it.
    """
    train_idx, test_idx = split_indices(len(dataset), spec)
    train = dataset.subset(train_idx, f"{dataset.name}-train")
    test = dataset.subset(test_idx, f"{dataset.name}-test") if len(test_idx) else None
    return train, test


@dataclass(frozen=True, eq=False)
class CurveGroup:
    """One design's frequency sweep, sorted by strictly increasing frequency."""

    params: DesignParams
    frequencies: np.ndarray
    insertion_loss: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.frequencies.tolist(), self.insertion_loss.tolist()))

    def __len__(self) -> int:
        return len(self.frequencies)


def group_curves(dataset: Dataset) -> tuple[list[CurveGroup], list[str]]:
    """Group rows by bit-identical design parameters.

    Returns the retained groups, ordered by design values, and a list of
    warnings for groups that were excluded (too few points or repeated
    frequencies).
    """
    designs = np.ascontiguousarray(dataset.designs)
    buckets: dict[bytes, list[int]] = {}
    for i, row in enumerate(designs):
        buckets.setdefault(row.tobytes(), []).append(i)

    groups, warnings = [], []
    for key in sorted(buckets, key=lambda k: tuple(np.frombuffer(k, dtype=float))):
        idx = np.array(buckets[key])
        freqs = dataset.frequencies[idx]
        order = np.argsort(freqs, kind="stable")
        freqs, il = freqs[order], dataset.labels[idx][order]
        design = DesignParams.from_array(np.frombuffer(key, dtype=float))
        if len(idx) < MIN_CURVE_POINTS:
            warnings.append(f"design {design}: only {len(idx)} point(s), need {MIN_CURVE_POINTS}; excluded")
            continue
        if np.any(np.diff(freqs) <= 0):
            warnings.append(f"design {design}: repeated frequencies; excluded")
            continue
        groups.append(CurveGroup(design, freqs, il))
    for w in warnings:
        log.warning(w)
    return groups, warnings


# Synthetic generator -------------------------------------------------------

#: Uniform sampling ranges for each design parameter.
PARAM_RANGES = {
    "via_pitch_mm": (0.5, 1.5),
    "via_radius_mm": (0.1, 0.2),
    "antipad_radius_mm": (0.25, 0.5),
    "cavity_height_mm": (0.2, 1.0),
    "trace_length_mm": (10.0, 100.0),
    "permittivity": (3.0, 4.8),
    "loss_tangent": (0.001, 0.02),
}

#: conductor loss, dB / (mm * sqrt(GHz))
K_CONDUCTOR = 0.004
#: dielectric loss, dB / (mm * GHz); the usual 2.3 dB/inch factor per mm
K_DIELECTRIC = 0.0907
#: via/cavity discontinuity loss, dB / (mm * GHz^2)
K_VIA = 0.005

DEFAULT_NOISE_SD = 0.4


def insertion_loss_model(designs: np.ndarray, frequency) -> np.ndarray:
    """Noise-free synthetic insertion loss in dB.

    ``designs`` has shape ``(..., 7)``; ``frequency`` broadcasts against
    ``designs[..., 0]``.
    """
    d = np.asarray(designs, dtype=float)
    f = np.asarray(frequency, dtype=float)
    length, height = d[..., 4], d[..., 3]
    eps_r, tan_d = d[..., 5], d[..., 6]
    ratio = d[..., 1] / d[..., 2]
    return (
        length * (K_CONDUCTOR * np.sqrt(f) + K_DIELECTRIC * np.sqrt(eps_r) * tan_d * f)
        + K_VIA * height * ratio * f**2
    )


def generate_synthetic(
    n_designs: int,
    frequencies: Sequence[float],
    seed: int = 0,
    noise_sd: float = DEFAULT_NOISE_SD,
    name: str = "synthetic",
) -> Dataset:
    """Draw ``n_designs`` random designs and sweep each over ``frequencies``.

    Labels are ``max(0, IL + noise)`` with Gaussian noise of standard
    deviation ``noise_sd`` dB. Rows are ordered design-major.
    """
    if n_designs < 1:
        raise DataError(f"n_designs must be >= 1, got {n_designs}")
    freqs = np.asarray(frequencies, dtype=float).reshape(-1)
    if len(freqs) == 0:
        raise DataError("frequency list is empty")
    if np.any(~np.isfinite(freqs)) or np.any(freqs < 0):
        raise DataError("frequencies must be finite and >= 0")
    if noise_sd < 0:
        raise DataError("noise_sd must be >= 0")

    rng = np.random.default_rng(seed)
    lo = np.array([PARAM_RANGES[c][0] for c in DESIGN_COLUMNS])
    hi = np.array([PARAM_RANGES[c][1] for c in DESIGN_COLUMNS])
    designs = lo + (hi - lo) * rng.random((n_designs, N_DESIGN))
    noise = rng.normal(0.0, 1.0, size=(n_designs, len(freqs))) * noise_sd

    il = insertion_loss_model(designs[:, None, :], freqs[None, :]) + noise
    labels = np.maximum(il, 0.0).reshape(-1)
    features = np.column_stack([np.repeat(designs, len(freqs), axis=0), np.tile(freqs, n_designs)])
    return Dataset(features, labels, name)


def parse_frequency_grid(text: str) -> np.ndarray:
    """Parse ``start:stop:count`` (GHz, inclusive, linear) into an array."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"frequency grid must be start:stop:count, got {text!r}")
    start, stop = float(parts[0]), float(parts[1])
    count = int(parts[2])
    if count < 1:
        raise ValueError("frequency count must be >= 1")
    if count == 1 and start != stop:
        raise ValueError("a single-point grid needs start == stop")
    if start < 0 or stop < start:
        raise ValueError("need 0 <= start <= stop")
    return np.linspace(start, stop, count)
