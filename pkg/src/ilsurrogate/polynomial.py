"""Cubic insertion-loss model ``IL(w) = a*w + b*w**2 + c*w**3`` and its
per-curve least-squares fits.

There is no intercept, so every fitted curve passes through 0 dB at DC.
With ``a, b, c >= 0`` the polynomial is non-negative on ``w >= 0``, which
is why the constrained (NNLS) fit is the default.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from ilsurrogate.data import DESIGN_COLUMNS, CurveGroup, Dataset, DesignParams, group_curves
from ilsurrogate.errors import FitError

log = logging.getLogger(__name__)

FIT_METHODS = ("ols", "nnls")
COEFF_NAMES = ("a", "b", "c")
COEFF_CSV_COLUMNS = DESIGN_COLUMNS + COEFF_NAMES + ("max_abs_residual_db",)
DEFAULT_WARN_RESIDUAL_DB = 0.5


@dataclass(frozen=True)
class PolyCoeffs:
    a: float
    b: float
    c: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])

    @classmethod
    def from_array(cls, values) -> "PolyCoeffs":
        a, b, c = (float(v) for v in values)
        return cls(a, b, c)


@dataclass(frozen=True)
class PolyFitReport:
    coeffs: PolyCoeffs
    max_abs_residual: float
    rms_residual: float
    n_points: int
    method: str


def power_series(frequency) -> np.ndarray:
    """``(w, w**2, w**3)`` along a trailing axis of length 3."""
    w = np.asarray(frequency, dtype=float)
    if np.any(w < 0):
        raise ValueError("frequency must be >= 0")
    return np.stack([w, w * w, w * w * w], axis=-1)


def eval_poly(coeffs, frequency):
    """Evaluate the cubic at ``frequency``.

    ``coeffs`` may be a :class:`PolyCoeffs` or an array whose last axis holds
    ``(a, b, c)``; it broadcasts against ``frequency``.
    """
    if isinstance(coeffs, PolyCoeffs):
        coeffs = coeffs.as_array()
    coeffs = np.asarray(coeffs, dtype=float)
    w = np.asarray(frequency, dtype=float)
    if np.any(w < 0):
        raise ValueError("frequency must be >= 0")
    a, b, c = coeffs[..., 0], coeffs[..., 1], coeffs[..., 2]
    # Horner form; exactly 0 at w = 0
    result = w * (a + w * (b + w * c))
    return float(result) if result.ndim == 0 else result


def _design_matrix(curve: CurveGroup) -> tuple[np.ndarray, np.ndarray]:
    if len(curve) < 4:
        raise FitError(f"need at least 4 points for a cubic fit, got {len(curve)}")
    return power_series(curve.frequencies), np.asarray(curve.insertion_loss, dtype=float)


def _column_scales(A: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise FitError("rank-deficient design: a power-series column is identically zero (all frequencies 0?)")
    return norms


def _qr_lstsq(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least squares through a reduced QR; ``A`` must have full column rank."""
    q, r = np.linalg.qr(A, mode="reduced")
    diag = np.abs(np.diag(r))
    if diag.min() <= max(A.shape) * np.finfo(float).eps * diag.max():
        raise FitError("rank-deficient design matrix (need at least 3 distinct non-zero frequencies)")
    return solve_triangular(r, q.T @ b)


def nnls(A, b, max_iter=None) -> np.ndarray:
    """Lawson-Hanson active-set solution of ``min ||Ax - b||, x >= 0``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    max_iter = 3 * n if max_iter is None else max_iter
    tol = 10 * np.finfo(float).eps * max(m, n) * max(1.0, np.abs(b).max(initial=0.0)) * max(
        1.0, np.abs(A).max(initial=0.0)
    )

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ (b - A @ x)
    outer = 0
    while not passive.all() and np.max(np.where(passive, -np.inf, w)) > tol:
        outer += 1
        if outer > max_iter:
            log.warning("nnls: outer iteration limit reached")
            break
        j = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[j] = True
        first = True
        while True:
            s = np.zeros(n)
            s[passive] = _qr_lstsq(A[:, passive], b)
            if first and s[j] <= 0:
                # rounding made the entering variable useless; current x is optimal to working precision
                passive[j] = False
                return x
            first = False
            if np.all(s[passive] > 0):
                x = s
                break
            # step back toward x until the first passive variable hits zero
            blocking = passive & (s <= 0)
            alpha = np.min(x[blocking] / (x[blocking] - s[blocking]))
            x = x + alpha * (s - x)
            passive &= x > tol
            x[~passive] = 0.0
            if not passive.any():
                break
        w = A.T @ (b - A @ x)
    return x


def _report(A, y, coeffs, method) -> PolyFitReport:
    resid = y - A @ coeffs
    return PolyFitReport(
        PolyCoeffs.from_array(coeffs),
        float(np.max(np.abs(resid))),
        float(np.sqrt(np.mean(resid * resid))),
        len(y),
        method,
    )


def fit_ols(curve: CurveGroup) -> PolyFitReport:
    """Unconstrained least-squares cubic (no intercept) via QR."""
    A, y = _design_matrix(curve)
    scale = _column_scales(A)
    coeffs = _qr_lstsq(A / scale, y) / scale
    return _report(A, y, coeffs, "ols")


def fit_nnls(curve: CurveGroup) -> PolyFitReport:
    """Least-squares cubic with ``a, b, c >= 0``."""
    A, y = _design_matrix(curve)
    scale = _column_scales(A)
    _qr_lstsq(A / scale, y)  # rank check shared with the OLS path
    coeffs = nnls(A / scale, y) / scale
    return _report(A, y, coeffs, "nnls")


def fit_curve(curve: CurveGroup, method: str = "nnls") -> PolyFitReport:
    if method == "ols":
        return fit_ols(curve)
    if method == "nnls":
        return fit_nnls(curve)
    raise ValueError(f"unknown fit method {method!r}; choose from {FIT_METHODS}")


@dataclass
class FitAllResult:
    fits: list[tuple[DesignParams, PolyFitReport]]
    method: str
    failures: list[str] = field(default_factory=list)
    group_warnings: list[str] = field(default_factory=list)
    poor_fits: list[str] = field(default_factory=list)

    @property
    def max_epsilon(self) -> float:
        """Largest per-curve max-abs residual (dB)."""
        return max(r.max_abs_residual for _, r in self.fits)

    @property
    def designs(self) -> np.ndarray:
        return np.array([p.as_array() for p, _ in self.fits])

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([r.coeffs.as_array() for _, r in self.fits])

    def table(self) -> np.ndarray:
        eps = np.array([[r.max_abs_residual] for _, r in self.fits])
        return np.hstack([self.designs, self.coefficients, eps])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(COEFF_CSV_COLUMNS)
            for row in self.table():
                writer.writerow([repr(float(v)) for v in row])


def fit_all(dataset: Dataset, method: str = "nnls", warn_residual_db: float = DEFAULT_WARN_RESIDUAL_DB) -> FitAllResult:
    """Fit every frequency sweep in ``dataset``.

    Failed curves are listed in ``failures``; the rest are still returned.
    Curves whose max residual exceeds ``warn_residual_db`` are flagged in
    ``poor_fits`` but kept.
    """
    if method not in FIT_METHODS:
        raise ValueError(f"unknown fit method {method!r}; choose from {FIT_METHODS}")
    groups, group_warnings = group_curves(dataset)
    result = FitAllResult([], method, group_warnings=group_warnings)
    for curve in groups:
        try:
            report = fit_curve(curve, method)
        except FitError as exc:
            result.failures.append(f"design {curve.params}: {exc}")
            continue
        if report.max_abs_residual > warn_residual_db:
            result.poor_fits.append(
                f"design {curve.params}: max residual {report.max_abs_residual:.3g} dB > {warn_residual_db} dB"
            )
        result.fits.append((curve.params, report))
    if not result.fits:
        detail = "; ".join(result.failures[:3])
        raise FitError("no fittable curves" + (f" ({detail})" if detail else ""))
    for msg in result.failures:
        log.warning(msg)
    if result.poor_fits:
        log.warning("%d curve(s) exceed the %.3g dB residual threshold", len(result.poor_fits), warn_residual_db)
    return result
