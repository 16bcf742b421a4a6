"""Semiparametric EMV model: macroeconomic regression in place of time effects.

Replacing the T free exogenous effects with J covariate regressors removes the
structural drift ambiguity, unless the covariates themselves can reproduce a
linear time trend - which is why the fit carries a collinearity diagnostic
(the R^2 of regressing t on the covariates) instead of silently trusting the
full-rank algebra.
"""

from __future__ import annotations

import csv
import io
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .design import EmvDesign, ParameterLayout
from .estimator import FitResult, _min_norm_wls
from .identify import ConstraintSpec, Decomposition, apply_constraint
from .panel import PanelGrid, ResponseTransform

__all__ = [
    "MacroError",
    "MacroPanel",
    "SemiparametricFit",
    "load_macro",
    "fit_semiparametric",
    "comparable_nonparametric",
    "log_series",
    "lag_series",
    "yoy_log_increase",
    "moving_average",
    "semiparametric_to_json_dict",
]

COLLINEARITY_WARN = 0.95


class MacroError(ValueError):
    """Raised for malformed or unusable macro covariate data."""


@dataclass(frozen=True)
class MacroPanel:
    """Named covariate matrix indexed by time, optionally extending beyond T."""

    times: np.ndarray
    names: tuple[str, ...]
    x: np.ndarray

    def __post_init__(self) -> None:
        self.times.setflags(write=False)
        self.x.setflags(write=False)
        if len(set(self.names)) != len(self.names):
            raise MacroError("covariate names must be unique")
        if self.x.shape != (self.times.size, len(self.names)):
            raise MacroError("covariate matrix shape does not match times/names")
        if self.times.size and not np.all(np.diff(self.times) == 1):
            raise MacroError("macro times must be consecutive integers")
        if not np.all(np.isfinite(self.x)):
            t = int(self.times[np.argwhere(~np.isfinite(self.x))[0][0]])
            raise MacroError(f"missing covariate value at time {t}")

    @property
    def n_covariates(self) -> int:
        return len(self.names)

    def rows_for_times(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times)
        missing = np.setdiff1d(times, self.times)
        if missing.size:
            raise MacroError(f"macro covariates missing for time {int(missing[0])}")
        return self.x[np.searchsorted(self.times, times), :]

    def to_csv(self) -> str:
        lines = ["time," + ",".join(self.names)]
        for i, t in enumerate(self.times):
            lines.append(f"{int(t)}," + ",".join(repr(float(v)) for v in self.x[i]))
        return "\n".join(lines) + "\n"


def load_macro(source) -> MacroPanel:
    """Read a macro panel from CSV text/path/stream with header ``time,<name1>,...``."""
    if isinstance(source, (str, os.PathLike)):
        if isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source, "r", encoding="utf-8") as fh:
                text = fh.read()
    elif hasattr(source, "read"):
        text = source.read()
    else:
        raise MacroError("macro source must be CSV text, a path, or a stream")
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MacroError("empty macro file") from None
    if not header or header[0].lower() != "time" or len(header) < 2:
        raise MacroError("expected header time,<name1>,... in macro CSV")
    names = tuple(header[1:])
    times, rows = [], []
    for n, row in enumerate(reader, start=2):
        if not row or all(f.strip() == "" for f in row):
            continue
        if len(row) != len(header):
            raise MacroError(f"row {n} has {len(row)} fields; expected {len(header)}")
        try:
            times.append(int(float(row[0])))
            rows.append([float(v) for v in row[1:]])
        except ValueError:
            raise MacroError(f"non-numeric entry in macro CSV row {n}") from None
    if not rows:
        raise MacroError("macro CSV has no data rows")
    order = np.argsort(times)
    return MacroPanel(
        times=np.asarray(times, dtype=int)[order],
        names=names,
        x=np.asarray(rows, dtype=float)[order],
    )


# ---------------------------------------------------------------------------
# Covariate construction helpers (applied during ingestion; the panel stores
# only realized columns so the model matrix stays auditable)

def log_series(values: np.ndarray) -> np.ndarray:
    return np.log(np.asarray(values, dtype=float))


def lag_series(values: np.ndarray, k: int) -> np.ndarray:
    """Shift forward by k periods; the first k entries become NaN."""
    v = np.asarray(values, dtype=float)
    out = np.full_like(v, np.nan)
    if k < v.size:
        out[k:] = v[: v.size - k]
    return out


def yoy_log_increase(values: np.ndarray, period: int = 12) -> np.ndarray:
    """Year-on-year increase in the log of a series (NaN for the first ``period`` entries)."""
    lv = log_series(values)
    return lv - lag_series(lv, period)


def moving_average(values: np.ndarray, k: int) -> np.ndarray:
    """Trailing k-period moving average (NaN until k observations accumulate)."""
    v = np.asarray(values, dtype=float)
    out = np.full_like(v, np.nan)
    if k <= v.size:
        kern = np.convolve(v, np.ones(k) / k, mode="valid")
        out[k - 1:] = kern
    return out


@dataclass(frozen=True)
class SemiparametricFit:
    """EMV fit with exogenous variation carried by macro covariates."""

    layout: ParameterLayout
    macro_names: tuple[str, ...]
    intercept: float
    maturity: np.ndarray
    vintage: np.ndarray
    macro_coefficients: np.ndarray
    implied_time_effects: np.ndarray
    r_squared: float
    residual_ss: float
    dof: int
    collinearity_diagnostic: float
    transform: ResponseTransform
    cells: np.ndarray
    fitted: np.ndarray

    def theta_at(self, ages: np.ndarray, times: np.ndarray, macros: MacroPanel) -> np.ndarray:
        ai = np.searchsorted(self.layout.ages, ages)
        vi = np.searchsorted(self.layout.vintages, np.asarray(times) - np.asarray(ages))
        e = macros.rows_for_times(np.asarray(times)) @ self.macro_coefficients
        return self.intercept + self.maturity[ai] + e + self.vintage[vi]


def _dependent_columns(mat: np.ndarray, names: list[str]) -> list[str]:
    dependent = []
    kept = np.empty((mat.shape[0], 0))
    for j, name in enumerate(names):
        col = mat[:, j : j + 1]
        if kept.shape[1]:
            coef, *_ = np.linalg.lstsq(kept, col, rcond=None)
            resid = col - kept @ coef
        else:
            resid = col
        if np.linalg.norm(resid) <= 1e-8 * max(1.0, np.linalg.norm(col)):
            dependent.append(name)
        else:
            kept = np.hstack([kept, col])
    return dependent


def fit_semiparametric(grid: PanelGrid, macros: MacroPanel, g: ResponseTransform | None = None) -> SemiparametricFit:
    """Weighted LS fit of intercept + maturity + vintage + macro regression.

    The maturity and vintage blocks are identified by the usual sum-to-zero
    convention; the macro coefficients need no constraint. A rank-deficient
    covariate matrix is rejected outright; near-reproduction of a linear time
    trend is only warned about, since the fit itself remains computable.
    """
    g = g or ResponseTransform()
    a_obs, t_obs = grid.observed_cells()
    v_obs = t_obs - a_obs
    ages = np.unique(a_obs)
    times = np.unique(t_obs)
    vintages = np.unique(v_obs)
    layout = ParameterLayout(ages=ages, times=times, vintages=vintages)

    x_window = macros.rows_for_times(times)
    with_const = np.hstack([np.ones((times.size, 1)), x_window])
    s = np.linalg.svd(with_const, compute_uv=False)
    if s[-1] <= 1e-10 * s[0]:
        dep = _dependent_columns(with_const, ["(intercept)"] + list(macros.names))
        raise MacroError(f"covariate matrix rank-deficient; dependent columns: {', '.join(dep)}")

    n = a_obs.size
    p = 1 + ages.size + vintages.size + macros.n_covariates
    X = np.zeros((n, p))
    X[:, 0] = 1.0
    rows = np.arange(n)
    X[rows, 1 + np.searchsorted(ages, a_obs)] = 1.0
    X[rows, 1 + ages.size + np.searchsorted(vintages, v_obs)] = 1.0
    X[:, 1 + ages.size + vintages.size :] = macros.rows_for_times(t_obs)

    i = a_obs - grid.ages[0]
    j = t_obs - grid.times[0]
    raw = grid.values[i, j].astype(float)
    w = grid.weights[i, j].astype(float)
    ok = g.domain_ok(raw)
    if not ok.all():
        kbad = int(np.argmax(~ok))
        raise MacroError(
            f"value {raw[kbad]!r} at cell (age={a_obs[kbad]}, time={t_obs[kbad]}) outside domain of {g.kind} transform"
        )
    y = g.apply(raw)
    beta, _, inv_s = _min_norm_wls(X, y, w)
    fitted = X @ beta
    rss = float(w @ (y - fitted) ** 2)
    ybar = float(w @ y / w.sum())
    tss = float(w @ (y - ybar) ** 2)
    r2 = 1.0 - rss / tss if tss > 0 else (1.0 if rss <= 1e-12 else 0.0)

    b0 = float(beta[0])
    bm = beta[1 : 1 + ages.size].copy()
    bv = beta[1 + ages.size : 1 + ages.size + vintages.size].copy()
    bj = beta[1 + ages.size + vintages.size :].copy()
    b0 += bm.mean() + bv.mean()
    bm -= bm.mean()
    bv -= bv.mean()

    # fit of a linear time trend on the covariates: 1.0 means the drift
    # ambiguity is back in practice even though the model is full rank
    tvec = times.astype(float)
    coef, *_ = np.linalg.lstsq(with_const, tvec, rcond=None)
    trend_resid = tvec - with_const @ coef
    trend_tss = float(((tvec - tvec.mean()) ** 2).sum())
    collin = 1.0 - float(trend_resid @ trend_resid) / trend_tss if trend_tss > 0 else 1.0
    collin = min(max(collin, 0.0), 1.0)
    if collin >= COLLINEARITY_WARN:
        warnings.warn(
            f"macro covariates reproduce a linear time trend (R^2={collin:.3f}); "
            "the drift split between effects is weakly identified",
            stacklevel=2,
        )

    implied = x_window @ bj
    return SemiparametricFit(
        layout=layout,
        macro_names=macros.names,
        intercept=b0,
        maturity=bm,
        vintage=bv,
        macro_coefficients=bj,
        implied_time_effects=implied,
        r_squared=r2,
        residual_ss=rss,
        dof=int(inv_s.size),
        collinearity_diagnostic=collin,
        transform=g,
        cells=np.column_stack([a_obs, t_obs]).astype(int),
        fitted=fitted,
    )


def comparable_nonparametric(np_fit: FitResult, design: EmvDesign, semi: SemiparametricFit) -> Decomposition:
    """Shift the nonparametric estimate so both exogenous series carry the same time drift.

    After the shift the OLS-on-t slope of the nonparametric exogenous effects
    equals that of the implied parametric effects, making the two curves
    directly comparable.
    """
    if not np.array_equal(design.layout.times, semi.layout.times):
        raise MacroError("time index mismatch between fits")
    spec = ConstraintSpec("match-parametric", reference=semi.implied_time_effects)
    return apply_constraint(np_fit, design, spec, include_se=True)


def semiparametric_to_json_dict(semi: SemiparametricFit) -> dict:
    return {
        "intercept": float(semi.intercept),
        "maturity": [
            {"age": int(a), "value": float(v)} for a, v in zip(semi.layout.ages, semi.maturity)
        ],
        "vintage": [
            {"vintage": int(v), "value": float(x)} for v, x in zip(semi.layout.vintages, semi.vintage)
        ],
        "macro_coefficients": [
            {"name": n, "value": float(v)} for n, v in zip(semi.macro_names, semi.macro_coefficients)
        ],
        "implied_time_effects": [
            {"time": int(t), "value": float(v)} for t, v in zip(semi.layout.times, semi.implied_time_effects)
        ],
        "diagnostics": {
            "r_squared": float(semi.r_squared),
            "residual_ss": float(semi.residual_ss),
            "dof": int(semi.dof),
            "collinearity_diagnostic": float(semi.collinearity_diagnostic),
            "transform": semi.transform.to_dict(),
        },
    }
