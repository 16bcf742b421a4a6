"""Forward projection of the panel: extrapolated maturity, projected exogenous
effects and projected vintage effects composed additively.

Forecasting is only defined for an identified object - a constrained
Decomposition, a semiparametric fit, or a random-effects fit. A raw
minimum-norm FitResult is refused: equivalent representations that fit the
data identically extrapolate differently, so the analyst has to pick the
constraint before projecting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .estimator import FitResult
from .identify import Decomposition
from .macro import MacroPanel
from .panel import PanelGrid, ResponseTransform
from .vintage_effects import RandomEffectsFit, predict_new_vintages
from .macro import SemiparametricFit

__all__ = ["ForecastError", "ForecastSpec", "ForecastResult", "forecast", "extrapolate_maturity"]


class ForecastError(ValueError):
    """Raised for unusable forecast requests."""


@dataclass(frozen=True)
class ForecastSpec:
    """What to project and how.

    maturity_tail: 'hold-last' or 'straight-line' (OLS line through the
    maturity effects above a_star). vintage_mode: 'recent-level' (mean of the
    last ``vintage_window`` observed effects), 'ar1-process' (decay from the
    last shrunk effect; needs an AR(1) random-effects fit) or
    'business-override' (explicit per-vintage values). Future exogenous
    levels come from macro_future for macro-driven fits, from
    exogenous_future when given, else the mean of the last three observed
    time effects.
    """

    horizon_months: int = 12
    maturity_tail: str = "straight-line"
    a_star: int = 60
    vintage_mode: str = "recent-level"
    vintage_window: int = 18
    vintage_override: dict[int, float] | None = None
    macro_future: MacroPanel | None = None
    exogenous_future: np.ndarray | None = None
    original_scale: bool = False

    def __post_init__(self) -> None:
        if self.horizon_months < 0:
            raise ForecastError("forecast horizon must be >= 0")
        if self.maturity_tail not in ("hold-last", "straight-line"):
            raise ForecastError(f"unknown maturity tail rule {self.maturity_tail!r}")
        if self.vintage_mode not in ("recent-level", "ar1-process", "business-override"):
            raise ForecastError(f"unknown vintage mode {self.vintage_mode!r}")
        if self.vintage_mode == "recent-level" and self.vintage_window < 1:
            raise ForecastError("recent-level vintage mode needs a nonempty vintage window")

    def to_dict(self) -> dict:
        d = {
            "horizon_months": int(self.horizon_months),
            "maturity_tail": self.maturity_tail,
            "vintage_mode": self.vintage_mode,
            "original_scale": bool(self.original_scale),
        }
        if self.maturity_tail == "straight-line":
            d["a_star"] = int(self.a_star)
        if self.vintage_mode == "recent-level":
            d["vintage_window"] = int(self.vintage_window)
        if self.vintage_override is not None:
            d["vintage_override"] = {str(k): float(v) for k, v in sorted(self.vintage_override.items())}
        return d


@dataclass(frozen=True)
class ForecastResult:
    ages: np.ndarray
    times: np.ndarray
    vintages: np.ndarray
    theta: np.ndarray
    y: np.ndarray | None
    flags: list[str]
    spec: ForecastSpec

    def to_csv(self) -> str:
        cols = "age,time,vintage,theta_hat" + (",y_hat" if self.y is not None else "") + ",extrapolation"
        lines = [cols]
        for i in range(self.theta.size):
            row = f"{int(self.ages[i])},{int(self.times[i])},{int(self.vintages[i])},{float(self.theta[i])!r}"
            if self.y is not None:
                row += f",{float(self.y[i])!r}"
            row += f",{self.flags[i]}"
            lines.append(row)
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        rows = []
        for i in range(self.theta.size):
            r = {
                "age": int(self.ages[i]),
                "time": int(self.times[i]),
                "vintage": int(self.vintages[i]),
                "theta_hat": float(self.theta[i]),
                "extrapolation": self.flags[i],
            }
            if self.y is not None:
                r["y_hat"] = float(self.y[i])
            rows.append(r)
        return json.dumps({"spec": self.spec.to_dict(), "forecast": rows}, sort_keys=True, indent=2) + "\n"


def extrapolate_maturity(
    decomp: Decomposition, a_star: int, target_ages, mode: str = "straight-line"
) -> np.ndarray:
    """Maturity effects at ``target_ages`` beyond the observed range.

    straight-line fits an OLS line to the effects above a_star and continues
    it; hold-last repeats the last observed effect.
    """
    targets = np.asarray(target_ages, dtype=float)
    ages = decomp.layout.ages
    if mode == "hold-last":
        return np.full(targets.shape, float(decomp.maturity[-1]))
    if mode != "straight-line":
        raise ForecastError(f"unknown maturity tail rule {mode!r}")
    sel = ages > a_star
    if sel.sum() < 2:
        raise ForecastError(
            f"insufficient tail points: need >= 2 observed ages above A*={a_star}, got {int(sel.sum())}"
        )
    slope, intercept = np.polyfit(ages[sel].astype(float), decomp.maturity[sel], 1)
    return intercept + slope * targets


def _maturity_lookup(decomp: Decomposition, spec: ForecastSpec):
    ages = decomp.layout.ages.astype(float)
    vals = decomp.maturity

    def lookup(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = np.asarray(a, dtype=float)
        inside = a <= ages[-1]
        out = np.empty(a.shape)
        out[inside] = np.interp(a[inside], ages, vals)
        if (~inside).any():
            out[~inside] = extrapolate_maturity(decomp, spec.a_star, a[~inside], spec.maturity_tail)
        return out, ~inside

    return lookup


def _new_vintage_effects(
    decomp: Decomposition,
    spec: ForecastSpec,
    new_vintages: np.ndarray,
    re_fit: RandomEffectsFit | None,
) -> np.ndarray:
    if new_vintages.size == 0:
        return np.zeros(0)
    if spec.vintage_mode == "recent-level":
        window = decomp.vintage[-spec.vintage_window :]
        if window.size == 0:
            raise ForecastError("recent-level vintage mode needs a nonempty vintage window")
        return np.full(new_vintages.shape, float(window.mean()))
    if spec.vintage_mode == "ar1-process":
        if re_fit is None or re_fit.process.kind != "ar1":
            raise ForecastError("ar1-process vintage mode requires an AR(1) random-effects fit")
        horizon = int(new_vintages.max() - decomp.layout.vintages[-1])
        means, _ = predict_new_vintages(re_fit, horizon)
        return means[(new_vintages - decomp.layout.vintages[-1] - 1).astype(int)]
    override = spec.vintage_override or {}
    missing = [int(v) for v in new_vintages if int(v) not in override]
    if missing:
        raise ForecastError(f"business-override vintage mode is missing values for vintages {missing}")
    return np.array([override[int(v)] for v in new_vintages], dtype=float)


def forecast(
    fit: Decomposition | SemiparametricFit | RandomEffectsFit,
    spec: ForecastSpec,
    grid: PanelGrid | None = None,
    transform: ResponseTransform | None = None,
) -> ForecastResult:
    """Project theta for every vintage alive in months T+1 .. T+horizon.

    Rows cover all observed vintages plus the new ones originating inside the
    horizon; the ``extrapolation`` flag marks cells whose age, vintage or both
    fall outside the estimation window. With horizon 0 the observed cells are
    returned with their fitted values (requires ``grid`` unless the fit
    carries its own cells).
    """
    if isinstance(fit, FitResult):
        raise ForecastError(
            "refusing to forecast from an unidentified fit: apply an identifiability "
            "constraint (or fit the semiparametric model) first - equivalent representations "
            "extrapolate differently"
        )

    re_fit = fit if isinstance(fit, RandomEffectsFit) else None
    semi = fit if isinstance(fit, SemiparametricFit) else None
    if isinstance(fit, Decomposition):
        decomp = fit
    elif re_fit is not None:
        decomp = re_fit.decomposition
    elif semi is not None:
        # implied time effects are uncentered; fold their mean into the intercept
        implied_mean = float(semi.implied_time_effects.mean())
        decomp = Decomposition(
            layout=semi.layout,
            intercept=semi.intercept + implied_mean,
            maturity=semi.maturity,
            exogenous=semi.implied_time_effects - implied_mean,
            vintage=semi.vintage,
            constraint=None,
        )
    else:
        raise ForecastError(f"cannot forecast from object of type {type(fit).__name__}")

    if transform is None and semi is not None:
        transform = semi.transform

    t_max = int(decomp.layout.times[-1])
    h = spec.horizon_months

    if h == 0:
        if semi is not None:
            cells = semi.cells
            theta = semi.fitted.copy()
        elif grid is not None:
            a_obs, t_obs = grid.observed_cells()
            cells = np.column_stack([a_obs, t_obs])
            theta = decomp.theta_at(a_obs, t_obs)
        else:
            raise ForecastError("horizon 0 needs the observed grid to reproduce fitted values")
        y = transform.inverse(theta) if (spec.original_scale and transform is not None) else None
        return ForecastResult(
            ages=cells[:, 0].astype(int),
            times=cells[:, 1].astype(int),
            vintages=(cells[:, 1] - cells[:, 0]).astype(int),
            theta=theta,
            y=y,
            flags=[""] * theta.size,
            spec=spec,
        )

    v_obs = decomp.layout.vintages
    v_max = int(v_obs[-1])
    future_times = np.arange(t_max + 1, t_max + h + 1)

    # future exogenous levels
    if semi is not None or (re_fit is not None and re_fit.macro_names is not None):
        if spec.macro_future is None:
            raise ForecastError("macro-driven fits need macro_future covariate rows for the horizon")
        coefs = semi.macro_coefficients if semi is not None else re_fit.macro_coefficients
        e_future_raw = spec.macro_future.rows_for_times(future_times) @ coefs
        # the decompositions carry centered exogenous blocks with the mean
        # implied level folded into the intercept; future levels are relative
        # to that same mean
        level = float(semi.implied_time_effects.mean()) if semi is not None else re_fit.exogenous_level
        e_future = e_future_raw - level
    elif spec.exogenous_future is not None:
        e_future = np.asarray(spec.exogenous_future, dtype=float)
        if e_future.shape != (h,):
            raise ForecastError(f"exogenous_future must have {h} entries, got {e_future.size}")
    else:
        e_future = np.full(h, float(decomp.exogenous[-3:].mean()))

    new_vintages = np.arange(v_max + 1, t_max + h + 1)
    new_effects = _new_vintage_effects(decomp, spec, new_vintages, re_fit)

    maturity_at = _maturity_lookup(decomp, spec)

    all_v = np.concatenate([v_obs, new_vintages])
    all_v_effects = np.concatenate([decomp.vintage, new_effects])

    rows_a, rows_t, rows_v, rows_theta, flags = [], [], [], [], []
    for ti, t in enumerate(future_times):
        alive = all_v <= t
        v_here = all_v[alive]
        ages_here = t - v_here
        m_vals, age_flag = maturity_at(ages_here)
        theta_here = decomp.intercept + m_vals + e_future[ti] + all_v_effects[alive]
        new_flag = v_here > v_max
        for kk in range(v_here.size):
            fl = []
            if age_flag[kk]:
                fl.append("age")
            if new_flag[kk]:
                fl.append("vintage")
            flags.append("+".join(fl))
        rows_a.append(ages_here)
        rows_t.append(np.full(v_here.shape, t))
        rows_v.append(v_here)
        rows_theta.append(theta_here)

    ages = np.concatenate(rows_a).astype(int)
    times = np.concatenate(rows_t).astype(int)
    vintages = np.concatenate(rows_v).astype(int)
    theta = np.concatenate(rows_theta)
    y = transform.inverse(theta) if (spec.original_scale and transform is not None) else None
    return ForecastResult(ages=ages, times=times, vintages=vintages, theta=theta, y=y, flags=flags, spec=spec)
