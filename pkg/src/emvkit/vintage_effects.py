"""Vintage effects as random effects: iid normal or stationary AR(1).

The exogenous block must already be identified (via a named constraint on the
nonparametric fit, or replaced by macro covariates) before vintage effects are
re-estimated: otherwise the drift ambiguity trades level between V and E and
the shrinkage target is meaningless. Variance components come from REML with
the residual variance profiled out analytically, a golden-section search on
the log variance ratio, and grid-then-refine on the AR(1) coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .design import ParameterLayout, build_design
from .estimator import EstimationError, fit_linear
from .identify import ConstraintSpec, Decomposition, apply_constraint
from .macro import MacroPanel
from .panel import PanelGrid, ResponseTransform

__all__ = [
    "VintageProcess",
    "RandomEffectsFit",
    "fit_random_effects",
    "predict_new_vintages",
    "random_effects_to_json_dict",
]

RHO_BOUND = 0.95
LOG_LAMBDA_RANGE = (-18.0, 28.0)
MIN_VINTAGES = 8


@dataclass(frozen=True)
class VintageProcess:
    """Stochastic specification of the vintage block."""

    kind: str  # fixed | iid-normal | ar1
    sigma2_v: float = 0.0
    rho: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "iid-normal", "ar1"):
            raise EstimationError(f"unknown vintage process kind {self.kind!r}")
        if self.sigma2_v < 0:
            raise EstimationError("vintage variance must be nonnegative")
        if not -1.0 < self.rho < 1.0:
            raise EstimationError("AR(1) coefficient must satisfy |rho| < 1 (stationarity)")


@dataclass(frozen=True)
class RandomEffectsFit:
    """Penalized EMV fit with a shrunk vintage block.

    ``decomposition`` carries the shrunk vintage effects (process-centered,
    not forced to zero sample mean), ``fixed_vintage`` the unpenalized
    per-vintage estimates given the same fixed effects, and the shrinkage
    report compares the distances of both from the conditional prior mean.
    """

    decomposition: Decomposition
    process: VintageProcess
    sigma2_resid: float
    fixed_vintage: np.ndarray
    conditional_means: np.ndarray
    shrinkage_ratio: np.ndarray
    cells_per_vintage: np.ndarray
    complete_shrinkage: bool
    reml_objective: float
    macro_names: tuple[str, ...] | None = None
    macro_coefficients: np.ndarray | None = None
    # mean implied exogenous level folded into the intercept (macro path only)
    exogenous_level: float = 0.0

    @property
    def vintages(self) -> np.ndarray:
        return self.decomposition.layout.vintages


# ---------------------------------------------------------------------------
# AR(1) covariance pieces

def _ar1_scaled_cov(levels: np.ndarray, rho: float) -> np.ndarray:
    """Stationary AR(1) covariance divided by the innovation variance."""
    gap = np.abs(levels[:, None] - levels[None, :]).astype(float)
    return rho**gap / (1.0 - rho**2)


def _process_matrices(levels: np.ndarray, rho: float) -> tuple[np.ndarray, float]:
    """(precision B = A^{-1}, log det A) for the scaled process covariance A."""
    q = levels.size
    if rho == 0.0:
        return np.eye(q), 0.0
    a = _ar1_scaled_cov(levels, rho)
    chol, low = cho_factor(a, lower=True)
    logdet_a = 2.0 * float(np.log(np.diag(chol)).sum())
    b = cho_solve((chol, low), np.eye(q))
    return 0.5 * (b + b.T), logdet_a


# ---------------------------------------------------------------------------
# Penalized least squares / profiled REML

@dataclass
class _MixedProblem:
    xtwx: np.ndarray
    xtwz: np.ndarray
    ztwz_diag: np.ndarray
    xtwy: np.ndarray
    ztwy: np.ndarray
    ytwy: float
    n: int
    p: int
    q: int


def _build_problem(xf: np.ndarray, z_index: np.ndarray, y: np.ndarray, w: np.ndarray, q: int) -> _MixedProblem:
    s = np.linalg.svd(xf, compute_uv=False)
    if s[-1] <= 1e-10 * s[0]:
        raise EstimationError("fixed-effect design is rank deficient; check macro covariates")
    wx = xf * w[:, None]
    xtwz = np.zeros((xf.shape[1], q))
    np.add.at(xtwz.T, z_index, wx)
    ztwz = np.bincount(z_index, weights=w, minlength=q)
    ztwy = np.bincount(z_index, weights=w * y, minlength=q)
    return _MixedProblem(
        xtwx=xf.T @ wx,
        xtwz=xtwz,
        ztwz_diag=ztwz,
        xtwy=wx.T @ y,
        ztwy=ztwy,
        ytwy=float(w @ y**2),
        n=y.size,
        p=xf.shape[1],
        q=q,
    )


def _solve_mixed(prob: _MixedProblem, lam: float, b_mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Solve the penalized normal equations; returns (beta_f, u, Q, logdet C)."""
    c = np.zeros((prob.p + prob.q, prob.p + prob.q))
    c[: prob.p, : prob.p] = prob.xtwx
    c[: prob.p, prob.p :] = prob.xtwz
    c[prob.p :, : prob.p] = prob.xtwz.T
    c[prob.p :, prob.p :] = lam * b_mat
    c[prob.p + np.arange(prob.q), prob.p + np.arange(prob.q)] += prob.ztwz_diag
    rhs = np.concatenate([prob.xtwy, prob.ztwy])
    chol, low = cho_factor(c, lower=True)
    sol = cho_solve((chol, low), rhs)
    logdet_c = 2.0 * float(np.log(np.diag(chol)).sum())
    quad = prob.ytwy - float(rhs @ sol)
    return sol[: prob.p], sol[prob.p :], quad, logdet_c


def _reml_objective(prob: _MixedProblem, lam: float, b_mat: np.ndarray, logdet_a: float) -> float:
    """-2 * restricted log-likelihood up to a constant, residual variance profiled out."""
    try:
        _, _, quad, logdet_c = _solve_mixed(prob, lam, b_mat)
    except np.linalg.LinAlgError:
        return math.inf
    if not quad > 0 or not math.isfinite(quad):
        return math.inf
    return (prob.n - prob.p) * math.log(quad) + logdet_a - prob.q * math.log(lam) + logdet_c


def _golden_min(f, lo: float, hi: float, tol: float = 1e-7) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _optimize_lambda(prob: _MixedProblem, b_mat: np.ndarray, logdet_a: float) -> tuple[float, float]:
    lo, hi = LOG_LAMBDA_RANGE
    grid = np.linspace(lo, hi, 24)
    vals = [_reml_objective(prob, math.exp(x), b_mat, logdet_a) for x in grid]
    if not any(math.isfinite(v) for v in vals):
        raise EstimationError(
            f"REML criterion non-finite on the whole variance grid; trace: "
            f"{[(float(x), v) for x, v in zip(grid, vals)]}"
        )
    i = int(np.argmin(vals))
    a = grid[max(0, i - 1)]
    b = grid[min(len(grid) - 1, i + 1)]
    x, fx = _golden_min(lambda t: _reml_objective(prob, math.exp(t), b_mat, logdet_a), a, b)
    return x, fx


def fit_random_effects(
    grid: PanelGrid,
    g: ResponseTransform | None,
    process_kind: str,
    exogenous_handling: ConstraintSpec | MacroPanel,
) -> RandomEffectsFit:
    """REML estimation of the vintage process plus BLUP-shrunk vintage effects.

    ``exogenous_handling`` is either a ConstraintSpec (the nonparametric time
    effects are identified by it first and then held fixed as an offset while
    intercept, maturity and vintage are re-estimated under the penalty) or a
    MacroPanel (time effects are carried by covariates, no constraint needed).
    """
    if process_kind not in ("iid-normal", "ar1"):
        raise EstimationError(f"process kind must be iid-normal or ar1, got {process_kind!r}")
    g = g or ResponseTransform()

    a_obs, t_obs = grid.observed_cells()
    v_obs = t_obs - a_obs
    vintages = np.unique(v_obs)
    if vintages.size < MIN_VINTAGES:
        raise EstimationError(
            f"random effects need at least {MIN_VINTAGES} observed vintages, got {vintages.size}"
        )
    ages = np.unique(a_obs)
    times = np.unique(t_obs)
    layout = ParameterLayout(ages=ages, times=times, vintages=vintages)

    i = a_obs - grid.ages[0]
    j = t_obs - grid.times[0]
    y = g.apply(grid.values[i, j].astype(float))
    w = grid.weights[i, j].astype(float)

    exo_values: np.ndarray
    macro_names = None
    macro_coefs = None
    constraint: ConstraintSpec | None = None
    n = y.size
    age_pos = np.searchsorted(ages, a_obs)
    z_index = np.searchsorted(vintages, v_obs)

    if isinstance(exogenous_handling, ConstraintSpec):
        constraint = exogenous_handling
        design = build_design(grid)
        base = fit_linear(design, grid, g)
        identified = apply_constraint(base, design, constraint)
        exo_values = identified.exogenous
        offset = exo_values[np.searchsorted(times, t_obs)]
        xf = np.zeros((n, ages.size))
        xf[:, 0] = 1.0
        nonzero = age_pos > 0
        xf[np.nonzero(nonzero)[0], age_pos[nonzero]] = 1.0
        y_work = y - offset
    elif isinstance(exogenous_handling, MacroPanel):
        macros = exogenous_handling
        x_cells = macros.rows_for_times(t_obs)
        xf = np.zeros((n, ages.size + macros.n_covariates))
        xf[:, 0] = 1.0
        nonzero = age_pos > 0
        xf[np.nonzero(nonzero)[0], age_pos[nonzero]] = 1.0
        xf[:, ages.size :] = x_cells
        macro_names = macros.names
        y_work = y
    else:
        raise EstimationError("exogenous_handling must be a ConstraintSpec or a MacroPanel")

    prob = _build_problem(xf, z_index, y_work, w, vintages.size)

    if process_kind == "iid-normal":
        b_mat, logdet_a = np.eye(vintages.size), 0.0
        log_lam, obj = _optimize_lambda(prob, b_mat, logdet_a)
        rho_hat = 0.0
    else:
        best = None
        for rho in np.linspace(-RHO_BOUND, RHO_BOUND, 39):
            b_mat, logdet_a = _process_matrices(vintages, float(rho))
            try:
                log_lam, obj = _optimize_lambda(prob, b_mat, logdet_a)
            except EstimationError:
                continue
            if best is None or obj < best[2]:
                best = (float(rho), log_lam, obj)
        if best is None:
            raise EstimationError("REML criterion non-finite for every AR(1) coefficient")
        step = 2 * RHO_BOUND / 38

        def rho_objective(rho: float) -> float:
            bm, la = _process_matrices(vintages, rho)
            try:
                _, val = _optimize_lambda(prob, bm, la)
            except EstimationError:
                return math.inf
            return val

        lo = max(-RHO_BOUND, best[0] - step)
        hi = min(RHO_BOUND, best[0] + step)
        rho_hat, obj = _golden_min(rho_objective, lo, hi, tol=1e-5)
        b_mat, logdet_a = _process_matrices(vintages, rho_hat)
        log_lam, obj = _optimize_lambda(prob, b_mat, logdet_a)

    lam = math.exp(log_lam)
    beta_f, u, quad, _ = _solve_mixed(prob, lam, b_mat)
    sigma2 = quad / (prob.n - prob.p)
    sigma2_v = sigma2 / lam
    complete = sigma2_v <= 1e-8 * max(sigma2, 1e-300) or log_lam >= LOG_LAMBDA_RANGE[1] - 0.5

    # unpenalized per-vintage estimate given the same fixed effects, and the
    # conditional prior mean at the shrunk values: u is a convex combination
    # of the two, which is exactly the borrowing-of-strength property
    bu = b_mat @ u
    d_v = prob.ztwz_diag
    fixed_v = u + lam * bu / d_v
    diag_b = np.diag(b_mat)
    cond_mean = u - bu / diag_b
    dist_sh = np.abs(u - cond_mean)
    dist_fx = np.abs(fixed_v - cond_mean)
    ratio = np.where(dist_fx > 1e-12, dist_sh / np.where(dist_fx > 1e-12, dist_fx, 1.0), 1.0)

    counts = np.bincount(z_index, minlength=vintages.size)

    # presentation: maturity re-centered, exogenous either the pinned block or
    # centered implied macro effects, vintage left at the BLUP values
    m_full = np.concatenate([[0.0], beta_f[1 : ages.size]])
    b0 = float(beta_f[0])
    exo_level = 0.0
    if macro_names is not None:
        macro_coefs = beta_f[ages.size :].copy()
        exo_raw = macros.rows_for_times(times) @ macro_coefs
        exo_level = float(exo_raw.mean())
        exo_values = exo_raw - exo_level
        b0 += exo_level
    b0 += float(m_full.mean())
    m_centered = m_full - m_full.mean()

    decomposition = Decomposition(
        layout=layout,
        intercept=b0,
        maturity=m_centered,
        exogenous=exo_values.copy(),
        vintage=u.copy(),
        constraint=constraint,
        gamma_applied=0.0,
    )
    return RandomEffectsFit(
        decomposition=decomposition,
        process=VintageProcess(kind=process_kind, sigma2_v=float(sigma2_v), rho=float(rho_hat)),
        sigma2_resid=float(sigma2),
        fixed_vintage=fixed_v,
        conditional_means=cond_mean,
        shrinkage_ratio=ratio,
        cells_per_vintage=counts,
        complete_shrinkage=bool(complete),
        reml_objective=float(obj),
        macro_names=macro_names,
        macro_coefficients=macro_coefs,
        exogenous_level=exo_level,
    )


def predict_new_vintages(fit: RandomEffectsFit, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Forecast effects for ``horizon`` future vintages with standard errors.

    iid: zero mean, se = sqrt(sigma2_v). AR(1): rho^h times the last shrunk
    effect, se from the stationary recursion sigma2_v (1 - rho^(2h)) / (1 - rho^2).
    """
    if horizon < 1:
        raise EstimationError("prediction horizon must be >= 1")
    proc = fit.process
    if proc.kind == "fixed":
        raise EstimationError("prediction requires a stochastic vintage process")
    h = np.arange(1, horizon + 1, dtype=float)
    if proc.kind == "iid-normal":
        return np.zeros(horizon), np.full(horizon, np.sqrt(proc.sigma2_v))
    last = float(fit.decomposition.vintage[-1])
    means = proc.rho**h * last
    ses = np.sqrt(proc.sigma2_v * (1.0 - proc.rho ** (2 * h)) / (1.0 - proc.rho**2))
    return means, ses


def random_effects_to_json_dict(fit: RandomEffectsFit) -> dict:
    from .identify import decomposition_to_json_dict

    payload = decomposition_to_json_dict(fit.decomposition)
    payload["process"] = {
        "kind": fit.process.kind,
        "sigma2_v": float(fit.process.sigma2_v),
        "rho": float(fit.process.rho),
    }
    payload["sigma2_resid"] = float(fit.sigma2_resid)
    payload["complete_shrinkage"] = bool(fit.complete_shrinkage)
    payload["shrinkage"] = [
        {
            "vintage": int(v),
            "ratio": float(r),
            "cells": int(c),
            "fixed_value": float(fx),
            "shrunk_value": float(sh),
        }
        for v, r, c, fx, sh in zip(
            fit.vintages, fit.shrinkage_ratio, fit.cells_per_vintage, fit.fixed_vintage, fit.decomposition.vintage
        )
    ]
    if fit.macro_names is not None:
        payload["macro_coefficients"] = [
            {"name": n, "value": float(v)} for n, v in zip(fit.macro_names, fit.macro_coefficients)
        ]
    return payload
