"""Rank-deficient estimation: weighted least squares and IRLS on the EMV design.

The design matrix is structurally rank deficient, so every solver here returns
the minimum-norm solution of the normal equations via an SVD pseudoinverse
(singular values below 1e-10 * sigma_max are treated as zero). Fitted values
and any linear functional orthogonal to the null space are invariant to that
choice; named identifiability constraints are applied afterwards by
:mod:`emvkit.identify`, never by refitting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .design import EmvDesign, ParameterLayout
from .panel import PanelGrid, ResponseTransform

__all__ = [
    "EstimationError",
    "NonEstimableError",
    "CovFactor",
    "FitResult",
    "fit_linear",
    "fit_glm",
    "estimable_se",
    "fit_to_json",
    "fit_from_json",
]

PINV_RTOL = 1e-10
IRLS_TOL = 1e-10
IRLS_MAX_ITER = 50
DIVERGENCE_NORM = 1e6

FAMILIES = ("gaussian-identity", "poisson-log", "binomial-logit")


class EstimationError(ValueError):
    """Raised when fitting cannot proceed or fails to converge."""


class NonEstimableError(ValueError):
    """Raised when a linear functional has a component along the null direction."""


@dataclass(frozen=True)
class CovFactor:
    """Factorization sufficient for standard errors of estimable functions.

    ``basis`` holds the right singular vectors spanning the row space (p x r),
    ``inv_singular`` the reciprocals of the retained singular values, and
    ``dispersion`` the variance scale (sigma^2 for linear fits, 1 for
    poisson/binomial). Cov(beta_hat) = dispersion * basis diag(inv_singular^2) basis^T.
    """

    basis: np.ndarray
    inv_singular: np.ndarray
    dispersion: float

    def se(self, l: np.ndarray) -> float:
        proj = self.basis.T @ np.asarray(l, dtype=float)
        return float(np.sqrt(self.dispersion) * np.linalg.norm(self.inv_singular * proj))

    def row_space_residual(self, l: np.ndarray) -> float:
        l = np.asarray(l, dtype=float)
        return float(np.linalg.norm(l - self.basis @ (self.basis.T @ l)))


@dataclass(frozen=True)
class FitResult:
    """Minimum-norm fit of the EMV model on the transformed scale."""

    layout: ParameterLayout
    beta_hat: np.ndarray
    fitted: np.ndarray
    residual_ss: float
    r_squared: float
    dof: int
    cov_factor: CovFactor
    cells: np.ndarray
    transform: ResponseTransform
    family: str = "gaussian-identity"
    converged: bool = True
    iterations: int = 1

    @property
    def n_obs(self) -> int:
        return int(self.cells.shape[0])

    def null_vector(self) -> np.ndarray:
        return self.layout.null_vector()


def _extract_response(design: EmvDesign, grid: PanelGrid) -> tuple[np.ndarray, np.ndarray]:
    a_obs, t_obs = grid.observed_cells()
    if a_obs.size != design.n_rows or not (
        np.array_equal(a_obs, design.cells[:, 0]) and np.array_equal(t_obs, design.cells[:, 1])
    ):
        raise EstimationError("design/grid shape mismatch: design was built from a different grid")
    i = a_obs - grid.ages[0]
    j = t_obs - grid.times[0]
    return grid.values[i, j].astype(float), grid.weights[i, j].astype(float)


def _min_norm_wls(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum-norm solution of the weighted LS problem; returns (beta, basis, inv_singular)."""
    sw = np.sqrt(w)
    u, s, vt = np.linalg.svd(X * sw[:, None], full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise EstimationError("numerically zero design matrix")
    keep = s > PINV_RTOL * s[0]
    u, s, vt = u[:, keep], s[keep], vt[keep, :]
    beta = vt.T @ ((u.T @ (sw * y)) / s)
    return beta, vt.T, 1.0 / s


def fit_linear(design: EmvDesign, grid: PanelGrid, g: ResponseTransform | None = None) -> FitResult:
    """Weighted least squares of g(Y) on the EMV design.

    Returns the minimum-norm solution of the normal equations; r_squared is
    computed on the transformed scale with the grid weights.
    """
    g = g or ResponseTransform()
    raw, w = _extract_response(design, grid)
    ok = g.domain_ok(raw)
    if not ok.all():
        k = int(np.argmax(~ok))
        a, t = design.cells[k]
        raise EstimationError(
            f"value {raw[k]!r} at cell (age={a}, time={t}) outside domain of {g.kind} transform"
        )
    y = g.apply(raw)
    beta, basis, inv_s = _min_norm_wls(design.X, y, w)
    fitted = design.X @ beta
    resid = y - fitted
    rss = float(w @ resid**2)
    ybar = float(w @ y / w.sum())
    tss = float(w @ (y - ybar) ** 2)
    r2 = 1.0 - rss / tss if tss > 0 else (1.0 if rss <= 1e-12 else 0.0)
    rank = inv_s.size
    sigma2 = rss / (grid.n_observed - rank) if grid.n_observed > rank else 0.0
    return FitResult(
        layout=design.layout,
        beta_hat=beta,
        fitted=fitted,
        residual_ss=rss,
        r_squared=r2,
        dof=rank,
        cov_factor=CovFactor(basis=basis, inv_singular=inv_s, dispersion=sigma2),
        cells=design.cells,
        transform=g,
    )


# ---------------------------------------------------------------------------
# Generalized linear fitting (IRLS, minimum-norm step each iteration)

def _family_funcs(family: str):
    if family == "gaussian-identity":
        return (
            lambda eta: eta,                      # mean
            lambda mu: np.ones_like(mu),          # dmu/deta
            lambda mu: np.ones_like(mu),          # variance function
            lambda y, mu, w: float(w @ (y - mu) ** 2),
        )
    if family == "poisson-log":
        def dev(y, mu, w):
            with np.errstate(divide="ignore", invalid="ignore"):
                term = np.where(y > 0, y * np.log(y / mu), 0.0)
            return float(2.0 * w @ (term - (y - mu)))
        return (np.exp, lambda mu: mu, lambda mu: mu, dev)
    if family == "binomial-logit":
        def mean(eta):
            return 1.0 / (1.0 + np.exp(-eta))
        def dev(y, mu, w):
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = np.where(y > 0, y * np.log(y / mu), 0.0)
                t2 = np.where(y < 1, (1 - y) * np.log((1 - y) / (1 - mu)), 0.0)
            return float(2.0 * w @ (t1 + t2))
        return (mean, lambda mu: mu * (1 - mu), lambda mu: mu * (1 - mu), dev)
    raise EstimationError(f"unknown family {family!r}; expected one of {FAMILIES}")


def irls(
    X: np.ndarray,
    y: np.ndarray,
    family: str,
    prior_weights: np.ndarray | None = None,
    offset: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float, int, list[float]]:
    """Core IRLS loop with a minimum-norm step each iteration.

    Returns (beta, eta, basis, inv_singular of the final working LS, deviance,
    iterations, deviance trace). ``y`` is the count for poisson-log and the
    success proportion for binomial-logit (trials go in prior_weights).
    """
    mean_fn, dmu_fn, var_fn, dev_fn = _family_funcs(family)
    n = y.size
    w0 = np.ones(n) if prior_weights is None else np.asarray(prior_weights, dtype=float)
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)

    if family == "poisson-log":
        mu = np.clip(y, 0.0, None) + 0.5
    elif family == "binomial-logit":
        mu = (y * w0 + 0.5) / (w0 + 1.0)
    else:
        mu = y.copy()
    eta = np.log(mu) if family == "poisson-log" else (
        np.log(mu / (1 - mu)) if family == "binomial-logit" else mu.copy()
    )

    dev = dev_fn(y, mu, w0)
    trace = [dev]
    beta = np.zeros(X.shape[1])
    basis = inv_s = None
    for it in range(1, IRLS_MAX_ITER + 1):
        d = dmu_fn(mu)
        v = var_fn(mu)
        w_work = w0 * d**2 / np.clip(v, 1e-300, None)
        z = (eta - off) + (y - mu) / np.clip(d, 1e-300, None)
        beta, basis, inv_s = _min_norm_wls(X, z, w_work)
        if np.linalg.norm(beta) > DIVERGENCE_NORM:
            raise EstimationError(
                f"separation detected: coefficient norm exceeded {DIVERGENCE_NORM:.0e} "
                f"at iteration {it}; deviance trace {trace}"
            )
        eta = X @ beta + off
        mu = mean_fn(eta)
        if family == "binomial-logit":
            mu = np.clip(mu, 1e-12, 1 - 1e-12)
        new_dev = dev_fn(y, mu, w0)
        trace.append(new_dev)
        if family == "gaussian-identity":
            return beta, eta, basis, inv_s, new_dev, it, trace
        if abs(new_dev - dev) <= IRLS_TOL * (abs(dev) + 0.1):
            return beta, eta, basis, inv_s, new_dev, it, trace
        dev = new_dev
    raise EstimationError(
        f"IRLS failed to converge in {IRLS_MAX_ITER} iterations; deviance trace {trace}"
    )


def fit_glm(
    design: EmvDesign,
    grid: PanelGrid,
    family: str,
    offset: np.ndarray | None = None,
) -> FitResult:
    """Generalized linear EMV fit.

    poisson-log: grid values are nonnegative counts, weights act as prior
    weights, ``offset`` (per observed cell, design row order or full grid
    shape) typically holds log exposure. binomial-logit: values are success
    counts with trials in the weights.
    """
    raw, w = _extract_response(design, grid)
    if offset is not None:
        offset = np.asarray(offset, dtype=float)
        if offset.shape == grid.values.shape:
            a_obs, t_obs = grid.observed_cells()
            offset = offset[a_obs - grid.ages[0], t_obs - grid.times[0]]
        elif offset.shape != raw.shape:
            raise EstimationError("offset must align with observed cells")

    if family == "poisson-log":
        if (raw < 0).any():
            raise EstimationError("poisson responses must be nonnegative counts")
        y, w0 = raw, w
    elif family == "binomial-logit":
        if (raw < 0).any() or (raw > w).any():
            raise EstimationError("binomial successes must satisfy 0 <= successes <= trials (weights)")
        y, w0 = raw / w, w
    elif family == "gaussian-identity":
        y, w0 = raw, w
    else:
        raise EstimationError(f"unknown family {family!r}; expected one of {FAMILIES}")

    beta, eta, basis, inv_s, dev, iters, _ = irls(design.X, y, family, prior_weights=w0, offset=offset)

    mean_fn, _, _, dev_fn = _family_funcs(family)
    mu0 = np.full_like(y, float(w0 @ y / w0.sum()))
    null_dev = dev_fn(y, mu0, w0)
    r2 = 1.0 - dev / null_dev if null_dev > 0 else (1.0 if dev <= 1e-12 else 0.0)
    rank = inv_s.size
    if family == "gaussian-identity":
        dispersion = dev / (y.size - rank) if y.size > rank else 0.0
    else:
        dispersion = 1.0
    return FitResult(
        layout=design.layout,
        beta_hat=beta,
        fitted=eta,
        residual_ss=dev,
        r_squared=r2,
        dof=rank,
        cov_factor=CovFactor(basis=basis, inv_singular=inv_s, dispersion=dispersion),
        cells=design.cells,
        transform=ResponseTransform("identity"),
        family=family,
        converged=True,
        iterations=iters,
    )


def estimable_se(fit: FitResult, l: np.ndarray, tol: float = 1e-8) -> float:
    """Standard error of the estimable function l^T beta.

    ``l`` must be orthogonal to the null direction c (and to the rest of the
    design null space); otherwise the function depends on the arbitrary
    identifiability constraint and has no unique estimator.
    """
    l = np.asarray(l, dtype=float)
    if l.shape != (fit.layout.size,):
        raise NonEstimableError(f"functional has length {l.size}, layout has {fit.layout.size} parameters")
    c = fit.null_vector()
    scale = np.linalg.norm(l) * np.linalg.norm(c)
    if scale == 0:
        raise NonEstimableError("zero functional")
    if abs(float(l @ c)) > tol * scale:
        raise NonEstimableError("function not estimable: component along null direction")
    if fit.cov_factor.row_space_residual(l) > tol * np.linalg.norm(l):
        raise NonEstimableError("function not estimable: component along null direction")
    return fit.cov_factor.se(l)


# ---------------------------------------------------------------------------
# Serialization

def fit_to_json(fit: FitResult) -> str:
    b0, bm, be, bv = fit.layout.split(fit.beta_hat)
    payload = {
        "layout": fit.layout.to_dict(),
        "beta": {
            "intercept": b0,
            "maturity": [{"age": int(a), "value": float(x)} for a, x in zip(fit.layout.ages, bm)],
            "exogenous": [{"time": int(t), "value": float(x)} for t, x in zip(fit.layout.times, be)],
            "vintage": [{"vintage": int(v), "value": float(x)} for v, x in zip(fit.layout.vintages, bv)],
        },
        "diagnostics": {
            "family": fit.family,
            "transform": fit.transform.to_dict(),
            "n_obs": fit.n_obs,
            "dof": fit.dof,
            "residual_ss": float(fit.residual_ss),
            "r_squared": float(fit.r_squared),
            "dispersion": float(fit.cov_factor.dispersion),
            "iterations": fit.iterations,
        },
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def fit_from_json(text: str) -> tuple[ParameterLayout, np.ndarray, dict]:
    """Rebuild (layout, beta_hat, diagnostics) from a saved fit.

    Enough to re-identify a decomposition; covariance information is not
    persisted, so standard errors require a live fit.
    """
    payload = json.loads(text)
    layout = ParameterLayout.from_dict(payload["layout"])
    beta = layout.join(
        float(payload["beta"]["intercept"]),
        np.array([e["value"] for e in payload["beta"]["maturity"]], dtype=float),
        np.array([e["value"] for e in payload["beta"]["exogenous"]], dtype=float),
        np.array([e["value"] for e in payload["beta"]["vintage"]], dtype=float),
    )
    return layout, beta, payload.get("diagnostics", {})
