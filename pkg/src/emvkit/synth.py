"""Synthetic vintage panel generator with known ground truth.

Stands in for proprietary portfolio data in every test: the generated panel
comes back together with the exact decomposition that produced it, so fits
can be checked against truth (modulo the null direction) instead of against
eyeballed numbers. Deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design import ParameterLayout
from .identify import Decomposition
from .macro import MacroPanel
from .panel import PanelGrid

__all__ = [
    "GeneratorError",
    "MaturityShape",
    "ExogenousSource",
    "VintageSource",
    "GeneratorSpec",
    "TruthExtension",
    "SyntheticPanel",
    "generate",
]


class GeneratorError(ValueError):
    """Raised for invalid generator specifications."""


@dataclass(frozen=True)
class MaturityShape:
    """Saturating maturity curve amp*(1-exp(-a/tau)) with an optional linear tail."""

    amp: float = 0.5
    tau: float = 8.0
    tail_slope: float = 0.0
    tail_start: int = 0

    def raw(self, ages: np.ndarray) -> np.ndarray:
        a = np.asarray(ages, dtype=float)
        curve = self.amp * (1.0 - np.exp(-a / self.tau))
        return curve + self.tail_slope * np.clip(a - self.tail_start, 0.0, None)


@dataclass(frozen=True)
class ExogenousSource:
    """Calendar-time truth: an explicit series, the default recession-style bump,
    or a macro regression with the given coefficients."""

    kind: str = "bump"  # bump | explicit | macro
    series: np.ndarray | None = None
    coefficients: tuple[float, ...] = (0.08, -0.05)
    bump_amp: float = 0.15

    def __post_init__(self) -> None:
        if self.kind not in ("bump", "explicit", "macro"):
            raise GeneratorError(f"unknown exogenous source {self.kind!r}")
        if self.kind == "explicit" and self.series is None:
            raise GeneratorError("explicit exogenous source needs a series")


@dataclass(frozen=True)
class VintageSource:
    """Vintage truth: explicit values, iid normal, or a stationary AR(1) process."""

    kind: str = "iid"  # explicit | iid | ar1
    sigma2: float = 0.0155
    rho: float = 0.0
    values: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("explicit", "iid", "ar1"):
            raise GeneratorError(f"unknown vintage source {self.kind!r}")
        if self.sigma2 < 0:
            raise GeneratorError("vintage variance must be nonnegative")
        if not -1.0 < self.rho < 1.0:
            raise GeneratorError("AR(1) coefficient must satisfy |rho| < 1")
        if self.kind == "explicit" and self.values is None:
            raise GeneratorError("explicit vintage source needs values")


@dataclass(frozen=True)
class GeneratorSpec:
    A: int = 24
    T: int = 84
    beta0: float = 0.0
    maturity: MaturityShape = field(default_factory=MaturityShape)
    exogenous: ExogenousSource = field(default_factory=ExogenousSource)
    vintage: VintageSource = field(default_factory=VintageSource)
    noise_sd: float = 0.05
    missing_pattern: str = "bottom-left-triangle"  # rectangular | bottom-left-triangle | random
    missing_p: float = 0.3
    future_months: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.A < 1 or self.T < 2:
            raise GeneratorError("grid needs A >= 1 and T >= 2")
        if self.noise_sd < 0:
            raise GeneratorError("noise_sd must be nonnegative")
        if self.missing_pattern not in ("rectangular", "bottom-left-triangle", "random"):
            raise GeneratorError(f"unknown missing pattern {self.missing_pattern!r}")
        if not 0.0 <= self.missing_p < 1.0:
            raise GeneratorError("missing_p must be in [0, 1)")


@dataclass(frozen=True)
class TruthExtension:
    """Raw (uncentered) generating curves, extended past the observation window.

    theta for any cell, in or out of sample, is
    beta0 + maturity_raw[age] + exogenous_raw[time - 1] + vintage_raw[vintage - vintage_min].
    """

    beta0: float
    ages: np.ndarray
    maturity_raw: np.ndarray
    times: np.ndarray
    exogenous_raw: np.ndarray
    vintages: np.ndarray
    vintage_raw: np.ndarray

    def theta(self, ages: np.ndarray, times: np.ndarray) -> np.ndarray:
        a = np.asarray(ages)
        t = np.asarray(times)
        return (
            self.beta0
            + self.maturity_raw[np.searchsorted(self.ages, a)]
            + self.exogenous_raw[np.searchsorted(self.times, t)]
            + self.vintage_raw[np.searchsorted(self.vintages, t - a)]
        )


@dataclass(frozen=True)
class SyntheticPanel:
    grid: PanelGrid
    truth: Decomposition
    macro: MacroPanel | None
    extended: TruthExtension


def _macro_series(rng: np.random.Generator, n_cov: int, length: int) -> np.ndarray:
    """Smooth standardized AR(1) covariate paths."""
    x = np.empty((length, n_cov))
    for j in range(n_cov):
        e = rng.standard_normal(length)
        path = np.empty(length)
        path[0] = e[0]
        for t in range(1, length):
            path[t] = 0.9 * path[t - 1] + np.sqrt(1 - 0.9**2) * e[t]
        x[:, j] = (path - path.mean()) / max(path.std(), 1e-12)
    return x


def generate(spec: GeneratorSpec) -> SyntheticPanel:
    """Draw one panel: theta = beta0 + M(a) + E(t) + V(v), Y = theta + noise.

    Returns the grid, the ground-truth decomposition over the observed levels
    (blocks re-centered to zero mean, means folded into the intercept), the
    macro panel when the exogenous truth is macro-driven, and the raw curves
    extended ``future_months`` past T for forecast oracles.
    """
    rng = np.random.default_rng(spec.seed)
    t_total = spec.T + spec.future_months
    ages_full = np.arange(0, spec.A + 1)
    times_full = np.arange(1, t_total + 1)
    vmin = 1 - spec.A
    vintages_full = np.arange(vmin, t_total + 1)

    # extended far enough that any forecastable cell (old vintages aging past
    # A) has a defined true maturity value
    ages_ext = np.arange(0, spec.A + t_total + 1)
    m_raw_ext = spec.maturity.raw(ages_ext)
    m_raw = m_raw_ext[: spec.A + 1]

    macro = None
    if spec.exogenous.kind == "explicit":
        e_raw = np.asarray(spec.exogenous.series, dtype=float)
        if e_raw.size < t_total:
            raise GeneratorError(f"explicit exogenous series has {e_raw.size} entries; need {t_total}")
        e_raw = e_raw[:t_total].copy()
    elif spec.exogenous.kind == "macro":
        coefs = np.asarray(spec.exogenous.coefficients, dtype=float)
        x = _macro_series(rng, coefs.size, t_total)
        names = tuple(f"x{j + 1}" for j in range(coefs.size))
        macro = MacroPanel(times=times_full.copy(), names=names, x=x)
        e_raw = x @ coefs
    else:
        center = 0.7 * spec.T
        width = max(spec.T / 9.0, 2.0)
        bump = np.exp(-0.5 * ((times_full - center) / width) ** 2)
        e_raw = spec.exogenous.bump_amp * bump + 0.03 * np.sin(2 * np.pi * times_full / 12.0)

    if spec.vintage.kind == "explicit":
        v_raw = np.asarray(spec.vintage.values, dtype=float)
        if v_raw.size != vintages_full.size:
            raise GeneratorError(
                f"explicit vintage values have {v_raw.size} entries; need {vintages_full.size}"
            )
        v_raw = v_raw.copy()
    elif spec.vintage.kind == "iid":
        v_raw = np.sqrt(spec.vintage.sigma2) * rng.standard_normal(vintages_full.size)
    else:
        sd = np.sqrt(spec.vintage.sigma2)
        v_raw = np.empty(vintages_full.size)
        v_raw[0] = rng.normal(0.0, sd / np.sqrt(1.0 - spec.vintage.rho**2)) if sd > 0 else 0.0
        for i in range(1, v_raw.size):
            v_raw[i] = spec.vintage.rho * v_raw[i - 1] + rng.normal(0.0, sd)

    # observation mask over the fitting window t <= T
    mask = np.zeros((spec.A + 1, spec.T), dtype=bool)
    if spec.missing_pattern == "rectangular":
        mask[:] = True
    elif spec.missing_pattern == "bottom-left-triangle":
        a_grid = ages_full[:, None]
        t_grid = np.arange(1, spec.T + 1)[None, :]
        mask = t_grid > a_grid
    else:
        mask = rng.random((spec.A + 1, spec.T)) >= spec.missing_p
    if mask.sum() < 4:
        raise GeneratorError("missingness left fewer than 4 observed cells")

    theta = (
        spec.beta0
        + m_raw[:, None]
        + e_raw[None, : spec.T]
        + v_raw[np.searchsorted(vintages_full, np.arange(1, spec.T + 1)[None, :] - ages_full[:, None])]
    )
    noise = spec.noise_sd * rng.standard_normal(theta.shape) if spec.noise_sd > 0 else 0.0
    values = theta + noise

    grid = PanelGrid(
        ages=ages_full.copy(),
        times=np.arange(1, spec.T + 1),
        values=np.asarray(values),
        mask=mask,
        weights=np.ones_like(theta),
    )

    # ground truth restricted to observed levels, re-centered
    a_obs, t_obs = grid.observed_cells()
    lay = ParameterLayout(
        ages=np.unique(a_obs),
        times=np.unique(t_obs),
        vintages=np.unique(t_obs - a_obs),
    )
    tm = m_raw[np.searchsorted(ages_full, lay.ages)]
    te = e_raw[np.searchsorted(times_full, lay.times)]
    tv = v_raw[np.searchsorted(vintages_full, lay.vintages)]
    truth = Decomposition(
        layout=lay,
        intercept=spec.beta0 + tm.mean() + te.mean() + tv.mean(),
        maturity=tm - tm.mean(),
        exogenous=te - te.mean(),
        vintage=tv - tv.mean(),
        constraint=None,
    )
    extended = TruthExtension(
        beta0=spec.beta0,
        ages=ages_ext,
        maturity_raw=m_raw_ext,
        times=times_full,
        exogenous_raw=e_raw,
        vintages=vintages_full,
        vintage_raw=v_raw,
    )
    return SyntheticPanel(grid=grid, truth=truth, macro=macro, extended=extended)
