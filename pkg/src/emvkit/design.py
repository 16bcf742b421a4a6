"""EMV model matrix, parameter layout and the structural null direction.

The model matrix has one row per observed cell and plain indicator columns
(one per observed age, time and vintage level) plus an intercept. Because
``v + a - t = 0`` holds in every row, the matrix annihilates the drift
direction c exactly: that single extra rank deficiency is what makes the
decomposition non-identified, and everything in :mod:`emvkit.identify` is a
shift along c.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import PanelGrid

__all__ = [
    "DesignError",
    "ParameterLayout",
    "EmvDesign",
    "build_design",
    "null_vector",
    "null_space_report",
    "design_to_csv",
]

# Xc = 0 is analytic; this bounds accumulated float rounding.
NULL_VECTOR_TOL = 1e-10


class DesignError(ValueError):
    """Raised when a usable EMV design cannot be built."""


@dataclass(frozen=True)
class ParameterLayout:
    """Ordered parameter blocks: intercept, age effects, time effects, vintage effects."""

    ages: np.ndarray
    times: np.ndarray
    vintages: np.ndarray

    def __post_init__(self) -> None:
        for name in ("ages", "times", "vintages"):
            getattr(self, name).setflags(write=False)

    @property
    def size(self) -> int:
        return 1 + self.ages.size + self.times.size + self.vintages.size

    @property
    def age_slice(self) -> slice:
        return slice(1, 1 + self.ages.size)

    @property
    def time_slice(self) -> slice:
        a = 1 + self.ages.size
        return slice(a, a + self.times.size)

    @property
    def vintage_slice(self) -> slice:
        a = 1 + self.ages.size + self.times.size
        return slice(a, a + self.vintages.size)

    def split(self, beta: np.ndarray) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
        beta = np.asarray(beta, dtype=float)
        return (
            float(beta[0]),
            beta[self.age_slice].copy(),
            beta[self.time_slice].copy(),
            beta[self.vintage_slice].copy(),
        )

    def join(self, b0: float, maturity: np.ndarray, exogenous: np.ndarray, vintage: np.ndarray) -> np.ndarray:
        return np.concatenate(([b0], maturity, exogenous, vintage))

    def level_means(self) -> tuple[float, float, float]:
        return (float(self.ages.mean()), float(self.times.mean()), float(self.vintages.mean()))

    def null_vector(self) -> np.ndarray:
        """Canonical drift direction c in this layout.

        Blocks are the level-centered indices (a - abar, -(t - tbar), v - vbar);
        the intercept entry abar - tbar + vbar makes c exact for any
        missingness pattern (it is zero whenever the level means cancel, e.g.
        on fully observed grids).
        """
        abar, tbar, vbar = self.level_means()
        return self.join(
            abar - tbar + vbar,
            self.ages - abar,
            -(self.times - tbar),
            self.vintages - vbar,
        )

    def to_dict(self) -> dict:
        return {
            "ages": [int(a) for a in self.ages],
            "times": [int(t) for t in self.times],
            "vintages": [int(v) for v in self.vintages],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterLayout":
        return cls(
            ages=np.asarray(d["ages"], dtype=int),
            times=np.asarray(d["times"], dtype=int),
            vintages=np.asarray(d["vintages"], dtype=int),
        )


@dataclass(frozen=True)
class EmvDesign:
    """Model matrix plus layout for one PanelGrid.

    ``X`` has one row per observed cell (row-major cell order) and columns
    following ``layout``; ``cells`` records (age, time) per row; ``c`` is the
    verified null vector.
    """

    layout: ParameterLayout
    X: np.ndarray
    c: np.ndarray
    cells: np.ndarray  # shape (n, 2): age, time per row

    def __post_init__(self) -> None:
        self.X.setflags(write=False)
        self.c.setflags(write=False)
        self.cells.setflags(write=False)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_columns(self) -> int:
        return self.X.shape[1]

    def row_vintages(self) -> np.ndarray:
        return self.cells[:, 1] - self.cells[:, 0]


def build_design(grid: PanelGrid) -> EmvDesign:
    """Assemble the EMV model matrix for the observed cells of ``grid``.

    Levels with zero observations are dropped from the layout so the only
    rank deficiencies are the structural ones.
    """
    if grid.n_observed < 4:
        raise DesignError("insufficient data for EMV decomposition")
    a_obs, t_obs = grid.observed_cells()
    v_obs = t_obs - a_obs
    ages = np.unique(a_obs)
    times = np.unique(t_obs)
    vintages = np.unique(v_obs)
    layout = ParameterLayout(ages=ages, times=times, vintages=vintages)

    n = a_obs.size
    X = np.zeros((n, layout.size))
    X[:, 0] = 1.0
    rows = np.arange(n)
    X[rows, 1 + np.searchsorted(ages, a_obs)] = 1.0
    X[rows, layout.time_slice.start + np.searchsorted(times, t_obs)] = 1.0
    X[rows, layout.vintage_slice.start + np.searchsorted(vintages, v_obs)] = 1.0

    c = layout.null_vector()
    _verify_null(X, c)
    cells = np.column_stack([a_obs, t_obs]).astype(int)
    return EmvDesign(layout=layout, X=X, c=c, cells=cells)


def _verify_null(X: np.ndarray, c: np.ndarray) -> None:
    resid = np.abs(X @ c).max()
    scale = np.abs(X).max()
    if resid > NULL_VECTOR_TOL * scale:
        raise DesignError(
            f"internal consistency failure: ||Xc||_inf = {resid:.3e} exceeds {NULL_VECTOR_TOL:.0e} * ||X||_inf"
        )


def null_vector(design: EmvDesign) -> np.ndarray:
    """The verified null direction c of the design matrix."""
    _verify_null(design.X, design.c)
    return design.c.copy()


def design_to_csv(design: EmvDesign) -> str:
    """Dense CSV dump of the model matrix for external verification.

    One row per observed cell with its (age, time) key; columns are labelled
    by block and level. The final row holds the null vector c.
    """
    lay = design.layout
    header = (
        ["age", "time", "intercept"]
        + [f"age_{a}" for a in lay.ages]
        + [f"time_{t}" for t in lay.times]
        + [f"vintage_{v}" for v in lay.vintages]
    )
    lines = [",".join(header)]
    for (a, t), row in zip(design.cells, design.X):
        lines.append(f"{a},{t}," + ",".join(repr(float(x)) for x in row))
    lines.append("c,," + ",".join(repr(float(x)) for x in design.c))
    return "\n".join(lines) + "\n"


def null_space_report(design: EmvDesign, rel_tol: float = 1e-8) -> dict:
    """SVD-based rank diagnostics.

    A connected grid with every level populated carries exactly four null
    directions: three from intercept/factor-sum aliasing and one from c.
    Anything beyond that (disconnected grids, emptied interior levels) is
    surfaced in ``extra_null_dimension`` with an orthonormal basis of the
    full null space.
    """
    s = np.linalg.svd(design.X, compute_uv=False)
    cutoff = rel_tol * s[0]
    rank = int((s > cutoff).sum())
    null_dim = design.n_columns - rank
    _, _, vt = np.linalg.svd(design.X, full_matrices=True)
    basis = vt[rank:, :]
    return {
        "rank": rank,
        "n_columns": design.n_columns,
        "null_dimension": null_dim,
        "expected_null_dimension": 4,
        "extra_null_dimension": max(0, null_dim - 4),
        "null_basis": basis,
        "singular_values": s,
    }
