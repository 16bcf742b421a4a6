"""Identifiability constraints as closed-form post-processing.

Every constrained EMV decomposition of the same fit differs from every other
by a scalar multiple of the null direction c. Given a constraint expressed as
a linear functional d with target value k, the representative satisfying it is
``beta + gamma c`` with ``gamma = (k - d.beta) / (d.c)`` - no refitting, and
the fitted values never move. Blocks are re-centered to zero mean (means move
into the intercept) so all presented decompositions share one reporting
convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .design import EmvDesign, ParameterLayout
from .estimator import FitResult

__all__ = [
    "ConstraintError",
    "ConstraintSpec",
    "Decomposition",
    "apply_constraint",
    "apply_constraint_to_vector",
    "intrinsic",
    "constraint_sweep",
    "drift_report",
    "decomposition_to_json_dict",
    "decomposition_to_json",
    "decomposition_to_csv",
]

CONSTRAINT_KINDS = (
    "last-two-vintages-equal",
    "first-last-vintages-equal",
    "intrinsic",
    "vintage-trend-zero",
    "maturity-slope",
    "match-parametric",
)

SELF_CHECK_TOL = 1e-10
EQUIVALENCE_TOL = 1e-8


class ConstraintError(ValueError):
    """Raised when a constraint cannot identify the decomposition."""


@dataclass(frozen=True)
class ConstraintSpec:
    """A single identifying linear constraint.

    kind                      params used
    last-two-vintages-equal   -
    first-last-vintages-equal -
    intrinsic                 -
    vintage-trend-zero        window (most recent vintages) or explicit vintages
    maturity-slope            k (slope per month of age), a_star (threshold)
    match-parametric          reference (implied time effects, aligned to layout times)
    """

    kind: str
    k: float = 0.0
    a_star: int = 60
    window: int = 18
    vintages: tuple[int, ...] | None = None
    reference: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in CONSTRAINT_KINDS:
            raise ConstraintError(f"unknown constraint kind {self.kind!r}; expected one of {CONSTRAINT_KINDS}")

    def to_dict(self, realized_k: float | None = None) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "maturity-slope":
            d["k"] = float(self.k)
            d["a_star"] = int(self.a_star)
        elif self.kind == "vintage-trend-zero":
            if self.vintages is not None:
                d["vintages"] = [int(v) for v in self.vintages]
            else:
                d["window"] = int(self.window)
        elif self.kind == "match-parametric" and realized_k is not None:
            d["k"] = float(realized_k)
        return d

    def cache_key(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class Decomposition:
    """One identified EMV decomposition: intercept plus zero-mean effect blocks.

    ``constraint`` is None for ground-truth decompositions that were generated
    rather than identified; ``gamma_applied`` is the coefficient on the null
    direction taking the (re-centered) minimum-norm representation to this one.
    """

    layout: ParameterLayout
    intercept: float
    maturity: np.ndarray
    exogenous: np.ndarray
    vintage: np.ndarray
    constraint: ConstraintSpec | None = None
    gamma_applied: float = 0.0
    maturity_se: np.ndarray | None = None
    exogenous_se: np.ndarray | None = None
    vintage_se: np.ndarray | None = None
    realized_target: float | None = None

    def stacked(self) -> np.ndarray:
        return self.layout.join(self.intercept, self.maturity, self.exogenous, self.vintage)

    def theta_at(self, ages: np.ndarray, times: np.ndarray) -> np.ndarray:
        """Reconstruct theta for cells at the given ages/times (levels must be in the layout)."""
        ai = np.searchsorted(self.layout.ages, ages)
        ti = np.searchsorted(self.layout.times, times)
        vi = np.searchsorted(self.layout.vintages, np.asarray(times) - np.asarray(ages))
        return self.intercept + self.maturity[ai] + self.exogenous[ti] + self.vintage[vi]

    def constraint_residual(self) -> float:
        """|d^T beta - k| for this decomposition's own constraint (0 for None)."""
        if self.constraint is None:
            return 0.0
        d, k = _functional(self.constraint, self.layout)
        return abs(float(d @ self.stacked()) - k)


# ---------------------------------------------------------------------------
# Constraint functionals

def _slope_functional(levels: np.ndarray, positions: np.ndarray, layout: ParameterLayout, block: slice) -> np.ndarray:
    """d with entries (x - xbar) / sum((x - xbar)^2) on the given block positions.

    d^T beta is then the OLS slope of the block coefficients on their index,
    and d^T c = +/-1 exactly.
    """
    x = levels.astype(float)
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom == 0.0:
        raise ConstraintError("constraint does not resolve EMV nonidentifiability")
    d = np.zeros(layout.size)
    d[block.start + positions] = xc / denom
    return d


def _functional(spec: ConstraintSpec, layout: ParameterLayout) -> tuple[np.ndarray, float]:
    """Realize a ConstraintSpec as (d, k) with the constraint d^T beta = k."""
    p = layout.size
    if spec.kind == "last-two-vintages-equal":
        if layout.vintages.size < 2:
            raise ConstraintError("need at least 2 vintage levels for a pairwise vintage constraint")
        d = np.zeros(p)
        d[layout.vintage_slice.start + layout.vintages.size - 1] = 1.0
        d[layout.vintage_slice.start + layout.vintages.size - 2] = -1.0
        return d, 0.0
    if spec.kind == "first-last-vintages-equal":
        if layout.vintages.size < 2:
            raise ConstraintError("need at least 2 vintage levels for a pairwise vintage constraint")
        d = np.zeros(p)
        d[layout.vintage_slice.start + layout.vintages.size - 1] = 1.0
        d[layout.vintage_slice.start] = -1.0
        return d, 0.0
    if spec.kind == "intrinsic":
        return layout.null_vector(), 0.0
    if spec.kind == "vintage-trend-zero":
        if spec.vintages is not None:
            sel = np.isin(layout.vintages, np.asarray(spec.vintages))
            if sel.sum() != len(spec.vintages):
                missing = sorted(set(spec.vintages) - set(layout.vintages.tolist()))
                raise ConstraintError(f"constraint vintages {missing} not present in the layout")
            positions = np.nonzero(sel)[0]
        else:
            if spec.window < 2:
                raise ConstraintError("vintage trend window must contain at least 2 vintages")
            positions = np.arange(max(0, layout.vintages.size - spec.window), layout.vintages.size)
        if positions.size < 2:
            raise ConstraintError("vintage trend window must contain at least 2 vintages")
        return _slope_functional(layout.vintages[positions], positions, layout, layout.vintage_slice), 0.0
    if spec.kind == "maturity-slope":
        positions = np.nonzero(layout.ages > spec.a_star)[0]
        if positions.size < 2:
            raise ConstraintError(
                f"maturity slope constraint needs at least 2 age levels above A*={spec.a_star}"
            )
        d = _slope_functional(layout.ages[positions], positions, layout, layout.age_slice)
        return d, float(spec.k)
    if spec.kind == "match-parametric":
        if spec.reference is None:
            raise ConstraintError("match-parametric constraint requires reference implied time effects")
        ref = np.asarray(spec.reference, dtype=float)
        if ref.shape != (layout.times.size,):
            raise ConstraintError("time index mismatch between fits")
        positions = np.arange(layout.times.size)
        d = _slope_functional(layout.times.astype(float), positions, layout, layout.time_slice)
        tc = layout.times - layout.times.mean()
        k = float(ref @ tc / (tc @ tc))
        return d, k
    raise ConstraintError(f"unknown constraint kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# Re-centering and the gamma shift

def _recenter_matrix(layout: ParameterLayout) -> np.ndarray:
    """Linear map moving block means into the intercept (Decomposition convention)."""
    p = layout.size
    r = np.eye(p)
    for sl in (layout.age_slice, layout.time_slice, layout.vintage_slice):
        size = sl.stop - sl.start
        r[0, sl] += 1.0 / size
        r[sl, sl] -= np.full((size, size), 1.0 / size)
    return r


def _recenter(layout: ParameterLayout, beta: np.ndarray) -> np.ndarray:
    b0, bm, be, bv = layout.split(beta)
    means = (bm.mean(), be.mean(), bv.mean())
    return layout.join(b0 + sum(means), bm - means[0], be - means[1], bv - means[2])


def _shift(layout: ParameterLayout, stack0: np.ndarray, spec: ConstraintSpec) -> tuple[np.ndarray, float, np.ndarray, float]:
    c = layout.null_vector()
    d, k = _functional(spec, layout)
    dc = float(d @ c)
    if abs(dc) <= 1e-12 * max(1.0, np.linalg.norm(d) * np.linalg.norm(c)):
        raise ConstraintError("constraint does not resolve EMV nonidentifiability")
    gamma = (k - float(d @ stack0)) / dc
    stack1 = stack0 + gamma * c
    resid = abs(float(d @ stack1) - k)
    if resid > SELF_CHECK_TOL * max(1.0, abs(k)):
        raise ConstraintError(f"internal consistency failure: constraint residual {resid:.3e} after shift")
    return stack1, gamma, d, k


def _decomposition_from_stack(
    layout: ParameterLayout,
    stack: np.ndarray,
    spec: ConstraintSpec | None,
    gamma: float,
    realized_k: float | None = None,
    se_stack: np.ndarray | None = None,
) -> Decomposition:
    b0, bm, be, bv = layout.split(stack)
    ses: dict = {}
    if se_stack is not None:
        ses = {
            "maturity_se": se_stack[layout.age_slice].copy(),
            "exogenous_se": se_stack[layout.time_slice].copy(),
            "vintage_se": se_stack[layout.vintage_slice].copy(),
        }
    return Decomposition(
        layout=layout,
        intercept=b0,
        maturity=bm,
        exogenous=be,
        vintage=bv,
        constraint=spec,
        gamma_applied=gamma,
        realized_target=realized_k,
        **ses,
    )


def _se_stack(fit: FitResult, layout: ParameterLayout, d: np.ndarray) -> np.ndarray:
    """Pointwise standard errors of the presented decomposition entries.

    The presented vector is an affine map L beta_hat with
    L = (I - c d^T / d^T c) R; its entries are invariant along c, so their
    sampling variance under the chosen constraint is well defined.
    """
    c = layout.null_vector()
    dc = float(d @ c)
    l_map = (np.eye(layout.size) - np.outer(c, d) / dc) @ _recenter_matrix(layout)
    g = l_map @ fit.cov_factor.basis
    return np.sqrt(fit.cov_factor.dispersion) * np.linalg.norm(g * fit.cov_factor.inv_singular, axis=1)


def apply_constraint(
    fit: FitResult,
    design: EmvDesign | None,
    spec: ConstraintSpec,
    include_se: bool = False,
) -> Decomposition:
    """Post-process a fit into the representation satisfying ``spec``.

    The fitted values are untouched; only the split of linear drift between
    the three effect blocks changes.
    """
    layout = design.layout if design is not None else fit.layout
    if layout.size != fit.layout.size:
        raise ConstraintError("design layout does not match the fit")
    return apply_constraint_to_vector(layout, fit.beta_hat, spec, fit=fit if include_se else None)


def apply_constraint_to_vector(
    layout: ParameterLayout,
    beta: np.ndarray,
    spec: ConstraintSpec,
    fit: FitResult | None = None,
) -> Decomposition:
    """Same as apply_constraint but from a bare coefficient vector (e.g. a saved fit)."""
    stack0 = _recenter(layout, np.asarray(beta, dtype=float))
    stack1, gamma, d, k = _shift(layout, stack0, spec)
    se = _se_stack(fit, layout, d) if fit is not None else None
    realized = k if spec.kind == "match-parametric" else None
    return _decomposition_from_stack(layout, stack1, spec, gamma, realized_k=realized, se_stack=se)


def intrinsic(source: FitResult | Decomposition, design: EmvDesign | None = None) -> Decomposition:
    """Minimum-length representative: projection orthogonal to c.

    Accepts a fit or an existing Decomposition (useful for projecting
    generator ground truth onto the same representative).
    """
    spec = ConstraintSpec("intrinsic")
    if isinstance(source, Decomposition):
        stack1, gamma, _, _ = _shift(source.layout, source.stacked(), spec)
        return _decomposition_from_stack(source.layout, stack1, spec, gamma)
    return apply_constraint(source, design, spec)


def constraint_sweep(
    fit: FitResult,
    design: EmvDesign | None,
    a_star: int,
    ks: list[float],
    include_se: bool = False,
) -> list[Decomposition]:
    """One maturity-slope decomposition per k; all share identical fitted values."""
    if not ks:
        raise ConstraintError("constraint sweep needs at least one k value")
    return [
        apply_constraint(fit, design, ConstraintSpec("maturity-slope", k=float(k), a_star=a_star), include_se)
        for k in ks
    ]


def drift_report(d1: Decomposition, d2: Decomposition) -> float:
    """The scalar gamma with d2 = d1 + gamma c, blockwise.

    Errors if the two decompositions are not c-equivalent (different layouts
    or not derived from the same fit).
    """
    if (
        not np.array_equal(d1.layout.ages, d2.layout.ages)
        or not np.array_equal(d1.layout.times, d2.layout.times)
        or not np.array_equal(d1.layout.vintages, d2.layout.vintages)
    ):
        raise ConstraintError("not c-equivalent: decompositions have different parameter layouts")
    c = d1.layout.null_vector()
    delta = d2.stacked() - d1.stacked()
    gamma = float(delta @ c / (c @ c))
    resid = np.abs(delta - gamma * c).max()
    if resid > EQUIVALENCE_TOL * (1.0 + np.abs(delta).max()):
        raise ConstraintError("not c-equivalent: decompositions do not differ by a multiple of c")
    return gamma


# ---------------------------------------------------------------------------
# Serialization

def _block_entries(key: str, levels: np.ndarray, values: np.ndarray, se: np.ndarray | None) -> list[dict]:
    out = []
    for i, (lvl, val) in enumerate(zip(levels, values)):
        e = {key: int(lvl), "value": float(val)}
        if se is not None:
            e["se"] = float(se[i])
        out.append(e)
    return out


def decomposition_to_json_dict(decomp: Decomposition) -> dict:
    realized = decomp.realized_target
    return {
        "constraint": decomp.constraint.to_dict(realized) if decomp.constraint else None,
        "gamma_applied": float(decomp.gamma_applied),
        "intercept": float(decomp.intercept),
        "maturity": _block_entries("age", decomp.layout.ages, decomp.maturity, decomp.maturity_se),
        "exogenous": _block_entries("time", decomp.layout.times, decomp.exogenous, decomp.exogenous_se),
        "vintage": _block_entries("vintage", decomp.layout.vintages, decomp.vintage, decomp.vintage_se),
    }


def decomposition_to_json(decomp: Decomposition) -> str:
    return json.dumps(decomposition_to_json_dict(decomp), sort_keys=True, indent=2) + "\n"


def decomposition_to_csv(decomp: Decomposition) -> str:
    have_se = decomp.maturity_se is not None
    lines = ["component,index,value,se" if have_se else "component,index,value"]

    def emit(name: str, levels: np.ndarray, values: np.ndarray, se: np.ndarray | None) -> None:
        for i, (lvl, val) in enumerate(zip(levels, values)):
            if have_se:
                lines.append(f"{name},{int(lvl)},{float(val)!r},{float(se[i])!r}")
            else:
                lines.append(f"{name},{int(lvl)},{float(val)!r}")

    if have_se:
        lines.append(f"intercept,0,{float(decomp.intercept)!r},")
    else:
        lines.append(f"intercept,0,{float(decomp.intercept)!r}")
    emit("maturity", decomp.layout.ages, decomp.maturity, decomp.maturity_se)
    emit("exogenous", decomp.layout.times, decomp.exogenous, decomp.exogenous_se)
    emit("vintage", decomp.layout.vintages, decomp.vintage, decomp.vintage_se)
    return "\n".join(lines) + "\n"


def decomposition_from_json_dict(payload: dict) -> Decomposition:
    layout = ParameterLayout(
        ages=np.array([e["age"] for e in payload["maturity"]], dtype=int),
        times=np.array([e["time"] for e in payload["exogenous"]], dtype=int),
        vintages=np.array([e["vintage"] for e in payload["vintage"]], dtype=int),
    )
    con = payload.get("constraint")
    spec = None
    if con:
        spec = ConstraintSpec(
            kind=con["kind"],
            k=float(con.get("k", 0.0)),
            a_star=int(con.get("a_star", 60)),
            window=int(con.get("window", 18)),
            vintages=tuple(con["vintages"]) if "vintages" in con else None,
        )
    return Decomposition(
        layout=layout,
        intercept=float(payload["intercept"]),
        maturity=np.array([e["value"] for e in payload["maturity"]], dtype=float),
        exogenous=np.array([e["value"] for e in payload["exogenous"]], dtype=float),
        vintage=np.array([e["value"] for e in payload["vintage"]], dtype=float),
        constraint=spec,
        gamma_applied=float(payload.get("gamma_applied", 0.0)),
    )
