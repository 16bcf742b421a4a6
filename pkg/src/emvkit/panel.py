"""Vintage-level panel data in the age x time x vintage coordinate system.

Observations are stored on a rectangular (age 0..A) x (time 1..T) grid with an
explicit observed-cell mask, so arbitrary missingness (canonically the bottom
left triangle) needs no sentinel values. The vintage of a cell is always
``v = t - a``; vintages <= 0 are accounts originated before the observation
window and are fully supported.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PanelError",
    "PanelGrid",
    "ResponseTransform",
    "load_panel",
    "vintage_of",
    "transform_response",
    "grid_to_records",
    "grid_to_csv",
    "grid_to_json",
]


class PanelError(ValueError):
    """Raised for malformed or out-of-domain panel input."""


def vintage_of(a: int, t: int) -> int:
    """Vintage index of the cell at age ``a`` and time ``t``: ``t - a``.

    Vintage 1 originates in the first observed period; vintages 0, -1, ...
    originated before the window.
    """
    return t - a


@dataclass(frozen=True)
class PanelGrid:
    """Immutable (age x time) observation grid.

    Attributes
    ----------
    ages : integer levels 0..A (row index)
    times : integer levels 1..T (column index)
    values : response matrix, shape (A+1, T); meaningful only where ``mask``
    mask : True at observed cells
    weights : positive exposure weights at observed cells (default 1)
    """

    ages: np.ndarray
    times: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        for name in ("ages", "times", "values", "mask", "weights"):
            arr = getattr(self, name)
            arr.setflags(write=False)
        if self.values.shape != (self.ages.size, self.times.size):
            raise PanelError("values shape does not match age/time index")
        if self.mask.shape != self.values.shape or self.weights.shape != self.values.shape:
            raise PanelError("mask/weights shape does not match values")
        if not self.mask.any():
            raise PanelError("no observations")
        obs_vals = self.values[self.mask]
        if not np.all(np.isfinite(obs_vals)):
            a, t = self._first_bad(np.isfinite(self.values))
            raise PanelError(f"non-finite value at observed cell (age={a}, time={t})")
        obs_w = self.weights[self.mask]
        if not np.all(np.isfinite(obs_w) & (obs_w > 0)):
            ok = np.isfinite(self.weights) & (self.weights > 0)
            a, t = self._first_bad(ok)
            raise PanelError(f"nonpositive weight at observed cell (age={a}, time={t})")

    def _first_bad(self, ok: np.ndarray) -> tuple[int, int]:
        bad = self.mask & ~ok
        i, j = np.argwhere(bad)[0]
        return int(self.ages[i]), int(self.times[j])

    @property
    def max_age(self) -> int:
        return int(self.ages[-1])

    @property
    def max_time(self) -> int:
        return int(self.times[-1])

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    def observed_cells(self) -> tuple[np.ndarray, np.ndarray]:
        """(ages, times) of observed cells in row-major (age, then time) order."""
        i, j = np.nonzero(self.mask)
        return self.ages[i], self.times[j]

    def vintage_grid(self) -> np.ndarray:
        """Matrix of vintage indices t - a for every cell (observed or not)."""
        return self.times[None, :] - self.ages[:, None]

    def vintage_levels(self) -> np.ndarray:
        """Sorted vintage levels that have at least one observed cell."""
        return np.unique(self.vintage_grid()[self.mask])

    def cell_index(self, a: int, t: int) -> tuple[int, int]:
        return int(a - self.ages[0]), int(t - self.times[0])


@dataclass(frozen=True)
class ResponseTransform:
    """Monotone response transform g applied cellwise before fitting.

    ``epsilon`` guards log(0) and logit(0 or 1) by clipping into the open
    domain; values outside the domain by more than epsilon are rejected.
    """

    kind: str = "identity"
    epsilon: float = 1e-9

    _KINDS = ("identity", "log", "logit")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise PanelError(f"unknown transform kind {self.kind!r}; expected one of {self._KINDS}")
        if not self.epsilon > 0:
            raise PanelError("transform epsilon must be positive")

    def apply(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if self.kind == "identity":
            return v.copy()
        if self.kind == "log":
            return np.log(np.clip(v, self.epsilon, None))
        return np.log(np.clip(v, self.epsilon, 1.0 - self.epsilon)
                      / (1.0 - np.clip(v, self.epsilon, 1.0 - self.epsilon)))

    def inverse(self, theta: np.ndarray) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        if self.kind == "identity":
            return th.copy()
        if self.kind == "log":
            return np.exp(th)
        return 1.0 / (1.0 + np.exp(-th))

    def domain_ok(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if self.kind == "identity":
            return np.ones(v.shape, dtype=bool)
        if self.kind == "log":
            return v > -self.epsilon
        return (v > -self.epsilon) & (v < 1.0 + self.epsilon)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "ResponseTransform":
        return cls(kind=d.get("kind", "identity"), epsilon=float(d.get("epsilon", 1e-9)))


def transform_response(grid: PanelGrid, g: ResponseTransform) -> PanelGrid:
    """Apply g cellwise to the observed values; mask and weights are unchanged."""
    ok = g.domain_ok(grid.values) | ~grid.mask
    if not ok.all():
        i, j = np.argwhere(~ok)[0]
        a, t = int(grid.ages[i]), int(grid.times[j])
        raise PanelError(
            f"value {grid.values[i, j]!r} at cell (age={a}, time={t}) outside domain of {g.kind} transform"
        )
    new_values = grid.values.copy()
    new_values[grid.mask] = g.apply(grid.values[grid.mask])
    return replace(grid, values=new_values)


# ---------------------------------------------------------------------------
# Ingestion: long-format records / CSV

_Record = tuple  # (age, time, value[, weight])


def _coerce_int(raw, what: str, row: int) -> int:
    try:
        f = float(raw)
    except (TypeError, ValueError):
        raise PanelError(f"non-numeric {what} {raw!r} in row {row}") from None
    if not float(f).is_integer():
        raise PanelError(f"{what} must be an integer, got {raw!r} in row {row}")
    return int(f)


def _coerce_float(raw, what: str, row: int) -> float:
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise PanelError(f"non-numeric {what} {raw!r} in row {row}") from None
    if math.isnan(v):
        raise PanelError(f"non-numeric {what} {raw!r} in row {row}")
    return v


def _records_to_grid(records: Iterable[Sequence]) -> PanelGrid:
    seen: dict[tuple[int, int], tuple[float, float]] = {}
    for n, rec in enumerate(records, start=1):
        if len(rec) not in (3, 4):
            raise PanelError(f"row {n} has {len(rec)} fields; expected age,time,value[,weight]")
        a = _coerce_int(rec[0], "age", n)
        t = _coerce_int(rec[1], "time", n)
        if a < 0:
            raise PanelError(f"age must be >= 0, got {a} in row {n}")
        if t < 1:
            raise PanelError(f"time must be >= 1, got {t} in row {n}")
        v = _coerce_float(rec[2], "value", n)
        w = _coerce_float(rec[3], "weight", n) if len(rec) == 4 and rec[3] not in (None, "") else 1.0
        if (a, t) in seen:
            raise PanelError(f"duplicate cell (age={a}, time={t}) in row {n}")
        seen[(a, t)] = (v, w)
    if not seen:
        raise PanelError("no observations")
    max_a = max(a for a, _ in seen)
    max_t = max(t for _, t in seen)
    ages = np.arange(0, max_a + 1)
    times = np.arange(1, max_t + 1)
    values = np.zeros((ages.size, times.size))
    mask = np.zeros_like(values, dtype=bool)
    weights = np.ones_like(values)
    for (a, t), (v, w) in seen.items():
        values[a, t - 1] = v
        weights[a, t - 1] = w
        mask[a, t - 1] = True
    return PanelGrid(ages=ages, times=times, values=values, mask=mask, weights=weights)


def _csv_to_records(text: str) -> list[_Record]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise PanelError("no observations") from None
    header = [h.strip().lower() for h in header]
    if header[:3] != ["age", "time", "value"] or (len(header) == 4 and header[3] != "weight") or len(header) > 4:
        raise PanelError(f"expected header age,time,value[,weight], got {','.join(header)}")
    records = []
    for row in reader:
        if not row or all(f.strip() == "" for f in row):
            continue
        records.append(tuple(f.strip() for f in row))
    return records


def load_panel(source) -> PanelGrid:
    """Build a PanelGrid from long-format data.

    ``source`` may be a CSV path, a CSV text string, an open text stream, or
    an iterable of (age, time, value[, weight]) records. The grid dimensions
    A and T are inferred as the maxima present.
    """
    if isinstance(source, (str, os.PathLike)):
        if isinstance(source, str) and ("\n" in source or "," in source) and not os.path.exists(source):
            return _records_to_grid(_csv_to_records(source))
        with open(source, "r", encoding="utf-8") as fh:
            return _records_to_grid(_csv_to_records(fh.read()))
    if hasattr(source, "read"):
        return _records_to_grid(_csv_to_records(source.read()))
    return _records_to_grid(source)


# ---------------------------------------------------------------------------
# Export (round-trips bit-exactly through load_panel)

def grid_to_records(grid: PanelGrid) -> list[tuple[int, int, float, float]]:
    a_obs, t_obs = grid.observed_cells()
    i = a_obs - grid.ages[0]
    j = t_obs - grid.times[0]
    return [
        (int(a), int(t), float(grid.values[ii, jj]), float(grid.weights[ii, jj]))
        for a, t, ii, jj in zip(a_obs, t_obs, i, j)
    ]


def grid_to_csv(grid: PanelGrid) -> str:
    lines = ["age,time,value,weight"]
    for a, t, v, w in grid_to_records(grid):
        lines.append(f"{a},{t},{v!r},{w!r}")
    return "\n".join(lines) + "\n"


def grid_to_json(grid: PanelGrid) -> str:
    rows = [
        {"age": a, "time": t, "value": v, "weight": w}
        for a, t, v, w in grid_to_records(grid)
    ]
    return json.dumps({"observations": rows}, sort_keys=True, indent=2) + "\n"
