"""Natural cubic spline bases built one knot at a time.

Every interior knot ``t`` owns exactly one basis function

    N(u; tL, tU, t) = [(u-t)^3_+ - (u-tU)^3_+] / (tU - t)
                      - [(u-tL)^3_+ - (u-tU)^3_+] / (tU - tL)

which depends on no other interior knot.  Adding or dropping a knot is
therefore a single column insertion or deletion, and the remaining columns
are untouched.  Each covariate block starts with the identity map ``u``;
all columns are centered at the design points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "CovariateKnots",
    "KnotState",
    "BasisMatrix",
    "eval_natural_basis",
    "build_basis",
    "insert_knot",
    "remove_knot",
    "quantile_knots",
    "knot_state_from_design",
]


def _cube_plus(x):
    x = np.maximum(x, 0.0)
    return x * x * x


def eval_natural_basis(u, tL: float, tU: float, t: float):
    """Evaluate the single-knot natural cubic spline term.

    Parameters
    ----------
    u : float or ndarray
        Evaluation points.  Values outside ``[tL, tU]`` are allowed; the
        function is linear there.
    tL, tU : float
        Boundary knots.
    t : float
        Interior knot, ``tL < t < tU``.
    """
    if not (tL < t < tU):
        raise ValueError(f"knot {t!r} must lie strictly inside ({tL!r}, {tU!r})")
    u = np.asarray(u, dtype=float)
    upper = _cube_plus(u - tU)
    return (_cube_plus(u - t) - upper) / (tU - t) - (_cube_plus(u - tL) - upper) / (tU - tL)


@dataclass(frozen=True)
class CovariateKnots:
    low: float
    high: float
    interior: tuple[float, ...] = ()
    linear_only: bool = False

    def __post_init__(self):
        object.__setattr__(self, "interior", tuple(float(t) for t in self.interior))
        if not self.low < self.high:
            raise ValueError("boundary knots must satisfy low < high")
        if self.linear_only and self.interior:
            raise ValueError("a linear-only covariate cannot carry interior knots")
        prev = self.low
        for t in self.interior:
            if not t > prev:
                raise ValueError("interior knots must be strictly increasing and distinct")
            prev = t
        if self.interior and not self.interior[-1] < self.high:
            raise ValueError("interior knots must lie below the upper boundary")

    @property
    def count(self) -> int:
        return len(self.interior)


@dataclass(frozen=True)
class KnotState:
    """Boundary and interior knots for every covariate; identifies one model."""

    covariates: tuple[CovariateKnots, ...]

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))

    @property
    def p(self) -> int:
        return len(self.covariates)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(c.count for c in self.covariates)

    @property
    def n_columns(self) -> int:
        return self.p + sum(self.counts)

    def __getitem__(self, j: int) -> CovariateKnots:
        return self.covariates[j]

    def replace(self, j: int, interior: Sequence[float]) -> "KnotState":
        c = self.covariates[j]
        new = CovariateKnots(c.low, c.high, tuple(sorted(interior)), c.linear_only)
        return KnotState(self.covariates[:j] + (new,) + self.covariates[j + 1:])

    def with_knot(self, j: int, t: float) -> "KnotState":
        c = self.covariates[j]
        if c.linear_only:
            raise ValueError(f"covariate {j} is linear-only")
        if not c.low < t < c.high:
            raise ValueError(f"knot {t!r} outside ({c.low!r}, {c.high!r})")
        if t in c.interior:
            raise ValueError(f"knot {t!r} already present for covariate {j}")
        return self.replace(j, c.interior + (float(t),))

    def without_knot(self, j: int, t: float) -> "KnotState":
        c = self.covariates[j]
        if t not in c.interior:
            raise ValueError(f"knot {t!r} not present for covariate {j}")
        return self.replace(j, [s for s in c.interior if s != t])

    def key(self, quantum: float | None = None) -> tuple:
        """Hashable identity, optionally rounding knots to ``quantum``."""
        if quantum is None:
            return tuple(c.interior for c in self.covariates)
        return tuple(tuple(round(t / quantum) for t in c.interior) for c in self.covariates)


def knot_state_from_design(design, linear_only: Sequence[bool] | None = None) -> KnotState:
    """Knot state with no interior knots and boundaries at the observed range."""
    design = np.asarray(design, dtype=float)
    if design.ndim != 2 or design.shape[0] == 0 or design.shape[1] == 0:
        raise ValueError("design must be a non-empty n x p matrix")
    p = design.shape[1]
    linear_only = [False] * p if linear_only is None else list(linear_only)
    cols = []
    for j in range(p):
        lo, hi = float(design[:, j].min()), float(design[:, j].max())
        cols.append(CovariateKnots(lo, hi, (), bool(linear_only[j])))
    return KnotState(tuple(cols))


@dataclass(frozen=True, eq=False)
class BasisMatrix:
    """Centered design matrix with an explicit column-to-knot map.

    ``column_map[k]`` is ``(j, None)`` for the linear term of covariate ``j``
    and ``(j, t)`` for the column owned by interior knot ``t``.
    """

    values: np.ndarray
    column_map: tuple[tuple[int, float | None], ...]
    centering_offsets: np.ndarray
    knots: KnotState
    design: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.values.shape

    def column_index(self, j: int, t: float | None) -> int:
        return self.column_map.index((j, t))

    def block(self, j: int) -> np.ndarray:
        """Indices of the columns belonging to covariate ``j``."""
        return np.array([k for k, (jj, _) in enumerate(self.column_map) if jj == j], dtype=int)

    def evaluate(self, j: int, u) -> np.ndarray:
        """Centered basis columns of covariate ``j`` at new points ``u``.

        Uses the centering offsets stored at construction, so the result is
        consistent with the design-point columns.  Outside the boundary knots
        the natural spline continues linearly.
        """
        u = np.asarray(u, dtype=float)
        idx = self.block(j)
        c = self.knots[j]
        out = np.empty((u.size, idx.size))
        for col, k in enumerate(idx):
            t = self.column_map[k][1]
            raw = u if t is None else eval_natural_basis(u, c.low, c.high, t)
            out[:, col] = raw - self.centering_offsets[k]
        return out


def _raw_column(x, c: CovariateKnots, t: float | None):
    return x.copy() if t is None else eval_natural_basis(x, c.low, c.high, t)


def build_basis(design, knots: KnotState) -> BasisMatrix:
    """Construct the centered basis matrix for ``knots`` from scratch."""
    design = np.asarray(design, dtype=float)
    if design.ndim != 2 or design.shape[0] == 0:
        raise ValueError("design must be a non-empty n x p matrix")
    if design.shape[1] != knots.p:
        raise ValueError("design and knot state disagree on the number of covariates")
    cols, cmap = [], []
    for j, c in enumerate(knots.covariates):
        if len(set(c.interior)) != len(c.interior):
            raise ValueError(f"duplicate interior knots for covariate {j}")
        x = design[:, j]
        for t in (None,) + c.interior:
            cols.append(_raw_column(x, c, t))
            cmap.append((j, t))
    raw = np.column_stack(cols)
    offsets = raw.mean(axis=0)
    return BasisMatrix(raw - offsets, tuple(cmap), offsets, knots, design)


def _insert_position(B: BasisMatrix, j: int, t: float) -> int:
    pos = None
    for k, (jj, tt) in enumerate(B.column_map):
        if jj == j and (tt is None or tt < t):
            pos = k + 1
    return pos


def insert_knot(B: BasisMatrix, j: int, t: float) -> BasisMatrix:
    """Return a new basis with the column for knot ``t`` of covariate ``j`` added.

    Only one column is computed; all other columns are copied unchanged.
    """
    knots = B.knots.with_knot(j, t)
    c = knots[j]
    t = float(t)
    raw = eval_natural_basis(B.design[:, j], c.low, c.high, t)
    offset = raw.mean()
    pos = _insert_position(B, j, t)
    values = np.insert(B.values, pos, raw - offset, axis=1)
    offsets = np.insert(B.centering_offsets, pos, offset)
    cmap = B.column_map[:pos] + ((j, t),) + B.column_map[pos:]
    return BasisMatrix(values, cmap, offsets, knots, B.design)


def remove_knot(B: BasisMatrix, j: int, t: float) -> BasisMatrix:
    """Return a new basis with the column owned by knot ``t`` deleted."""
    knots = B.knots.without_knot(j, t)
    k = B.column_index(j, float(t))
    values = np.delete(B.values, k, axis=1)
    offsets = np.delete(B.centering_offsets, k)
    cmap = B.column_map[:k] + B.column_map[k + 1:]
    return BasisMatrix(values, cmap, offsets, knots, B.design)


def quantile_knots(x, m: int) -> list[float]:
    """Knots at the ``k/(m+1)`` quantiles of the unique values of ``x``.

    Quantiles use the inverse empirical CDF without interpolation, so every
    knot is an observed design value strictly inside the range.
    """
    if m < 0:
        raise ValueError("knot count must be non-negative")
    ux = np.unique(np.asarray(x, dtype=float))
    N = ux.size
    if N < m + 2:
        raise ValueError(f"need at least {m + 2} unique values for {m} quantile knots, got {N}")
    # ceil(k N / (m+1)) in exact integer arithmetic, 1-based
    idx = [-(-k * N // (m + 1)) for k in range(1, m + 1)]
    return [float(ux[i - 1]) for i in idx]
