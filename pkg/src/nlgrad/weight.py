"""
Admissible weights and the diagnostics that decide the local/nonlocal embeddings.

Every weight is symmetric and nonnegative on the grid's cell centres.  A weight
is evaluated either at explicit points (``evaluate``) or on index pairs of a
grid (``pair_values``), the latter being the hot path for the nonlocal
operators.

Finite grids always produce finite numbers, so "unbounded" is read off from
growth under refinement: a quantity is flagged when doubling the resolution (or
the domain) multiplies it by more than ``GROWTH_THRESHOLD``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .grid import DomainGrid, ScalarField

GROWTH_THRESHOLD = 1.5


class WeightSpec:
    kind: str = "abstract"

    def _eval(self, x: np.ndarray, y: np.ndarray, grid: DomainGrid | None) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, x, y, grid: DomainGrid | None = None) -> np.ndarray:
        """Weight at points ``x`` and ``y`` (arrays broadcasting to ``(..., N)``)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return self._eval(x, y, grid)

    def pair_values(self, grid: DomainGrid, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        pts = grid.points()
        return self._eval(pts[rows], pts[cols], grid)

    def row_block(self, grid: DomainGrid, idx: np.ndarray) -> np.ndarray:
        """Weights ``w(x_i, y)`` for ``i`` in ``idx`` against every grid point, shape ``(len(idx), n)``."""
        pts = grid.points()
        return self._eval(pts[idx][:, None, :], pts[None, :, :], grid)

    def matrix(self, grid: DomainGrid) -> np.ndarray:
        return self.row_block(grid, np.arange(grid.n))

    def scaled(self, c: float) -> "WeightSpec":
        return Scaled(self, float(c))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(WeightSpec):
    c: float = 1.0
    kind = "constant"

    def __post_init__(self):
        if not self.c >= 0:
            raise ConfigurationError("constant weight must be nonnegative")

    def _eval(self, x, y, grid):
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        return np.full(shape, float(self.c))

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class GaussianKernel(WeightSpec):
    """``amplitude * exp(-|x-y|^2 / (2 bandwidth^2))``, optionally clipped from below at ``floor``."""

    amplitude: float = 1.0
    bandwidth: float = 0.1
    floor: float = 0.0
    kind = "gaussian"

    def __post_init__(self):
        if not (self.amplitude > 0 and self.bandwidth > 0 and self.floor >= 0):
            raise ConfigurationError("gaussian weight needs amplitude > 0, bandwidth > 0, floor >= 0")

    def _eval(self, x, y, grid):
        d2 = np.sum((x - y) ** 2, axis=-1)
        w = self.amplitude * np.exp(-d2 / (2.0 * self.bandwidth**2))
        return np.maximum(w, self.floor) if self.floor > 0 else w

    def to_dict(self):
        return {"kind": self.kind, "amplitude": self.amplitude, "bandwidth": self.bandwidth, "floor": self.floor}


def default_theta(grid: DomainGrid) -> Callable[[np.ndarray], np.ndarray]:
    """Product of ``t_i (L_i - t_i) / L_i^2`` over axes, ``t`` measured from the lower corner."""
    lo, hi = grid.lower, grid.upper
    length = hi - lo

    def theta(pts):
        t = np.asarray(pts) - lo
        return np.prod(t * (length - t) / length**2, axis=-1)

    return theta


@dataclass(frozen=True)
class SeparableTheta(WeightSpec):
    """``theta(x) + theta(y)`` with ``theta > 0`` inside and vanishing on the boundary."""

    theta: Callable[[np.ndarray], np.ndarray] | None = None
    kind = "separable_theta"

    def _theta(self, pts, grid):
        if self.theta is not None:
            return self.theta(pts)
        if grid is None:
            raise ConfigurationError("default theta needs the grid to locate the boundary")
        return default_theta(grid)(pts)

    def _eval(self, x, y, grid):
        return self._theta(x, grid) + self._theta(y, grid)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class BoundarySingular(WeightSpec):
    """``(d(x) d(y))^(-alpha)`` with ``d`` the distance to the box boundary."""

    alpha: float = 1.0
    kind = "boundary_singular"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError("boundary_singular needs alpha > 0")

    def _eval(self, x, y, grid):
        if grid is None:
            raise ConfigurationError("boundary_singular needs the grid to locate the boundary")
        return (grid.boundary_distance(x) * grid.boundary_distance(y)) ** (-self.alpha)

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha}


@dataclass(frozen=True, eq=False)
class Tabulated(WeightSpec):
    """Explicit ``(n, n)`` weight matrix indexed by flat grid indices."""

    table: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    kind = "tabulated"

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ConfigurationError("tabulated weight must be a square matrix")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise ConfigurationError("tabulated weight must be finite and nonnegative")
        asym = np.max(np.abs(t - t.T)) if t.size else 0.0
        if asym > 1e-12:
            raise ConfigurationError(f"tabulated weight is not symmetric (max asymmetry {asym:.3e})")
        object.__setattr__(self, "table", t)

    def _check(self, grid):
        if grid is None or grid.n != self.table.shape[0]:
            raise ConfigurationError("tabulated weight does not match the grid size")

    def _index(self, pts, grid):
        pts = np.asarray(pts, dtype=float)
        idx = np.floor((pts - grid.lower) / np.asarray(grid.spacing)).astype(int)
        idx = np.clip(idx, 0, np.asarray(grid.dims) - 1)
        return np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), grid.dims)

    def _eval(self, x, y, grid):
        self._check(grid)
        return self.table[self._index(x, grid), self._index(y, grid)]

    def pair_values(self, grid, rows, cols):
        self._check(grid)
        return self.table[rows, cols]

    def row_block(self, grid, idx):
        self._check(grid)
        return self.table[idx]

    def to_dict(self):
        n = self.table.shape[0]
        i, j = np.nonzero(self.table)
        return {"kind": self.kind, "n": n, "entries": [[int(a), int(b), float(self.table[a, b])] for a, b in zip(i, j)]}


@dataclass(frozen=True)
class Scaled(WeightSpec):
    base: WeightSpec = field(default_factory=Constant)
    c: float = 1.0
    kind = "scaled"

    def _eval(self, x, y, grid):
        return self.c * self.base._eval(x, y, grid)

    def pair_values(self, grid, rows, cols):
        return self.c * self.base.pair_values(grid, rows, cols)

    def row_block(self, grid, idx):
        return self.c * self.base.row_block(grid, idx)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "base": self.base.to_dict()}


def weight_from_dict(doc: dict) -> WeightSpec:
    """Inverse of ``to_dict`` for the serializable kinds."""
    kind = doc.get("kind")
    if kind == "constant":
        return Constant(float(doc.get("c", 1.0)))
    if kind == "gaussian":
        return GaussianKernel(float(doc.get("amplitude", 1.0)), float(doc["bandwidth"]), float(doc.get("floor", 0.0)))
    if kind == "separable_theta":
        return SeparableTheta()
    if kind == "boundary_singular":
        return BoundarySingular(float(doc["alpha"]))
    if kind == "tabulated":
        n = int(doc["n"])
        table = np.zeros((n, n))
        for i, j, v in doc.get("entries", []):
            table[int(i), int(j)] = float(v)
        return Tabulated(table)
    if kind == "scaled":
        return Scaled(weight_from_dict(doc["base"]), float(doc["c"]))
    raise ConfigurationError(f"unknown weight kind {kind!r}")


# diagnostics -----------------------------------------------------------------


def _block_reduce(w: WeightSpec, grid: DomainGrid, p: float, idx: np.ndarray | None = None, block: int = 256):
    idx = np.arange(grid.n) if idx is None else idx
    out = np.empty(idx.size)
    mu = grid.cell_measure
    for start in range(0, idx.size, block):
        rows = w.row_block(grid, idx[start : start + block])
        if np.isinf(p):
            out[start : start + block] = rows.max(axis=1)
        else:
            out[start : start + block] = np.sum(rows**p, axis=1) * mu
    return out


def f_p(w: WeightSpec, grid: DomainGrid, p: float) -> ScalarField:
    """``x -> sum_y w(x, y)^p mu`` for finite ``p``, ``max_y w(x, y)`` for ``p = inf``."""
    if not p >= 1:
        raise DomainError(f"exponent must be >= 1, got {p}")
    return ScalarField(grid, _block_reduce(w, grid, float(p)))


def weight_extrema(w: WeightSpec, grid: DomainGrid, block: int = 256) -> tuple[float, float]:
    lo, hi = np.inf, -np.inf
    for start in range(0, grid.n, block):
        rows = w.row_block(grid, np.arange(start, min(start + block, grid.n)))
        lo, hi = min(lo, float(rows.min())), max(hi, float(rows.max()))
    return lo, hi


def integral_over_box(field_: ScalarField, lower: Sequence[float], upper: Sequence[float]) -> float:
    sel = field_.grid.box_mask(lower, upper)
    return float(np.sum(field_.values[sel]) * field_.grid.cell_measure)


def growth_ratio(coarse: float, fine: float) -> float:
    """``fine / coarse`` with ``0/0 = 1`` and ``x/0 = inf``."""
    if coarse == 0:
        return 1.0 if fine == 0 else np.inf
    return fine / coarse


@dataclass
class WeightDiagnostics:
    inf_omega: float
    sup_omega: float
    sup_omega_unbounded: bool
    f_p_values: ScalarField
    sup_f_p: float
    integral_K_f_p: float
    lower_bounded: bool
    f_p_bounded: bool
    test_functions_nontrivial: bool
    ratios: dict

    def to_dict(self) -> dict:
        return {
            "inf_omega": self.inf_omega,
            "sup_omega": self.sup_omega,
            "sup_omega_unbounded_at_resolution": self.sup_omega_unbounded,
            "sup_f_p": self.sup_f_p,
            "integral_K_f_p": self.integral_K_f_p,
            "embedding_class": {
                "lower_bounded": self.lower_bounded,
                "f_p_bounded": self.f_p_bounded,
                "test_functions_nontrivial": self.test_functions_nontrivial,
            },
            "refinement_ratios": self.ratios,
        }


def classify_embeddings(
    w: WeightSpec,
    grid: DomainGrid,
    p: float,
    K: tuple[Sequence[float], Sequence[float]],
) -> WeightDiagnostics:
    """
    Evaluate the embedding criteria for ``w`` on ``grid`` and on its 2x refinement.

    ``lower_bounded``: ``inf w > 0`` and the infimum does not shrink by more than
    the growth threshold under refinement.  ``f_p_bounded``: ``sup f_p`` does not
    grow by more than the threshold.  ``test_functions_nontrivial``: the same for
    ``int_K f_p``.
    """
    lower, upper = K
    if not grid.contains_box(lower, upper):
        raise DomainError(f"K = [{lower}, {upper}] is not strictly inside the domain")
    fine = grid.refine(2)

    inf_c, sup_c = weight_extrema(w, grid)
    inf_f, sup_f = weight_extrema(w, fine)
    f_c, f_f = f_p(w, grid, p), f_p(w, fine, p)
    sup_fc, sup_ff = float(f_c.values.max()), float(f_f.values.max())
    k_c, k_f = integral_over_box(f_c, lower, upper), integral_over_box(f_f, lower, upper)

    ratios = {
        "inf_omega": growth_ratio(inf_f, inf_c),
        "sup_omega": growth_ratio(sup_c, sup_f),
        "sup_f_p": growth_ratio(sup_fc, sup_ff),
        "integral_K_f_p": growth_ratio(k_c, k_f),
    }
    return WeightDiagnostics(
        inf_omega=inf_c,
        sup_omega=sup_c,
        sup_omega_unbounded=ratios["sup_omega"] > GROWTH_THRESHOLD,
        f_p_values=f_c,
        sup_f_p=sup_fc,
        integral_K_f_p=k_c,
        lower_bounded=bool(inf_c > 0 and ratios["inf_omega"] <= GROWTH_THRESHOLD),
        f_p_bounded=bool(ratios["sup_f_p"] <= GROWTH_THRESHOLD),
        test_functions_nontrivial=bool(ratios["integral_K_f_p"] <= GROWTH_THRESHOLD),
        ratios=ratios,
    )
