"""
Regular cell-centred grids on boxes in R^N (N = 1 or 2) and the fields that live on them.

Points are cell centres, so a weight that blows up on the boundary of the box is
never evaluated there.  Point ordering is row-major (C order) everywhere: a
flat index ``k`` refers to ``np.unravel_index(k, grid.dims)``.

Pair fields live on ordered pairs ``(x, y)`` of grid points.  They are stored
sparsely as parallel index arrays ``rows`` (the ``x`` index) and ``cols`` (the
``y`` index), which makes the full mask and the radius-truncated mask the same
data structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class DomainGrid:
    """Cell-centred grid on the open box ``origin + (0, dims * spacing)``."""

    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...] = None  # type: ignore[assignment]

    def __post_init__(self):
        dims = tuple(int(d) for d in np.atleast_1d(self.dims))
        spacing = np.atleast_1d(np.asarray(self.spacing, dtype=float))
        if spacing.size == 1 and len(dims) > 1:
            spacing = np.repeat(spacing, len(dims))
        origin = self.origin
        if origin is None:
            origin = (0.0,) * len(dims)
        origin = tuple(float(o) for o in np.atleast_1d(origin))
        if len(dims) not in (1, 2):
            raise ValueError(f"only N = 1 or 2 is supported, got dims={dims}")
        if any(d < 1 for d in dims):
            raise ValueError(f"dims must be positive, got {dims}")
        if spacing.size != len(dims) or np.any(spacing <= 0) or not np.all(np.isfinite(spacing)):
            raise ValueError(f"spacing must be positive per axis, got {tuple(spacing)}")
        if len(origin) != len(dims):
            raise ValueError("origin must have one entry per axis")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", tuple(float(s) for s in spacing))
        object.__setattr__(self, "origin", origin)

    @classmethod
    def on_box(cls, lower: Sequence[float], upper: Sequence[float], dims: Sequence[int]) -> "DomainGrid":
        """Grid with ``dims`` cells covering the box ``(lower, upper)``."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        dims = tuple(int(d) for d in np.atleast_1d(dims))
        if np.any(upper <= lower):
            raise ValueError("upper corner must exceed lower corner on every axis")
        return cls(dims, tuple((upper - lower) / np.asarray(dims)), tuple(lower))

    @classmethod
    def unit_interval(cls, n: int, length: float = 1.0) -> "DomainGrid":
        return cls.on_box([0.0], [length], [n])

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def measure(self) -> float:
        return self.n * self.cell_measure

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.dims) * np.asarray(self.spacing)

    def axes(self) -> list[np.ndarray]:
        return [o + (np.arange(d) + 0.5) * h for o, d, h in zip(self.origin, self.dims, self.spacing)]

    def points(self) -> np.ndarray:
        """Coordinates of all points, shape ``(n, N)`` in row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def refine(self, factor: int = 2) -> "DomainGrid":
        """Same box, ``factor`` times as many cells per axis."""
        return DomainGrid.on_box(self.lower, self.upper, [d * factor for d in self.dims])

    def boundary_distance(self, pts: np.ndarray) -> np.ndarray:
        """Euclidean distance from each point (shape ``(..., N)``) to the box boundary."""
        pts = np.asarray(pts, dtype=float)
        d = np.minimum(pts - self.lower, self.upper - pts)
        return np.min(d, axis=-1)

    def contains_box(self, lower: Sequence[float], upper: Sequence[float]) -> bool:
        """True when the closed box ``[lower, upper]`` lies strictly inside the domain."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        return bool(
            lower.size == self.ndim
            and np.all(lower < upper)
            and np.all(lower > self.lower)
            and np.all(upper < self.upper)
        )

    def box_mask(self, lower: Sequence[float], upper: Sequence[float]) -> np.ndarray:
        """Boolean array of shape ``dims`` selecting points inside ``[lower, upper]``."""
        pts = self.points()
        inside = np.all((pts >= np.asarray(lower)) & (pts <= np.asarray(upper)), axis=-1)
        return inside.reshape(self.dims)

    def sample(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        """Evaluate ``fn`` on the ``(n, N)`` point array and wrap the result."""
        vals = np.asarray(fn(self.points()), dtype=float).reshape(self.dims)
        return ScalarField(self, vals)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "spacing": list(self.spacing), "origin": list(self.origin)}


@dataclass(frozen=True)
class ScalarField:
    grid: DomainGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.grid.n:
            raise ValueError(f"expected {self.grid.n} values, got {vals.size}")
        vals = vals.reshape(self.grid.dims)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __add__(self, other):
        other = other.values if isinstance(other, ScalarField) else other
        return self.with_values(self.values + other)

    def __sub__(self, other):
        other = other.values if isinstance(other, ScalarField) else other
        return self.with_values(self.values - other)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class VectorField:
    """Values of shape ``dims + (N,)``."""

    grid: DomainGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        shape = self.grid.dims + (self.grid.ndim,)
        if vals.size != int(np.prod(shape)):
            raise ValueError(f"expected shape {shape}, got {vals.shape}")
        vals = vals.reshape(shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def flat(self) -> np.ndarray:
        """Shape ``(n, N)``."""
        return self.values.reshape(self.grid.n, self.grid.ndim)


@dataclass(frozen=True)
class PairMask:
    """Which ordered pairs interact: all of them, or those within distance ``radius``."""

    mode: str = "full"
    radius: float | None = None

    def __post_init__(self):
        if self.mode not in ("full", "radius"):
            raise ValueError(f"unknown mask mode {self.mode!r}")
        if self.mode == "radius" and (self.radius is None or not self.radius > 0):
            raise ValueError("radius-truncated mask needs a positive radius")

    @classmethod
    def full(cls) -> "PairMask":
        return cls("full")

    @classmethod
    def truncated(cls, radius: float) -> "PairMask":
        return cls("radius", float(radius))

    def pairs(self, grid: DomainGrid) -> tuple[np.ndarray, np.ndarray]:
        """Active ordered pairs as ``(rows, cols)`` flat-index arrays, row-major order."""
        n = grid.n
        if self.mode == "full":
            return np.repeat(np.arange(n), n), np.tile(np.arange(n), n)
        pts = grid.points()
        rows, cols = [], []
        for i in range(n):
            d = np.linalg.norm(pts - pts[i], axis=-1)
            j = np.nonzero(d <= self.radius)[0]
            rows.append(np.full(j.size, i))
            cols.append(j)
        return np.concatenate(rows), np.concatenate(cols)


@dataclass(frozen=True)
class PairField:
    """Scalar (shape ``(m,)``) or vector (shape ``(m, N)``) values on the active pairs of ``mask``."""

    grid: DomainGrid
    mask: PairMask
    values: np.ndarray
    rows: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    cols: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        rows, cols = self.rows, self.cols
        if rows is None or cols is None:
            rows, cols = self.mask.pairs(self.grid)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape[0] != rows.size:
            raise ValueError(f"expected {rows.size} pair values, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("pair values must be finite")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", vals)

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == 2

    def norms(self) -> np.ndarray:
        """Pointwise Euclidean norm per pair."""
        return np.linalg.norm(self.values, axis=-1) if self.is_vector else np.abs(self.values)

    def with_values(self, values: np.ndarray) -> "PairField":
        return PairField(self.grid, self.mask, values, self.rows, self.cols)

    def dense(self) -> np.ndarray:
        """Dense ``(n, n[, N])`` array with zeros on inactive pairs."""
        n = self.grid.n
        out = np.zeros((n, n) + self.values.shape[1:])
        out[self.rows, self.cols] = self.values
        return out


def local_gradient(u: ScalarField) -> VectorField:
    """
    Forward differences along each axis.

    The last point of each axis repeats the previous difference, so constants map
    to zero and sampled affine functions map to their exact slope.
    """
    grid = u.grid
    comps = []
    for axis, h in enumerate(grid.spacing):
        if grid.dims[axis] == 1:
            comps.append(np.zeros(grid.dims))
            continue
        d = np.diff(u.values, axis=axis) / h
        last = np.take(d, [-1], axis=axis)
        comps.append(np.concatenate([d, last], axis=axis))
    return VectorField(grid, np.stack(comps, axis=-1))


def _forward_diff_transpose(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Transpose of the 1-D forward-difference matrix (with replicated last row), applied along ``axis``."""
    n = v.shape[axis]
    out = np.zeros_like(v)
    if n == 1:
        return out
    v = np.moveaxis(v, axis, 0)
    w = np.moveaxis(out, axis, 0)
    w[1:] += v[:-1] / h
    w[:-1] -= v[:-1] / h
    w[n - 1] += v[n - 1] / h
    w[n - 2] -= v[n - 1] / h
    return np.moveaxis(w, 0, axis)


def local_divergence(v: VectorField) -> ScalarField:
    """Negative adjoint of :func:`local_gradient`: ``<grad u, v> = -<u, div v>``."""
    grid = v.grid
    out = np.zeros(grid.dims)
    for axis, h in enumerate(grid.spacing):
        out -= _forward_diff_transpose(v.values[..., axis], axis, h)
    return ScalarField(grid, out)


def gradient_matrix(grid: DomainGrid) -> np.ndarray:
    """Dense ``(n*N, n)`` matrix of :func:`local_gradient`; rows ordered point-major, component-minor."""
    n, N = grid.n, grid.ndim
    out = np.zeros((n * N, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        out[:, k] = local_gradient(ScalarField(grid, e)).flat.ravel()
    return out


def inner(a: ScalarField | VectorField, b: ScalarField | VectorField) -> float:
    """Cell-measure weighted inner product."""
    return float(np.sum(a.values * b.values) * a.grid.cell_measure)


def pair_inner(a: PairField, b: PairField) -> float:
    """Pair inner product with measure ``mu**2`` per pair."""
    mu = a.grid.cell_measure
    return float(np.sum(a.values * b.values) * mu * mu)


def integrate(u: ScalarField) -> float:
    return float(np.sum(u.flat) * u.grid.cell_measure)


def integrate_pairs(w: PairField) -> float:
    if w.is_vector:
        raise ValueError("integrate_pairs expects a scalar pair field")
    mu = w.grid.cell_measure
    return float(np.sum(w.values) * mu * mu)
