"""
Nonlocal calculus on grids: the weighted pair gradient, its adjoint divergence,
the ``L^p`` seminorms built from them and the dual description of NLTV.

The nonlocal gradient of ``u`` is the pair field

    grad_w u(x, y) = w(x, y) * (G(y) - G(x)),   G = local_gradient(u),

and ``div_w`` is defined as its exact negative adjoint for the inner products
``<u, v> = sum u v mu`` on points and ``<a, b> = sum a . b mu^2`` on pairs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import DomainError
from .grid import (
    DomainGrid,
    PairField,
    PairMask,
    ScalarField,
    VectorField,
    inner,
    local_divergence,
    local_gradient,
)
from .weight import Constant, WeightSpec

ONE = Constant(1.0)


@lru_cache(maxsize=16)
def _cached_pairs(grid: DomainGrid, mask: PairMask):
    rows, cols = mask.pairs(grid)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def active_pairs(grid: DomainGrid, mask: PairMask | None = None) -> tuple[np.ndarray, np.ndarray]:
    return _cached_pairs(grid, mask or PairMask.full())


def pair_weights(w: WeightSpec, grid: DomainGrid, mask: PairMask | None = None) -> np.ndarray:
    rows, cols = active_pairs(grid, mask)
    return np.asarray(w.pair_values(grid, rows, cols), dtype=float)


def difference_pairs(G: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """``G[y] - G[x]`` for every active pair; ``G`` has shape ``(n, N)``."""
    return G[cols] - G[rows]


def nonlocal_gradient(u: ScalarField, w: WeightSpec, mask: PairMask | None = None) -> PairField:
    mask = mask or PairMask.full()
    rows, cols = active_pairs(u.grid, mask)
    G = local_gradient(u).flat
    vals = pair_weights(w, u.grid, mask)[:, None] * difference_pairs(G, rows, cols)
    return PairField(u.grid, mask, vals, rows, cols)


def _pair_transpose(phi: np.ndarray, rows: np.ndarray, cols: np.ndarray, n: int) -> np.ndarray:
    """``psi(z) = sum_{pairs (x,z)} phi - sum_{pairs (z,y)} phi``, per component."""
    phi = phi.reshape(phi.shape[0], -1)
    out = np.empty((n, phi.shape[1]))
    for k in range(phi.shape[1]):
        out[:, k] = np.bincount(cols, phi[:, k], minlength=n) - np.bincount(rows, phi[:, k], minlength=n)
    return out


def nonlocal_divergence(phi: PairField, w: WeightSpec | None = None) -> ScalarField:
    """
    Negative adjoint of :func:`nonlocal_gradient`.

    ``div_w phi`` equals ``div_1 (w phi)``: the weight multiplies the pair field
    and the unweighted divergence does the rest.
    """
    grid = phi.grid
    vals = phi.values if phi.is_vector else phi.values[:, None]
    if w is not None and not (isinstance(w, Constant) and w.c == 1.0):
        vals = pair_weights(w, grid, phi.mask)[:, None] * vals
    psi = _pair_transpose(vals, phi.rows, phi.cols, grid.n) * grid.cell_measure
    return local_divergence(VectorField(grid, psi))


def pair_norm_power(vals: np.ndarray, p: float) -> np.ndarray:
    norms = np.linalg.norm(vals, axis=-1) if vals.ndim == 2 else np.abs(vals)
    return norms if p == 1 else norms**p


def seminorm(u: ScalarField, w: WeightSpec, p: float = 2.0, mask: PairMask | None = None) -> float:
    """``(sum |grad_w u|^p mu^2)^(1/p)``; the maximum over active pairs when ``p = inf``."""
    if not p >= 1:
        raise DomainError(f"exponent must be >= 1, got {p}")
    vals = nonlocal_gradient(u, w, mask).values
    if np.isinf(p):
        return float(np.max(np.linalg.norm(vals, axis=-1))) if vals.size else 0.0
    mu = u.grid.cell_measure
    total = float(np.sum(pair_norm_power(vals, p)) * mu * mu)
    return total if p == 1 else total ** (1.0 / p)


def seminorm_power(u: ScalarField, w: WeightSpec, p: float, mask: PairMask | None = None) -> float:
    """``seminorm(u, w, p) ** p`` computed without the root."""
    mu = u.grid.cell_measure
    return float(np.sum(pair_norm_power(nonlocal_gradient(u, w, mask).values, p)) * mu * mu)


def nltv(u: ScalarField, w: WeightSpec, mask: PairMask | None = None) -> float:
    return seminorm(u, w, 1.0, mask)


def total_variation(u: ScalarField) -> float:
    """Isotropic discrete TV: ``sum |G(x)| mu``."""
    return float(np.sum(np.linalg.norm(local_gradient(u).flat, axis=-1)) * u.grid.cell_measure)


def digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return h.hexdigest()[:16]


@dataclass
class DualCheckReport:
    formula: float
    maximizer_value: float
    best_feasible: float
    attained: bool
    never_exceeded: bool
    trials: int

    def to_dict(self):
        return {
            "formula": self.formula,
            "maximizer_value": self.maximizer_value,
            "best_feasible": self.best_feasible,
            "attained": self.attained,
            "never_exceeded": self.never_exceeded,
            "trials": self.trials,
        }


def optimal_dual_field(u: ScalarField, w: WeightSpec) -> PairField:
    """``phi*(x, y) = -w(x, y) grad_1 u / |grad_1 u|``, zero where ``grad_1 u`` vanishes."""
    g1 = nonlocal_gradient(u, ONE)
    norms = np.linalg.norm(g1.values, axis=-1)
    safe = np.where(norms > 0, norms, 1.0)
    omega = pair_weights(w, u.grid, g1.mask)
    vals = np.where((norms > 0)[:, None], -omega[:, None] * g1.values / safe[:, None], 0.0)
    return g1.with_values(vals)


def random_feasible_field(grid: DomainGrid, w: WeightSpec, rng: np.random.Generator) -> PairField:
    """Random pair field with ``|phi(x, y)| <= w(x, y)``; a quarter of the pairs sit on the boundary."""
    rows, cols = active_pairs(grid)
    omega = pair_weights(w, grid)
    direction = rng.standard_normal((rows.size, grid.ndim))
    direction /= np.maximum(np.linalg.norm(direction, axis=-1, keepdims=True), 1e-300)
    radius = rng.uniform(0.0, 1.0, rows.size)
    radius[rng.uniform(size=rows.size) < 0.25] = 1.0
    return PairField(grid, PairMask.full(), (omega * radius)[:, None] * direction, rows, cols)


def nltv_dual_check(
    u: ScalarField, w: WeightSpec, trials: int = 1000, rng: np.random.Generator | None = None
) -> DualCheckReport:
    """
    Compare the closed-form NLTV with the dual objective ``<u, div_1 phi>``.

    The maximizer ``phi*`` should reproduce the formula to 1e-10 relative, and no
    random feasible ``phi`` (``|phi| <= w`` pairwise) may exceed it.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    formula = nltv(u, w)
    at_max = inner(u, nonlocal_divergence(optimal_dual_field(u, w)))
    scale = max(abs(formula), np.finfo(float).tiny)
    best = -np.inf
    for _ in range(trials):
        best = max(best, inner(u, nonlocal_divergence(random_feasible_field(u.grid, w, rng))))
    slack = 1e-10 * max(scale, 1.0)
    return DualCheckReport(
        formula=formula,
        maximizer_value=at_max,
        best_feasible=float(best) if trials else float("nan"),
        attained=bool(abs(at_max - formula) <= 1e-10 * scale or abs(at_max - formula) <= 1e-14),
        never_exceeded=bool(trials == 0 or best <= formula + slack),
        trials=trials,
    )


def gradient_footprint(u: ScalarField, support: np.ndarray) -> np.ndarray:
    """``support`` enlarged by every point where the forward-difference gradient is nonzero."""
    G = local_gradient(u).flat
    return support.ravel() | np.any(G != 0, axis=-1)


def interaction_split(u: ScalarField, support: np.ndarray, w: WeightSpec, p: float) -> dict:
    """
    Split ``seminorm(u, w, p)**p`` into interactions inside the support and across it.

    ``support`` is a boolean array over the grid; ``u`` must vanish outside it.
    Because a forward difference reaches one cell past the support, the split is
    taken over the gradient footprint (support plus the points where ``G != 0``),
    which makes ``inside + cross`` exact.
    """
    grid = u.grid
    support = np.asarray(support, dtype=bool).reshape(grid.dims)
    if np.any(u.values[~support] != 0):
        raise DomainError("u is nonzero outside the declared support")
    S = gradient_footprint(u, support)
    idx = np.nonzero(S)[0]
    mu = grid.cell_measure
    G = local_gradient(u).flat
    if idx.size == 0:
        return {"inside": 0.0, "cross": 0.0, "footprint_size": 0}
    W = w.row_block(grid, idx) ** p
    Gs = G[idx]
    diff = np.linalg.norm(Gs[None, :, :] - Gs[:, None, :], axis=-1) ** p
    inside = float(np.sum(W[:, idx] * diff) * mu * mu)
    outside = ~S
    far = np.sum(W[:, outside], axis=1) * mu
    cross = float(2.0 * np.sum(np.linalg.norm(Gs, axis=-1) ** p * far) * mu)
    return {"inside": inside, "cross": cross, "footprint_size": int(idx.size)}


def continuous_divergence(
    phi: Callable[[np.ndarray, np.ndarray], np.ndarray], w: WeightSpec, grid: DomainGrid, delta: float = 1e-6
) -> ScalarField:
    """
    Independent discretization of the integral divergence formula.

    For each point ``x`` the map ``x' -> sum_y w(x', y)(phi_i(y, x') - phi_i(x', y)) mu``
    is differentiated along axis ``i`` by a central difference of step ``delta``.
    ``phi(x, y)`` takes point arrays of shape ``(..., N)`` and returns ``(..., N)``.
    Used as a consistency diagnostic for :func:`nonlocal_divergence`.
    """
    pts = grid.points()
    mu = grid.cell_measure
    out = np.zeros(grid.n)
    for i in range(grid.ndim):
        e = np.zeros(grid.ndim)
        e[i] = delta
        vals = []
        for sgn in (1.0, -1.0):
            x = (pts + sgn * e)[:, None, :]
            y = pts[None, :, :]
            integrand = w.evaluate(x, y, grid) * (phi(y, x)[..., i] - phi(x, y)[..., i])
            vals.append(np.sum(integrand, axis=1) * mu)
        out += (vals[0] - vals[1]) / (2 * delta)
    return ScalarField(grid, out)


def random_symmetric_weight(n: int, rng: np.random.Generator) -> WeightSpec:
    from .weight import Tabulated

    a = rng.uniform(0.0, 2.0, (n, n))
    return Tabulated(np.triu(a) + np.triu(a, 1).T)


def adjoint_audit(
    grids: list[DomainGrid], trials: int = 100, rng: np.random.Generator | None = None
) -> dict:
    """
    ``|<grad_w u, phi> + <u, div_w phi>|`` over random ``(u, phi, w)`` triples,
    relative to ``|grad_w u| |phi|`` (Cauchy-Schwarz scale).  Grids are cycled.
    """
    from .grid import pair_inner

    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    residuals = []
    for t in range(trials):
        grid = grids[t % len(grids)]
        w = random_symmetric_weight(grid.n, rng)
        u = ScalarField(grid, rng.standard_normal(grid.n))
        gu = nonlocal_gradient(u, w)
        phi = gu.with_values(rng.standard_normal(gu.values.shape))
        lhs = pair_inner(gu, phi)
        rhs = inner(u, nonlocal_divergence(phi, w))
        scale = max(np.sqrt(pair_inner(gu, gu) * pair_inner(phi, phi)), abs(lhs), abs(rhs)) or 1.0
        rel = abs(lhs + rhs) / scale
        residuals.append(rel)
        worst = max(worst, rel)
    return {"trials": trials, "max_relative_residual": float(worst), "residuals": residuals}
