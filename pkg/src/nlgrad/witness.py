"""
Mollifier-based witness functions and the limit experiments built on them.

The standard bump ``J(x) = f(|x|)``, ``f(t) = A exp(1 / (t^2 - 1))`` on ``t < 1``,
has antiderivative profile ``F(z) = int_0^z f``.  The radial function

    h_eps(x) = eps^(1-N) (F(1) - F(|x| / eps))

has ``|grad h_eps| = J_eps``, so its normalized version ``C_{p,eps} h_eps``
concentrates a unit amount of ``|grad|^p`` mass in a ball of radius ``eps``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError, ResolutionError
from .grid import DomainGrid, ScalarField, local_gradient
from .nlops import interaction_split
from .weight import WeightSpec

TABLE_SIZE = 4097
# rounding allowance when comparing successive gaps (scale-invariant cases repeat to the last bit)
MONOTONE_SLACK = 1e-12


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N (2 for N = 1)."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = t < 1.0
    out[inside] = np.exp(1.0 / (t[inside] ** 2 - 1.0))
    return out


@dataclass(frozen=True, eq=False)
class MollifierProfile:
    """Radial profile of the unit-mass standard mollifier in dimension ``N``."""

    N: int = 1
    A: float = field(init=False)
    F1: float = field(init=False)
    _spline: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self):
        N = self.N
        radial = integrate.quad(lambda t: t ** (N - 1) * _bump(t), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]
        A = 1.0 / (sphere_area(N) * radial)
        # cumulative table of F, each panel integrated adaptively
        t = np.linspace(0.0, 1.0, TABLE_SIZE)
        panels = [integrate.quad(_bump, a, b, epsabs=1e-15, epsrel=1e-12)[0] for a, b in zip(t[:-1], t[1:])]
        F = A * np.concatenate([[0.0], np.cumsum(panels)])
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "F1", float(F[-1]))
        object.__setattr__(self, "_spline", CubicHermiteSpline(t, F, A * _bump(t)))

    def f(self, t) -> np.ndarray:
        return self.A * _bump(np.abs(t))

    def F(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.where(z >= 1.0, self.F1, self._spline(np.clip(z, 0.0, 1.0)))

    @property
    def J0(self) -> float:
        return float(self.A * math.exp(-1.0))

    def J(self, x) -> np.ndarray:
        """Mollifier at points of shape ``(..., N)``."""
        return self.f(np.linalg.norm(np.asarray(x, dtype=float), axis=-1))

    def radial_integral(self, g) -> float:
        """``int_{B_1} g(|x|) dx`` for a radial integrand."""
        return sphere_area(self.N) * integrate.quad(
            lambda t: t ** (self.N - 1) * g(t), 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200
        )[0]

    def mass_p(self, p: float) -> float:
        """``int_{B_1} J^p``."""
        return self.radial_integral(lambda t: float(self.f(t)) ** p)


@lru_cache(maxsize=4)
def standard_profile(N: int = 1) -> MollifierProfile:
    return MollifierProfile(N)


def normalization_constant(p: float, eps: float, profile: MollifierProfile | None = None, N: int | None = None) -> float:
    """``C_{p,eps} = eps^(N(p-1)/p) (int J^p)^(-1/p)``; equals 1 when ``p = 1``."""
    if not p >= 1:
        raise DomainError(f"exponent must be >= 1, got {p}")
    if not eps > 0:
        raise DomainError("eps must be positive")
    profile = profile or standard_profile(N or 1)
    if p == 1:
        return 1.0
    Nd = profile.N
    return eps ** (Nd * (p - 1) / p) * profile.mass_p(p) ** (-1.0 / p)


@dataclass(frozen=True, eq=False)
class WitnessFunction:
    kind: str
    center: np.ndarray
    epsilon: float
    p: float
    realized: ScalarField
    profile: MollifierProfile

    def support_mask(self) -> np.ndarray:
        r = np.linalg.norm(self.realized.grid.points() - self.center, axis=-1)
        return (r < self.epsilon).reshape(self.realized.grid.dims)


WITNESS_KINDS = ("h_eps", "h_p_eps_x0", "rho_eps_x0")


def check_ball(grid: DomainGrid, x0, eps: float, min_cells: float = 3.0) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != grid.ndim:
        raise ResolutionError(f"center {x0} does not match the grid dimension {grid.ndim}")
    if not (np.all(x0 - eps > grid.lower) and np.all(x0 + eps < grid.upper)):
        raise ResolutionError(f"ball of radius {eps} around {x0} leaves the domain")
    if eps < min_cells * max(grid.spacing) * (1 - 1e-12):
        raise ResolutionError(f"eps = {eps} is below {min_cells:g} grid cells (h = {max(grid.spacing)})")
    return x0


def snap_to_grid(grid: DomainGrid, x0) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    h = np.asarray(grid.spacing)
    k = np.clip(np.round((x0 - grid.lower) / h - 0.5), 0, np.asarray(grid.dims) - 1)
    return grid.lower + (k + 0.5) * h


def build_witness(
    kind: str,
    x0,
    eps: float,
    p: float,
    grid: DomainGrid,
    profile: MollifierProfile | None = None,
    snap: bool = True,
) -> WitnessFunction:
    """
    Sample a witness on ``grid``.

    With ``snap`` the center moves to the nearest cell centre, so the peak of
    the cusp is a sample point and the discrete gradient carries the full
    ``|grad h|`` mass; otherwise the forward difference straddling the peak loses
    about ``J(0) h / eps`` of it.

    ``h_eps``        ``eps^(1-N)(F(1) - F(|x - x0|/eps))``
    ``h_p_eps_x0``   ``C_{p,eps} * h_eps``
    ``rho_eps_x0``   ``eps^N / J(0) * h_{1,eps}``, whose gradient has sup norm 1.
    """
    if kind not in WITNESS_KINDS:
        raise ValueError(f"unknown witness kind {kind!r}")
    profile = profile or standard_profile(grid.ndim)
    if profile.N != grid.ndim:
        raise ValueError("profile dimension differs from grid dimension")
    if snap:
        x0 = snap_to_grid(grid, x0)
    x0 = check_ball(grid, x0, eps)
    N = grid.ndim
    r = np.linalg.norm(grid.points() - x0, axis=-1)
    h = eps ** (1 - N) * (profile.F1 - profile.F(r / eps))
    h[r >= eps] = 0.0
    if kind == "h_p_eps_x0":
        h = normalization_constant(p, eps, profile) * h
    elif kind == "rho_eps_x0":
        h = eps**N / profile.J0 * h
    return WitnessFunction(kind, x0, float(eps), float(p), ScalarField(grid, h), profile)


def gradient_mass(wf: WitnessFunction) -> float:
    """``sum |G|^p mu`` of the sampled witness; close to 1 for the normalized kind."""
    G = np.linalg.norm(local_gradient(wf.realized).flat, axis=-1)
    return float(np.sum(G**wf.p) * wf.realized.grid.cell_measure)


def f_p_at(w: WeightSpec, grid: DomainGrid, x0, p: float) -> float:
    """``sum_y w(x0, y)^p mu`` on ``grid`` for an arbitrary point ``x0``."""
    pts = grid.points()
    vals = w.evaluate(np.asarray(x0, dtype=float)[None, :], pts, grid)
    return float(np.sum(vals**p) * grid.cell_measure)


def witness_seminorm_power(wf: WitnessFunction, w: WeightSpec, p: float) -> float:
    """Seminorm power of a compactly supported witness, summed only over pairs that touch its support."""
    split = interaction_split(wf.realized, wf.support_mask(), w, p)
    return split["inside"] + split["cross"]


@dataclass
class ExperimentTable:
    columns: tuple[str, ...]
    rows: list[tuple]
    summary: dict

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in r) for r in self.rows]
        return "\n".join(lines) + "\n"


def _grid_for(eps: float, lower, upper, cells_per_eps: int) -> DomainGrid:
    lower, upper = np.atleast_1d(lower), np.atleast_1d(upper)
    dims = [int(math.ceil(cells_per_eps * (hi - lo) / eps - 1e-9)) for lo, hi in zip(lower, upper)]
    return DomainGrid.on_box(lower, upper, dims)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def witness_limit_experiment(
    w: WeightSpec,
    x0,
    p: float,
    eps_schedule: Sequence[float],
    cells_per_eps: int = 16,
    lower: Sequence[float] = (0.0,),
    upper: Sequence[float] = (1.0,),
    target: float | None = None,
    workers: int = 1,
) -> ExperimentTable:
    """
    Seminorm power of ``h_{p,eps}^{x0}`` along a decreasing ``eps`` schedule.

    Each ``eps`` gets its own grid with ``cells_per_eps`` cells per radius.  The
    target ``2 f_w^p(x0)`` defaults to quadrature on the finest grid.
    """
    eps_schedule = [float(e) for e in eps_schedule]
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    if cells_per_eps < 3:
        raise ResolutionError("cells_per_eps must be at least 3")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    grids = [_grid_for(e, lower, upper, cells_per_eps) for e in eps_schedule]
    for g, e in zip(grids, eps_schedule):
        check_ball(g, x0, e)
    if target is None:
        target = 2.0 * f_p_at(w, grids[-1], x0, p)

    def run(k):
        wf = build_witness("h_p_eps_x0", x0, eps_schedule[k], p, grids[k])
        return witness_seminorm_power(wf, w, p)

    values = _map(run, range(len(grids)), workers)
    rows = []
    for e, g, v in zip(eps_schedule, grids, values):
        gap = abs(v - target) / abs(target) if target != 0 else abs(v)
        rows.append((e, g.n, float(v), float(target), float(gap)))
    gaps = [r[4] for r in rows]
    tail = gaps[-3:]
    summary = {
        "target": float(target),
        "final_value": rows[-1][2],
        "final_rel_gap": rows[-1][4],
        "monotone_tail": bool(all(b <= a + MONOTONE_SLACK for a, b in zip(tail, tail[1:]))),
    }
    return ExperimentTable(("eps", "grid_n", "value", "target", "rel_gap"), rows, summary)


def lp_bracket_constant(p: float, profile: MollifierProfile | None = None) -> float:
    """``(int J^p)^(-1) int_{B_1} |F(1) - F(|x|)|^p dx``: the prefactor of the ``eps^p`` law."""
    profile = profile or standard_profile(1)
    return profile.radial_integral(lambda t: float(abs(profile.F1 - profile.F(t))) ** p) / profile.mass_p(p)


def lp_scaling_check(
    x0,
    p: float,
    eps_schedule: Sequence[float],
    cells_per_eps: int = 32,
    lower: Sequence[float] = (0.0,),
    upper: Sequence[float] = (1.0,),
    workers: int = 1,
) -> ExperimentTable:
    """``||h_{p,eps}^{x0}||_p^p`` along the schedule with its log-log fit against ``eps``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    eps_schedule = [float(e) for e in eps_schedule]
    grids = [_grid_for(e, lower, upper, cells_per_eps) for e in eps_schedule]

    def run(k):
        wf = build_witness("h_p_eps_x0", x0, eps_schedule[k], p, grids[k])
        return float(np.sum(np.abs(wf.realized.flat) ** p) * grids[k].cell_measure)

    values = _map(run, range(len(grids)), workers)
    slope, intercept = np.polyfit(np.log(eps_schedule), np.log(values), 1)
    constant = lp_bracket_constant(p, standard_profile(len(x0)))
    rows = [(e, g.n, v) for e, g, v in zip(eps_schedule, grids, values)]
    summary = {
        "slope": float(slope),
        "intercept_constant": float(math.exp(intercept)),
        "bracket_constant": float(constant),
        "slope_error": float(abs(slope - p)),
        "intercept_rel_error": float(abs(math.exp(intercept) - constant) / constant),
    }
    return ExperimentTable(("eps", "grid_n", "lp_norm_pow"), rows, summary)
