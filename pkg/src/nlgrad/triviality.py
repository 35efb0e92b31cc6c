"""
Collapse of nonlocal spaces on growing domains.

For a weight bounded below by ``c > 0`` the cross interaction of a non-affine
``u`` with the far region grows like the measure of the domain,

    sum |grad_w u|^p mu^2 >= 2 c^p |Omega \\ S| sum_S |G|^p mu,

so the seminorm diverges as the domain grows.  ``growth_scan`` exhibits the
linear rate on intervals ``(0, L)`` with fixed spacing, ``test_function_criterion``
compares divergence of ``int_K f_p`` with that of a bump supported in ``K``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError
from .grid import DomainGrid, ScalarField, local_gradient
from .nlops import interaction_split, seminorm_power
from .weight import GROWTH_THRESHOLD, Constant, WeightSpec, f_p, integral_over_box, weight_extrema
from .witness import ExperimentTable

LINEAR_SPREAD = 0.10


def bump(grid: DomainGrid, center, radius: float) -> ScalarField:
    """Smooth bump ``exp(1 - 1 / (1 - r^2))`` on the ball of the given radius (peak 1)."""
    pts = grid.points()
    r2 = np.sum((pts - np.asarray(center, dtype=float)) ** 2, axis=-1) / radius**2
    vals = np.zeros(grid.n)
    inside = r2 < 1
    vals[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return ScalarField(grid, vals)


@dataclass
class GrowthExperiment:
    """1D bump (or affine control) on ``(0, L)`` for each ``L`` in ``lengths``, spacing ``h``."""

    weight: WeightSpec = field(default_factory=lambda: Constant(1.0))
    lengths: tuple = (1.0, 2.0, 4.0, 8.0)
    h: float = 1.0 / 64
    center: float = 0.5
    radius: float = 0.1
    profile: str = "bump"
    slope: float = 1.0

    def __post_init__(self):
        if self.profile not in ("bump", "affine"):
            raise ConfigurationError(f"unknown profile {self.profile!r}")
        self.lengths = tuple(float(L) for L in self.lengths)
        if list(self.lengths) != sorted(set(self.lengths)):
            raise ConfigurationError("lengths must be strictly increasing")
        L0 = self.lengths[0]
        margin = 2 * self.h
        if self.profile == "bump" and not (margin < self.center - self.radius and self.center + self.radius < L0 - margin):
            raise ConfigurationError("bump support must lie well inside the smallest domain")

    def grid(self, L: float) -> DomainGrid:
        n = int(round(L / self.h))
        if not np.isclose(n * self.h, L):
            raise ConfigurationError(f"length {L} is not a multiple of h = {self.h}")
        return DomainGrid.on_box((0.0,), (L,), (n,))

    def field(self, grid: DomainGrid) -> ScalarField:
        if self.profile == "affine":
            return grid.sample(lambda x: self.slope * x[:, 0] + 0.25)
        return bump(grid, (self.center,), self.radius)


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def growth_scan(exp: GrowthExperiment, p: float = 1.0, workers: int = 1) -> ExperimentTable:
    """
    Seminorm power of the fixed profile on every domain of the schedule.

    Verdict (``summary["linear_growth"]``): values strictly increasing and the
    last three ratios ``value / |Omega|`` within 10% of each other.  The slope of
    value vs ``|Omega|`` over the last three entries is compared against half the
    far-field rate ``2 c^p sum |G|^p mu`` with ``c = inf w`` on the largest domain.
    """
    if not p >= 1:
        raise DomainError(f"exponent must be >= 1, got {p}")

    def run(L):
        grid = exp.grid(L)
        u = exp.field(grid)
        if exp.profile == "affine":
            return grid.measure, seminorm_power(u, exp.weight, p)
        # exact and O(|S| n): only pairs touching the gradient footprint contribute
        split = interaction_split(u, u.values != 0, exp.weight, p)
        return grid.measure, split["inside"] + split["cross"]

    rows = []
    for L, (meas, val) in zip(exp.lengths, _map(run, exp.lengths, workers)):
        rows.append((L, meas, val, val / meas))
    vals = np.array([r[2] for r in rows])
    ratios = np.array([r[3] for r in rows])
    meas = np.array([r[1] for r in rows])
    tail = ratios[-3:]
    spread = float((tail.max() - tail.min()) / tail.max()) if tail.max() > 0 else 0.0
    increasing = bool(np.all(np.diff(vals) > 0))
    slope = float(np.polyfit(meas[-3:], vals[-3:], 1)[0]) if len(rows) >= 3 else float("nan")

    big = exp.grid(exp.lengths[-1])
    c = weight_extrema(exp.weight, big)[0]
    G = local_gradient(exp.field(big)).flat
    far_rate = 2.0 * c**p * float(np.sum(np.linalg.norm(G, axis=-1) ** p) * big.cell_measure)
    summary = {
        "p": p,
        "profile": exp.profile,
        "strictly_increasing": increasing,
        "tail_ratio_spread": spread,
        "linear_growth": bool(increasing and spread <= LINEAR_SPREAD),
        "tail_slope": slope,
        "far_field_rate": far_rate,
        "slope_ok": bool(slope > 0 and slope >= 0.5 * far_rate),
        "all_zero": bool(np.all(vals == 0)),
        "omega_floor": c,
    }
    return ExperimentTable(("L", "measure", "seminorm_pow", "ratio"), rows, summary)


def doubling_schedule(h: float = 1.0 / 32, lengths=(1.0, 2.0, 4.0, 8.0)) -> list[DomainGrid]:
    return [DomainGrid.on_box((0.0,), (L,), (int(round(L / h)),)) for L in lengths]


def test_function_criterion(
    w: WeightSpec,
    K: tuple,
    schedule: list[DomainGrid],
    p: float = 1.0,
    workers: int = 1,
) -> dict:
    """
    Track ``int_K f_p`` and the seminorm power of a bump supported in ``K`` over a
    growing domain schedule.  Either diverges when its last growth ratio exceeds
    the growth threshold; the two verdicts should agree (``lockstep``).
    A diverging ``int_K f_p`` predicts that no nonzero smooth compactly supported
    function has a finite seminorm.
    """
    lower, upper = (np.atleast_1d(np.asarray(v, dtype=float)) for v in K)
    for grid in schedule:
        if not grid.contains_box(lower, upper):
            raise DomainError(f"K = [{lower}, {upper}] is not strictly inside {grid.lower}..{grid.upper}")
    center = (lower + upper) / 2
    radius = float(np.min(upper - lower)) / 2

    def run(grid):
        fk = integral_over_box(f_p(w, grid, p), lower, upper)
        s = seminorm_power(bump(grid, center, radius), w, p)
        return grid.measure, fk, s

    rows = _map(run, schedule, workers)

    def last_ratio(col):
        a, b = rows[-2][col], rows[-1][col]
        if a == 0:
            return 1.0 if b == 0 else np.inf
        return b / a

    fk_ratio, s_ratio = last_ratio(1), last_ratio(2)
    fk_div, s_div = bool(fk_ratio > GROWTH_THRESHOLD), bool(s_ratio > GROWTH_THRESHOLD)
    table = ExperimentTable(("measure", "integral_K_f_p", "bump_seminorm_pow"), [tuple(r) for r in rows], {})
    return {
        "p": p,
        "table": table,
        "integral_ratio": float(fk_ratio),
        "bump_ratio": float(s_ratio),
        "integral_diverges": fk_div,
        "bump_diverges": s_div,
        "predicted_trivial": fk_div,
        "lockstep": fk_div == s_div,
    }


test_function_criterion.__test__ = False
