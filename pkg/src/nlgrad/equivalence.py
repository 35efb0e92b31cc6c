"""
Affine-reduced local seminorms and their relation to the constant-weight nonlocal seminorm.

Only ``grad g`` of an affine ``g`` enters a seminorm, so the infimum over affine
functions is a fit of a constant vector ``a`` to the gradient field:

    residual_p(u) = min_a sum_x |G(x) - a|^p mu.

On the grid this gives the exact sandwich

    |Omega| residual_p(u) <= sum_{x,y} |G(y) - G(x)|^p mu^2 <= 2^p |Omega| residual_p(u).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import DomainError, NumericalError
from .grid import ScalarField, VectorField, _forward_diff_transpose, local_gradient
from .nlops import ONE, seminorm, seminorm_power

MAX_ITERS = 100_000
STEP_TOL = 1e-10
COINCIDENCE_TOL = 1e-12


@dataclass
class AffineReduction:
    slope: np.ndarray
    residual: float
    p: float
    iterations: int = 0

    def to_dict(self):
        return {"slope": [float(v) for v in self.slope], "residual": self.residual, "p": self.p, "iterations": self.iterations}


def _fit_objective(G: np.ndarray, a: np.ndarray, p: float, mu: float) -> float:
    d = np.linalg.norm(G - a, axis=-1)
    if np.isinf(p):
        return float(d.max())
    return float(np.sum(d**p) * mu)


def geometric_median(points: np.ndarray, weights: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """
    Weighted geometric median by Weiszfeld iteration.

    When an iterate lands on a data point the Vardi-Zhang rule applies: stop if
    the pull of the remaining points does not exceed that point's weight,
    otherwise step off it.
    """
    points = np.asarray(points, dtype=float)
    w = np.ones(len(points)) if weights is None else np.asarray(weights, dtype=float)
    scale = max(1.0, float(np.max(np.abs(points))))
    y = np.median(points, axis=0)
    for it in range(1, MAX_ITERS + 1):
        diff = points - y
        d = np.linalg.norm(diff, axis=-1)
        hit = d <= COINCIDENCE_TOL * scale
        free = ~hit
        if not np.any(free):
            return y, it
        inv = w[free] / d[free]
        T = (inv[:, None] * points[free]).sum(axis=0) / inv.sum()
        if np.any(hit):
            eta = w[hit].sum()
            R = (inv[:, None] * diff[free]).sum(axis=0)
            r = np.linalg.norm(R)
            if r <= eta:
                return y, it
            frac = eta / r
            y_new = (1 - frac) * T + frac * y
        else:
            y_new = T
        step = np.linalg.norm(y_new - y)
        y = y_new
        if step < STEP_TOL * scale:
            return y, it
    raise NumericalError("Weiszfeld iteration did not converge", best=y)


def _newton_fit(G: np.ndarray, p: float, mu: float) -> tuple[np.ndarray, int]:
    """Damped Newton for ``min_a sum |G - a|^p`` with ``1 < p < inf``."""
    N = G.shape[1]
    scale = max(1.0, float(np.max(np.abs(G))))
    a = G.mean(axis=0)
    f = _fit_objective(G, a, p, mu)
    eta = 1e-12 * scale
    for it in range(1, MAX_ITERS + 1):
        d = G - a
        r = np.maximum(np.linalg.norm(d, axis=-1), eta)
        grad = -p * np.sum((r ** (p - 2))[:, None] * d, axis=0) * mu
        u = d / r[:, None]
        H = p * mu * np.einsum("k,kij->ij", r ** (p - 2), np.eye(N)[None] + (p - 2) * u[:, :, None] * u[:, None, :])
        try:
            step = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = -grad
        t = 1.0
        while t > 1e-16:
            cand = a + t * step
            fc = _fit_objective(G, cand, p, mu)
            if fc <= f:
                break
            t *= 0.5
        else:
            return a, it
        moved = np.linalg.norm(cand - a)
        a, f = cand, fc
        if moved < STEP_TOL * scale:
            return a, it
    raise NumericalError("Newton fit did not converge", best=a)


def affine_reduced_seminorm(u: ScalarField, p: float) -> AffineReduction:
    """
    ``min_a sum |G(x) - a|^p mu`` with ``G = local_gradient(u)``.

    ``p = 2``: the mean.  ``p = 1``: geometric median (Weiszfeld).
    ``1 < p < inf``: damped Newton.  ``p = inf``: minimal enclosing radius.
    """
    if not p >= 1:
        raise DomainError(f"exponent must be >= 1, got {p}")
    G = local_gradient(u).flat
    mu = u.grid.cell_measure
    its = 0
    if p == 2:
        a = G.mean(axis=0)
    elif p == 1:
        a, its = geometric_median(G)
    elif np.isinf(p):
        if G.shape[1] == 1:
            a = np.array([(G.max() + G.min()) / 2])
        else:
            res = optimize.minimize(
                lambda z: _fit_objective(G, z, p, mu), G.mean(axis=0), method="Nelder-Mead",
                options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000},
            )
            a, its = res.x, int(res.nit)
    else:
        a, its = _newton_fit(G, p, mu)
    return AffineReduction(np.asarray(a, dtype=float), _fit_objective(G, a, p, mu), float(p), its)


@dataclass
class SandwichReport:
    lower: float
    middle: float
    upper: float
    ok: bool
    p: float
    nltv_form_ok: bool | None = None

    def to_dict(self):
        return {
            "p": self.p, "lower": self.lower, "middle": self.middle, "upper": self.upper,
            "ok": self.ok, "nltv_form_ok": self.nltv_form_ok,
        }


def sandwich_check(u: ScalarField, p: float, slack: float = 1e-9) -> SandwichReport:
    """Check ``|Omega| r <= seminorm_1(u)^p <= 2^p |Omega| r`` with ``r`` the affine-reduced residual."""
    red = affine_reduced_seminorm(u, p)
    vol = u.grid.measure
    if np.isinf(p):
        lower, upper = red.residual, 2.0 * red.residual
        middle = seminorm(u, ONE, np.inf)
    else:
        lower, upper = vol * red.residual, 2.0**p * vol * red.residual
        middle = seminorm_power(u, ONE, p)
    tol = slack * max(1.0, abs(middle))
    ok = bool(lower <= middle + tol and middle <= upper + tol)
    nltv_ok = None
    if p == 1:
        # BV form: TV(u - g*) = sum |G - a*| mu, i.e. the same residual
        tv = float(np.sum(np.linalg.norm(local_gradient(u).flat - red.slope, axis=-1)) * u.grid.cell_measure)
        nltv_ok = bool(vol * tv <= middle + tol)
    return SandwichReport(lower, middle, upper, ok, float(p), nltv_ok)


def _theta_integral(theta: ScalarField) -> float:
    total = float(np.sum(theta.flat) * theta.grid.cell_measure)
    size = float(np.max(np.abs(theta.flat))) * theta.grid.measure
    if not abs(total) > 1e-12 * size or size == 0:
        raise DomainError("theta integrates to (numerically) zero")
    return total


def theta_derivative(theta: ScalarField, derivative: str = "adjoint") -> np.ndarray:
    """
    Discrete ``grad theta``, shape ``(n, N)``.

    ``"adjoint"`` uses minus the transpose of the forward difference, for which
    summation by parts against :func:`local_gradient` is exact; ``"forward"``
    is the plain forward difference, consistent only to ``O(h)``.
    """
    if derivative == "forward":
        return local_gradient(theta).flat
    if derivative != "adjoint":
        raise ValueError(f"unknown derivative mode {derivative!r}")
    grid = theta.grid
    comps = [-_forward_diff_transpose(theta.values, axis, h).ravel() for axis, h in enumerate(grid.spacing)]
    return np.stack(comps, axis=-1)


def theta_reconstruction(u: ScalarField, theta: ScalarField, derivative: str = "adjoint") -> VectorField:
    """
    Rebuild ``grad u`` from ``u`` and its constant-weight nonlocal gradient:

        grad u(x) = -(1 / int theta) sum_y [u(y) grad theta(y) + (G(y) - G(x)) theta(y)] mu
    """
    if theta.grid != u.grid:
        raise DomainError("theta lives on a different grid")
    total = _theta_integral(theta)
    mu = u.grid.cell_measure
    G = local_gradient(u).flat
    dtheta = theta_derivative(theta, derivative)
    th = theta.flat
    first = np.sum(u.flat[:, None] * dtheta, axis=0) * mu
    # sum_y (G(y) - G(x)) theta(y) mu = <G, theta> - G(x) int theta
    second = np.sum(G * th[:, None], axis=0) * mu - G * total
    return VectorField(u.grid, -(first[None, :] + second) / total)


def reconstruction_tolerance(u: ScalarField, theta: ScalarField) -> float:
    """
    ``10 h |u|_inf c_theta``: ten times the worst-case summation-by-parts defect of
    the forward-difference reconstruction, ``c_theta = sum |(D + D^T) theta| mu / (h |int theta|)``.
    """
    h = max(u.grid.spacing)
    total = abs(_theta_integral(theta))
    defect = np.abs(theta_derivative(theta, "forward") - theta_derivative(theta, "adjoint"))
    c_theta = float(np.sum(defect) * u.grid.cell_measure) / (h * total)
    return 10.0 * h * float(np.max(np.abs(u.flat))) * c_theta


def equivalence_constants(theta: ScalarField, p: float) -> dict:
    """
    Constant of the embedding of the constant-weight nonlocal space into the local one:

        C^p = (2|Omega|)^(p-1) / |int theta|^p * max(|Omega| |grad theta|_inf^p, |theta|_inf^p)

    together with the a-priori bound ``2^(p-1) / |Omega| <= C^p`` (``1 <= C^inf``).
    """
    vol = theta.grid.measure
    mu = theta.grid.cell_measure
    total = _theta_integral(theta)
    dth = np.linalg.norm(local_gradient(theta).flat, axis=-1)
    if np.isinf(p):
        C = max(float(np.sum(dth) * mu), float(np.sum(np.abs(theta.flat)) * mu)) / abs(total)
        lower = 1.0
    else:
        C = (2 * vol) ** (p - 1) / abs(total) ** p * max(vol * float(dth.max()) ** p, float(np.max(np.abs(theta.flat))) ** p)
        lower = 2 ** (p - 1) / vol
    return {"C_p_theta": float(C), "lower_bound": float(lower), "bound_holds": bool(C >= lower * (1 - 1e-12))}
