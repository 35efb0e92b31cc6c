"""
Minimizers for the nonlocal variational problems

    I_w(u)   = NLTV_w(u) + F(u)                       (p = 1)
    I_w^p(u) = sum |grad_w u|^p mu^2 + F(u)            (p > 1)

with a convex, coercive fidelity ``F``.

* ``p = 1``: primal-dual hybrid gradient (Chambolle-Pock) on
  ``min_u max_{|phi| <= w} <grad_1 u, phi> + F(u)``; the dual step is a per-pair
  projection onto the ball of radius ``w(x, y)``.  Stops on the primal-dual gap.
* ``p = 2`` with a quadratic fidelity: conjugate gradients on the normal equations.
* any other ``p``: accelerated gradient descent with backtracking.

Inner products are ``sum u v mu`` on points and ``sum a . b mu^2`` on pairs, so
the adjoint of ``K = grad_1`` is ``K* = mu K^T``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import linalg, ndimage, optimize

from .errors import ConfigurationError, NumericalError
from .grid import DomainGrid, PairMask, ScalarField, VectorField, local_divergence, local_gradient
from .nlops import _pair_transpose, active_pairs, pair_weights
from .weight import WeightSpec

TIKHONOV_FLOOR = 1e-8
POWER_ITERATIONS = 30
# active-set refinement for p = 1 (1D, quadratic fidelity, small grids)
POLISH_MAX_POINTS = 64
POLISH_EVERY = 200
# iterations without objective decrease before the round-off floor is accepted
STALL_WINDOW = 500


# fidelity --------------------------------------------------------------------


@dataclass(eq=False)
class FidelityTerm:
    """
    ``lq``:     ``(lam / q) sum |u - g|^q mu``
    ``deblur``: ``(lam / 2) sum |K * u - g|^2 mu`` (+ a Tikhonov floor when the blur is not injective)
    """

    kind: str
    lam: float
    data: ScalarField
    q: float = 2.0
    kernel: np.ndarray | None = None
    tikhonov: float = 0.0
    _B: np.ndarray | None = field(default=None, repr=False)
    _eig: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("lq", "deblur"):
            raise ConfigurationError(f"unknown fidelity kind {self.kind!r}")
        if not self.lam > 0:
            raise ConfigurationError("fidelity.lambda must be positive")
        if self.kind == "lq" and not (1 < self.q < np.inf):
            raise ConfigurationError("fidelity.q must lie in (1, inf)")
        if self.kind == "deblur":
            self.q = 2.0
            self._setup_blur()

    @classmethod
    def lq(cls, lam: float, data: ScalarField, q: float = 2.0) -> "FidelityTerm":
        return cls("lq", float(lam), data, float(q))

    @classmethod
    def deblur(cls, lam: float, data: ScalarField, kernel) -> "FidelityTerm":
        return cls("deblur", float(lam), data, 2.0, np.asarray(kernel, dtype=float))

    def _setup_blur(self):
        k = np.asarray(self.kernel, dtype=float)
        grid = self.data.grid
        if k.ndim != grid.ndim or any(s % 2 == 0 for s in k.shape):
            raise ConfigurationError("fidelity.kernel must have odd size along every grid axis")
        if not np.allclose(k, k[tuple(slice(None, None, -1) for _ in range(k.ndim))]):
            raise ConfigurationError("fidelity.kernel must be symmetric")
        n = grid.n
        B = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            B[:, j] = ndimage.convolve(e.reshape(grid.dims), k, mode="constant").ravel()
        self._B = B
        spec = np.abs(np.linalg.eigvalsh(B))
        if spec.min() <= 1e-6 * max(spec.max(), 1e-300):
            self.tikhonov = TIKHONOV_FLOOR
        Q = self.lam * B.T @ B + self.tikhonov * np.eye(n)
        s, V = np.linalg.eigh(Q)
        self._eig = (s, V)

    @property
    def g(self) -> np.ndarray:
        return self.data.flat

    @property
    def coercive_without_floor(self) -> bool:
        return self.kind == "lq" or self.tikhonov == 0.0

    @property
    def strong_convexity(self) -> float:
        """Modulus of strong convexity w.r.t. the ``mu``-weighted norm (0 if none)."""
        if self.kind == "lq":
            return self.lam if self.q == 2 else 0.0
        return float(self._eig[0].min())

    @property
    def strictly_convex(self) -> bool:
        return self.kind == "lq" or self.strong_convexity > 0

    def value(self, u: np.ndarray, mu: float) -> float:
        if self.kind == "lq":
            return float(self.lam / self.q * np.sum(np.abs(u - self.g) ** self.q) * mu)
        r = self._B @ u - self.g
        return float((0.5 * self.lam * np.sum(r * r) + 0.5 * self.tikhonov * np.sum(u * u)) * mu)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. the ``mu``-weighted inner product."""
        if self.kind == "lq":
            d = u - self.g
            return self.lam * np.abs(d) ** (self.q - 1) * np.sign(d)
        return self.lam * self._B.T @ (self._B @ u - self.g) + self.tikhonov * u

    def prox(self, w: np.ndarray, tau: float) -> np.ndarray:
        """``argmin_v F(v) + |v - w|^2_mu / (2 tau)``."""
        if self.kind == "deblur":
            s, V = self._eig
            rhs = w + tau * self.lam * (self._B.T @ self.g)
            return V @ ((V.T @ rhs) / (1.0 + tau * s))
        g, lam, q = self.g, self.lam, self.q
        if q == 2:
            return (w + tau * lam * g) / (1.0 + tau * lam)
        # per point: minimize (lam/q)|t|^q + (t - c)^2 / (2 tau), t = v - g, c = w - g
        c = w - g
        sgn = np.sign(c)
        a = np.abs(c)
        t = a / (1.0 + tau * lam) if q > 2 else a.copy()
        for _ in range(100):
            phi = tau * lam * t ** (q - 1) + t - a
            dphi = tau * lam * (q - 1) * np.maximum(t, 1e-300) ** (q - 2) + 1.0
            t_new = np.clip(t - phi / dphi, 0.0, a)
            done = np.max(np.abs(t_new - t)) <= 1e-12 * (1.0 + np.max(a))
            t = t_new
            if done:
                break
        return g + sgn * t

    def conjugate(self, s: np.ndarray, mu: float) -> float:
        """Convex conjugate w.r.t. the ``mu``-weighted pairing."""
        if self.kind == "lq":
            qq = self.q / (self.q - 1.0)
            return float(np.sum(s * self.g + self.lam ** (1.0 - qq) / qq * np.abs(s) ** qq) * mu)
        sv, V = self._eig
        z = s + self.lam * (self._B.T @ self.g)
        c = V.T @ z
        return float((0.5 * np.sum(c * c / sv) - 0.5 * self.lam * np.sum(self.g**2)) * mu)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "lambda": self.lam, "q": self.q, "tikhonov": self.tikhonov}
        if self.kernel is not None:
            d["kernel"] = np.asarray(self.kernel).tolist()
        return d


# problem ---------------------------------------------------------------------


@dataclass(eq=False)
class VariationalProblem:
    weight: WeightSpec
    p: float
    fidelity: FidelityTerm
    mask: PairMask = field(default_factory=PairMask.full)
    max_iters: int = 100_000
    tol: float | None = None
    safety: float = 0.95

    def __post_init__(self):
        if not self.p >= 1 or np.isinf(self.p):
            raise ConfigurationError("p must lie in [1, inf)")
        q = self.fidelity.q
        if self.p == 1 and not (1 < q < np.inf):
            raise ConfigurationError("p = 1 needs q in (1, inf)")
        if self.p > 1 and q < self.p:
            raise ConfigurationError(f"p = {self.p} needs q >= p, got q = {q}")
        self._ops = _PairOperator(self.grid, self.mask, self.weight)

    @property
    def grid(self) -> DomainGrid:
        return self.fidelity.data.grid

    def regularizer(self, u: np.ndarray) -> float:
        return self._ops.regularizer(u, self.p)

    def objective(self, u: np.ndarray | ScalarField) -> float:
        u = u.flat if isinstance(u, ScalarField) else np.asarray(u, dtype=float).ravel()
        return self.regularizer(u) + self.fidelity.value(u, self.grid.cell_measure)

    def default_tol(self, start: np.ndarray) -> float:
        scale = 1.0 + abs(self.objective(start))
        if self.p == 1 or (self.p == 2 and self.fidelity.q == 2):
            return 1e-8 * scale
        # gradient-norm certificate: limited by round-off in the objective
        return 1e-6 * scale

    def roundoff_floor(self, u: np.ndarray) -> float:
        """For p < 2, bound on the gradient norm produced by round-off in ``K u`` alone (``|s|^(p-1)`` at ``s ~ eps``)."""
        if self.p >= 2:
            return 0.0
        ops = self._ops
        delta = 64 * np.finfo(float).eps * (1.0 + np.max(np.abs(ops.K(u))) + np.max(np.abs(u)) / np.min(self.grid.spacing))
        # |K^* psi|_mu <= |K| |psi|_mu^2 with |psi| <= p w^p delta^(p-1) on every pair
        pair_norm = np.sqrt(np.sum(ops.omega ** (2 * self.p)) * ops.mu**2)
        return float(self.p * delta ** (self.p - 1) * ops.norm_estimate() * pair_norm)


class _PairOperator:
    """``K u = G(y) - G(x)`` on active pairs and its Euclidean transpose, with cached weights."""

    def __init__(self, grid: DomainGrid, mask: PairMask, weight: WeightSpec):
        self.grid = grid
        self.rows, self.cols = active_pairs(grid, mask)
        self.omega = pair_weights(weight, grid, mask)
        self.mu = grid.cell_measure

    def K(self, u: np.ndarray) -> np.ndarray:
        G = local_gradient(ScalarField(self.grid, u)).flat
        return G[self.cols] - G[self.rows]

    def KT(self, phi: np.ndarray) -> np.ndarray:
        psi = _pair_transpose(phi, self.rows, self.cols, self.grid.n)
        return -local_divergence(VectorField(self.grid, psi)).flat

    def Kadj(self, phi: np.ndarray) -> np.ndarray:
        """Adjoint for the weighted inner products."""
        return self.mu * self.KT(phi)

    def regularizer(self, u: np.ndarray, p: float) -> float:
        norms = np.linalg.norm(self.K(u), axis=-1) * self.omega
        return float(np.sum(norms if p == 1 else norms**p) * self.mu**2)

    def norm_estimate(self, iterations: int = POWER_ITERATIONS) -> float:
        """Power iteration for ``||K||`` between the weighted spaces."""
        v = np.random.default_rng(0).standard_normal(self.grid.n)
        lam = 0.0
        for _ in range(iterations):
            v /= np.linalg.norm(v)
            Mv = self.Kadj(self.K(v))
            lam = float(v @ Mv)
            v = Mv
            if not np.any(v):
                return 0.0
        return float(np.sqrt(max(lam, 0.0)))


@dataclass
class SolveResult:
    minimizer: ScalarField
    objective: float
    certificate: dict
    history: list = field(default_factory=list)
    tikhonov: float = 0.0
    uniqueness_probe: float | None = None

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "certificate": self.certificate,
            "tikhonov": self.tikhonov,
            "uniqueness_probe": self.uniqueness_probe,
        }


def _start(prob: VariationalProblem, start) -> np.ndarray:
    if start is None:
        return prob.fidelity.g.copy()
    return np.array(start.flat if isinstance(start, ScalarField) else start, dtype=float).ravel()


def _project(phi: np.ndarray, radius: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(phi, axis=-1)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return phi * scale[:, None]


def primal_dual_gap(prob: VariationalProblem, u: np.ndarray, phi: np.ndarray) -> tuple[float, float, float]:
    """Primal value, dual value at a feasible ``phi`` and their difference."""
    ops, mu = prob._ops, prob.grid.cell_measure
    primal = prob.objective(u)
    dual = -prob.fidelity.conjugate(-ops.Kadj(phi), mu)
    return primal, dual, primal - dual


def _quadratic_parts(fid: FidelityTerm):
    """``(Q, b)`` with ``grad F(u) = Q u - b`` (``mu``-weighted), or ``None`` if ``F`` is not quadratic."""
    if fid.kind == "deblur":
        B = fid._B
        return fid.lam * B.T @ B + fid.tikhonov * np.eye(B.shape[1]), fid.lam * B.T @ fid.g
    if fid.q == 2:
        return fid.lam * np.eye(fid.g.size), fid.lam * fid.g
    return None


def _polish(prob: VariationalProblem, u: np.ndarray, dense: tuple) -> tuple[float, np.ndarray, np.ndarray] | None:
    """
    Active-set refinement for p = 1 in 1D with a quadratic fidelity.

    Pairs with ``|K u|`` below a threshold are held at zero, the rest keep their
    sign; the resulting equality-constrained quadratic is solved exactly and a
    dual field for the held pairs is fitted by bounded least squares.  Returns the best
    ``(gap, u, phi)`` over a ladder of thresholds; the gap is recomputed from
    scratch so a wrong guess only costs time.
    """
    Kd, Ad, (Q, b) = dense
    ops = prob._ops
    omega = ops.omega
    Ku = Kd @ u
    # round-off in K u is relative to |K| |u|, not to the largest difference
    scale = max(np.max(np.abs(Ku)), np.max(np.abs(Kd)) * np.max(np.abs(u)))
    best = None
    for rel in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8):
        held = np.abs(Ku) <= rel * scale
        phi_free = np.where(held, 0.0, omega * np.sign(Ku))
        c = Ad @ phi_free
        N = linalg.null_space(Kd[held]) if held.any() else np.eye(u.size)
        if N.shape[1] == 0:
            continue
        v = N @ np.linalg.solve(N.T @ Q @ N, N.T @ (b - c))
        r = -(Q @ v - b + c)
        if held.any():
            w_held = np.maximum(omega[held], 1e-300)
            phi_held = optimize.lsq_linear(Ad[:, held], r, bounds=(-w_held, w_held), method="bvls", tol=1e-14).x
        else:
            phi_held = np.zeros(0)
        phi = phi_free.copy()
        phi[held] = phi_held
        phi = _project(phi[:, None], omega)
        gap = primal_dual_gap(prob, v, phi)[2]
        if best is None or gap < best[0]:
            best = (gap, v, phi)
    return best


def _polish_operators(prob: VariationalProblem):
    ops, n = prob._ops, prob.grid.n
    if prob.grid.ndim != 1 or n > POLISH_MAX_POINTS:
        return None
    parts = _quadratic_parts(prob.fidelity)
    if parts is None:
        return None
    eye = np.eye(n)
    Kd = np.stack([ops.K(eye[j])[:, 0] for j in range(n)], axis=1)
    Ad = ops.mu * Kd.T
    return Kd, Ad, parts


def _solve_pd(prob: VariationalProblem, u: np.ndarray, tol: float, check_every: int = 10) -> SolveResult:
    ops, fid = prob._ops, prob.fidelity
    L = ops.norm_estimate() * 1.01
    tau = sigma = np.sqrt(prob.safety) / L if L > 0 else 1.0
    gamma = fid.strong_convexity
    phi = np.zeros((ops.rows.size, prob.grid.ndim))
    u_bar = u.copy()
    history = []
    best = (np.inf, u.copy(), phi.copy())
    dense = _polish_operators(prob)
    for it in range(1, prob.max_iters + 1):
        phi = _project(phi + sigma * ops.K(u_bar), ops.omega)
        u_new = fid.prox(u - tau * ops.Kadj(phi), tau)
        if gamma > 0:
            theta = 1.0 / np.sqrt(1.0 + 2.0 * gamma * tau)
            tau, sigma = theta * tau, sigma / theta
        else:
            theta = 1.0
        u_bar = u_new + theta * (u_new - u)
        u = u_new
        if it % check_every == 0 or it == prob.max_iters:
            primal, dual, gap = primal_dual_gap(prob, u, phi)
            history.append((it, primal, gap))
            if gap < best[0]:
                best = (gap, u.copy(), phi.copy())
            if gap >= tol and dense is not None and it % POLISH_EVERY == 0:
                refined = _polish(prob, u, dense)
                if refined is not None and refined[0] < best[0]:
                    best = refined
                if best[0] < tol:
                    gap, u_pol, phi_pol = best
                    primal, dual, _ = primal_dual_gap(prob, u_pol, phi_pol)
                    return SolveResult(
                        ScalarField(prob.grid, u_pol), primal,
                        {"kind": "primal_dual_gap", "value": float(gap), "dual": float(dual), "iterations": it,
                         "tol": tol, "polished": True},
                        history, fid.tikhonov,
                    )
            if gap < tol:
                return SolveResult(
                    ScalarField(prob.grid, u), primal,
                    {"kind": "primal_dual_gap", "value": float(gap), "dual": float(dual), "iterations": it, "tol": tol},
                    history, fid.tikhonov,
                )
    gap, u_best, _ = best
    result = SolveResult(
        ScalarField(prob.grid, u_best), prob.objective(u_best),
        {"kind": "primal_dual_gap", "value": float(gap), "iterations": prob.max_iters, "tol": tol},
        history, fid.tikhonov,
    )
    raise NumericalError(f"primal-dual gap {gap:.3e} above tolerance {tol:.3e}", best=result, certificate=gap)


def _quadratic_system(prob: VariationalProblem):
    ops, fid = prob._ops, prob.fidelity
    w2 = ops.omega**2

    def apply(u):
        Ku = ops.K(u)
        reg = 2.0 * ops.Kadj(w2[:, None] * Ku)
        if fid.kind == "lq":
            return fid.lam * u + reg
        return fid.lam * (fid._B.T @ (fid._B @ u)) + fid.tikhonov * u + reg

    rhs = fid.lam * (fid.g if fid.kind == "lq" else fid._B.T @ fid.g)
    return apply, rhs


def conjugate_gradient(apply, rhs: np.ndarray, x: np.ndarray, tol: float, max_iters: int):
    """Plain CG; returns ``(x, residual_norm, iterations, energies)`` with energy ``x.A x / 2 - x.b``."""
    r = rhs - apply(x)
    d = r.copy()
    rr = float(r @ r)
    energies = [float(0.5 * x @ (rhs - r) - x @ rhs)]
    it = 0
    while np.sqrt(rr) >= tol and it < max_iters:
        Ad = apply(d)
        dAd = float(d @ Ad)
        if dAd <= 0:
            break
        alpha = rr / dAd
        x = x + alpha * d
        r = r - alpha * Ad
        rr_new = float(r @ r)
        d = r + (rr_new / rr) * d
        rr = rr_new
        it += 1
        energies.append(float(0.5 * x @ (rhs - r) - x @ rhs))
    return x, float(np.sqrt(rr)), it, energies


def _solve_cg(prob: VariationalProblem, u: np.ndarray, tol: float) -> SolveResult:
    apply, rhs = _quadratic_system(prob)
    u, res, its, energies = conjugate_gradient(apply, rhs, u, tol, prob.max_iters)
    cert = {"kind": "cg_residual", "value": res, "iterations": its, "tol": tol}
    result = SolveResult(ScalarField(prob.grid, u), prob.objective(u), cert, energies, prob.fidelity.tikhonov)
    if res >= tol:
        raise NumericalError(f"CG residual {res:.3e} above tolerance {tol:.3e}", best=result, certificate=res)
    return result


def _smooth_gradient(prob: VariationalProblem, u: np.ndarray) -> np.ndarray:
    """Gradient of ``I_w^p`` w.r.t. the ``mu`` inner product."""
    ops, p = prob._ops, prob.p
    Ku = ops.K(u)
    norms = np.linalg.norm(Ku, axis=-1)
    coef = ops.omega**p * np.where(norms > 0, norms, 1.0) ** (p - 2)
    coef = np.where(norms > 0, coef, 0.0)
    return p * ops.Kadj(coef[:, None] * Ku) + prob.fidelity.gradient(u)


def _solve_agd(prob: VariationalProblem, u: np.ndarray, tol: float) -> SolveResult:
    """
    FISTA with backtracking and adaptive restart.  Stops when the gradient norm is
    below ``tol``, or, once the objective has stalled for ``STALL_WINDOW``
    iterations, below ``tol`` plus the round-off floor of the gradient.
    """
    mu = prob.grid.cell_measure
    L = 1.0
    x, y, t = u.copy(), u.copy(), 1.0
    fx = prob.objective(x)
    floor = prob.roundoff_floor(u)
    mark, f_mark = 0, fx
    history = []
    for it in range(1, prob.max_iters + 1):
        gy = _smooth_gradient(prob, y)
        fy = prob.objective(y)
        gnorm2 = float(gy @ gy) * mu
        while True:
            x_new = y - gy / L
            f_new = prob.objective(x_new)
            if f_new <= fy - 0.5 * gnorm2 / L + 1e-15 * abs(fy) or L > 1e20:
                break
            L *= 2.0
        if f_new > fx + 1e-14 * abs(fx) and t > 1.0:
            # adaptive restart
            t, y = 1.0, x.copy()
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, fx, t = x_new, f_new, t_new
        L = max(L / 1.5, 1e-12)
        g = _smooth_gradient(prob, x)
        gnorm = float(np.sqrt(g @ g * mu))
        history.append((it, fx, gnorm))
        stalled = False
        if it - mark >= STALL_WINDOW:
            stalled = fx >= f_mark - 1e-15 * abs(f_mark)
            mark, f_mark = it, fx
        if gnorm < tol or (stalled and gnorm < tol + floor):
            cert = {"kind": "gradient_norm", "value": gnorm, "iterations": it, "tol": tol}
            if gnorm >= tol:
                cert["roundoff_floor"] = floor
            return SolveResult(ScalarField(prob.grid, x), fx, cert, history, prob.fidelity.tikhonov)
    g = _smooth_gradient(prob, x)
    gnorm = float(np.sqrt(g @ g * mu))
    result = SolveResult(
        ScalarField(prob.grid, x), fx,
        {"kind": "gradient_norm", "value": gnorm, "iterations": prob.max_iters, "tol": tol}, history, prob.fidelity.tikhonov,
    )
    raise NumericalError(f"gradient norm {gnorm:.3e} above tolerance {tol:.3e}", best=result, certificate=gnorm)


def solve(prob: VariationalProblem, start: ScalarField | np.ndarray | None = None) -> SolveResult:
    """Minimize the problem's functional; raises :class:`NumericalError` (carrying the best iterate) on failure."""
    u0 = _start(prob, start)
    tol = prob.tol if prob.tol is not None else prob.default_tol(u0)
    if prob.p == 1:
        return _solve_pd(prob, u0, tol)
    if prob.p == 2 and prob.fidelity.q == 2:
        return _solve_cg(prob, u0, tol)
    return _solve_agd(prob, u0, tol)


def objective(prob: VariationalProblem, u: ScalarField | np.ndarray) -> float:
    return prob.objective(u)


def uniqueness_probe(
    prob: VariationalProblem, starts: int = 5, rng: np.random.Generator | None = None, workers: int = 1
) -> tuple[float, list[SolveResult]]:
    """Solve from ``starts`` random initializations; return the largest pairwise ``L^2_mu`` distance."""
    if not prob.fidelity.strictly_convex:
        raise ConfigurationError("uniqueness probe needs a strictly convex fidelity")
    rng = rng if rng is not None else np.random.default_rng(0)
    g = prob.fidelity.g
    spread = float(np.std(g)) + 1.0
    inits = [g + spread * rng.standard_normal(g.size) for _ in range(starts)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda s: solve(prob, s), inits))
    else:
        results = [solve(prob, s) for s in inits]
    mu = prob.grid.cell_measure
    dist = 0.0
    for a, b in combinations(results, 2):
        dist = max(dist, float(np.sqrt(np.sum((a.minimizer.flat - b.minimizer.flat) ** 2) * mu)))
    for r in results:
        r.uniqueness_probe = dist
    return dist, results


def certificate_radius(prob: VariationalProblem, certificate: dict) -> float | None:
    """
    Bound on ``|u - u*|_mu`` implied by a certificate when the functional is
    ``gamma``-strongly convex (``gamma`` from the fidelity); ``None`` otherwise.
    """
    gamma = prob.fidelity.strong_convexity
    if gamma <= 0:
        return None
    val = float(certificate["value"])
    if certificate["kind"] == "primal_dual_gap":
        return float(np.sqrt(2.0 * max(val, 0.0) / gamma))
    if certificate["kind"] == "cg_residual":
        # Euclidean residual of the system whose smallest eigenvalue is >= gamma
        return val / gamma * np.sqrt(prob.grid.cell_measure)
    return val / gamma


def sawtooth_sequence(u: ScalarField, count: int) -> list[ScalarField]:
    """``u + s / n`` for ``n = 1..count`` with ``s`` the +-1 checkerboard."""
    idx = np.indices(u.grid.dims).sum(axis=0)
    s = np.where(idx % 2 == 0, 1.0, -1.0)
    return [u.with_values(u.values + s / n) for n in range(1, count + 1)]


def lsc_probe(prob: VariationalProblem, limit: ScalarField, sequence: list[ScalarField], tol: float = 1e-12) -> dict:
    """
    Lower semicontinuity along a sequence converging to ``limit``.

    Reports the regularizer along the sequence, its tail infimum (second half)
    as the ``liminf`` estimate, and whether ``liminf >= value(limit) - tol``.
    """
    mu = prob.grid.cell_measure
    vals = [prob.regularizer(v.flat) for v in sequence]
    dists = [float(np.sqrt(np.sum((v.flat - limit.flat) ** 2) * mu)) for v in sequence]
    at_limit = prob.regularizer(limit.flat)
    tail = vals[len(vals) // 2 :]
    liminf = float(min(tail)) if tail else float("nan")
    return {
        "values": vals,
        "distances": dists,
        "limit_value": at_limit,
        "liminf": liminf,
        "holds": bool(liminf >= at_limit - tol),
        "strict": bool(all(v > at_limit for v in vals)),
        "distances_decrease": bool(all(b < a for a, b in zip(dists, dists[1:]))),
    }
