import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlgrad.errors import DomainError
from nlgrad.grid import DomainGrid, PairField, PairMask, ScalarField, inner, pair_inner
from nlgrad.nlops import (
    adjoint_audit,
    continuous_divergence,
    interaction_split,
    nltv,
    nltv_dual_check,
    nonlocal_divergence,
    nonlocal_gradient,
    seminorm,
    seminorm_power,
    total_variation,
)
from nlgrad.weight import BoundarySingular, Constant, GaussianKernel, Tabulated
from oracles import dense_divergence, seminorm_power_double_sum


def test_affine_and_zero_weight_give_zero_gradient():
    grid = DomainGrid.unit_interval(9)
    u = grid.sample(lambda x: 3 * x[:, 0] - 1)
    assert np.all(np.abs(nonlocal_gradient(u, GaussianKernel(1.0, 0.2)).values) < 1e-12)
    v = ScalarField(grid, np.random.default_rng(0).standard_normal(9))
    assert np.all(nonlocal_gradient(v, Constant(0.0)).values == 0)


def test_enumerated_pair_values():
    grid = DomainGrid.on_box([0], [3], [3])
    g = nonlocal_gradient(ScalarField(grid, np.array([0.0, 1.0, 4.0])), Constant(1.0))
    d = g.dense()[..., 0]
    assert d[0, 1] == 2.0 and d[1, 0] == -2.0
    assert d[1, 2] == 0.0


def test_divergence_of_zero():
    grid = DomainGrid.unit_interval(6)
    phi = PairField(grid, PairMask.full(), np.zeros((36, 1)))
    assert np.all(nonlocal_divergence(phi, GaussianKernel(1.0, 0.3)).values == 0)


def test_adjoint_gaussian_six_points():
    rng = np.random.default_rng(5)
    grid = DomainGrid.unit_interval(6)
    w = GaussianKernel(1.0, 0.25)
    u = ScalarField(grid, rng.standard_normal(6))
    phi = PairField(grid, PairMask.full(), rng.standard_normal((36, 1)))
    lhs = pair_inner(nonlocal_gradient(u, w), phi)
    rhs = inner(u, nonlocal_divergence(phi, w))
    assert abs(lhs + rhs) <= 1e-12 * max(1.0, abs(lhs))


@pytest.mark.parametrize("weight", [Constant(1.0), GaussianKernel(1.5, 0.2)])
@pytest.mark.parametrize("symmetric", [False, True])
def test_divergence_matches_dense_oracle(weight, symmetric):
    n = 7
    grid = DomainGrid.unit_interval(n)
    rng = np.random.default_rng(8)
    a = rng.standard_normal((n, n))
    phi_dense = a + a.T if symmetric else a
    phi = PairField(grid, PairMask.full(), phi_dense.reshape(-1, 1))
    ours = nonlocal_divergence(phi, weight).flat
    expected = dense_divergence(n, 1.0 / n, weight.matrix(grid), phi_dense.ravel())
    np.testing.assert_allclose(ours, expected, rtol=1e-12, atol=1e-12)
    if symmetric:
        # the pair gradient is antisymmetric in (x, y), so symmetric fields are annihilated
        assert np.max(np.abs(ours)) < 1e-10
    else:
        assert np.max(np.abs(ours)) > 1e-3


@settings(max_examples=30, deadline=None)
@given(dims=st.sampled_from([(4,), (11,), (3, 3), (2, 5)]), seed=st.integers(0, 2**31 - 1), radius=st.sampled_from([None, 0.4]))
def test_adjoint_property(dims, seed, radius):
    rng = np.random.default_rng(seed)
    grid = DomainGrid.on_box([0] * len(dims), [1] * len(dims), dims)
    a = rng.uniform(0, 2, (grid.n, grid.n))
    w = Tabulated(np.triu(a) + np.triu(a, 1).T)
    mask = PairMask.full() if radius is None else PairMask.truncated(radius)
    u = ScalarField(grid, rng.standard_normal(grid.n))
    gu = nonlocal_gradient(u, w, mask)
    phi = gu.with_values(rng.standard_normal(gu.values.shape))
    lhs, rhs = pair_inner(gu, phi), inner(u, nonlocal_divergence(phi, w))
    assert abs(lhs + rhs) <= 1e-12 * max(1.0, abs(lhs), abs(rhs))


def test_adjoint_audit_function():
    grids = [DomainGrid.unit_interval(64), DomainGrid.on_box([0, 0], [1, 1], [8, 8])]
    rep = adjoint_audit(grids, 20, np.random.default_rng(0))
    assert rep["max_relative_residual"] <= 1e-12


def test_seminorm_affine_is_zero_and_homogeneous():
    grid = DomainGrid.unit_interval(20)
    w = GaussianKernel(1.0, 0.3)
    assert seminorm(grid.sample(lambda x: 4 * x[:, 0] + 2), w) < 1e-12
    u = ScalarField(grid, np.random.default_rng(1).standard_normal(20))
    assert seminorm(u * 3.0, w, 2) == pytest.approx(3.0 * seminorm(u, w, 2), rel=1e-14)


def test_seminorm_quadratic_analytic():
    grid = DomainGrid.unit_interval(200)
    u = grid.sample(lambda x: x[:, 0] ** 2 / 2)
    assert seminorm(u, Constant(1.0), 2) ** 2 == pytest.approx(1.0 / 6.0, rel=0.02)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
def test_seminorm_matches_double_sum(p):
    n = 9
    grid = DomainGrid.unit_interval(n)
    w = GaussianKernel(1.0, 0.2)
    u = np.random.default_rng(int(p * 10)).standard_normal(n)
    ours = seminorm_power(ScalarField(grid, u), w, p)
    assert ours == pytest.approx(seminorm_power_double_sum(u, 1.0 / n, w.matrix(grid), p), rel=1e-12)


def test_seminorm_infinity_is_max():
    grid = DomainGrid.unit_interval(6)
    u = ScalarField(grid, np.array([0.0, 1.0, 0.0, 2.0, 1.0, 1.0]))
    assert seminorm(u, Constant(1.0), np.inf) == pytest.approx(np.max(np.abs(nonlocal_gradient(u, Constant(1.0)).values)))


def test_nltv_bounded_by_twice_measure_tv():
    rng = np.random.default_rng(2)
    grid = DomainGrid.on_box([0], [2], [30])
    for _ in range(50):
        u = ScalarField(grid, rng.standard_normal(30))
        assert nltv(u, Constant(1.0)) <= 2 * grid.measure * total_variation(u) * (1 + 1e-12)


def test_dual_check_constant_field():
    grid = DomainGrid.unit_interval(5)
    rep = nltv_dual_check(ScalarField(grid, np.full(5, 2.0)), Constant(1.0), trials=50)
    assert rep.formula == 0.0 and rep.attained and rep.best_feasible == pytest.approx(0.0, abs=1e-12)


def test_dual_check_five_points():
    grid = DomainGrid.unit_interval(5)
    u = ScalarField(grid, np.random.default_rng(4).standard_normal(5))
    rep = nltv_dual_check(u, Constant(1.0), trials=1000, rng=np.random.default_rng(4))
    assert rep.attained and rep.never_exceeded


def test_dual_check_gaussian_2d():
    grid = DomainGrid.on_box([0, 0], [1, 1], [6, 6])
    u = ScalarField(grid, np.random.default_rng(6).standard_normal(36))
    rep = nltv_dual_check(u, GaussianKernel(1.0, 0.3), trials=20)
    assert abs(rep.maximizer_value - rep.formula) <= 1e-10 * rep.formula
    assert rep.never_exceeded


def _middle_third_bump(grid):
    x = grid.points()[:, 0]
    vals = np.where((x > 1 / 3) & (x < 2 / 3), np.sin(3 * np.pi * (x - 1 / 3)) ** 2, 0.0)
    return ScalarField(grid, vals)


def test_interaction_split_zero():
    grid = DomainGrid.unit_interval(12)
    rep = interaction_split(ScalarField(grid, np.zeros(12)), np.zeros(12, bool), Constant(1.0), 1)
    assert rep["inside"] == 0 and rep["cross"] == 0


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_interaction_split_is_exact(p):
    grid = DomainGrid.unit_interval(90)
    u = _middle_third_bump(grid)
    rep = interaction_split(u, u.values != 0, Constant(1.0), p)
    full = seminorm_power(u, Constant(1.0), p)
    assert rep["inside"] + rep["cross"] == pytest.approx(full, rel=1e-10)


def test_interaction_split_boundary_singular_cross_grows():
    crosses = []
    for n in (60, 240, 960):
        grid = DomainGrid.unit_interval(n)
        u = _middle_third_bump(grid)
        rep = interaction_split(u, u.values != 0, BoundarySingular(1.0), 1)
        assert rep["cross"] > rep["inside"]
        crosses.append(rep["cross"])
    # alpha = 1: int d^-1 diverges logarithmically, so the cross term keeps growing
    assert crosses[0] < crosses[1] < crosses[2]


def test_interaction_split_rejects_wrong_support():
    grid = DomainGrid.unit_interval(10)
    u = ScalarField(grid, np.ones(10))
    with pytest.raises(DomainError):
        interaction_split(u, np.zeros(10, bool), Constant(1.0), 1)


def test_continuous_divergence_formula_agrees_in_the_interior():
    grid = DomainGrid.unit_interval(200)
    w = GaussianKernel(1.0, 0.2)

    def phi(x, y):
        return np.sin(2 * x) * np.cos(y) + y**2

    ours = nonlocal_divergence(PairField(grid, PairMask.full(), phi(*np.meshgrid(grid.points()[:, 0], grid.points()[:, 0], indexing="ij")).reshape(-1, 1)), w)
    cont = continuous_divergence(phi, w, grid)
    interior = slice(20, 180)
    scale = np.max(np.abs(cont.flat[interior]))
    assert np.max(np.abs(ours.flat[interior] - cont.flat[interior])) < 0.05 * scale
