import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lp_vertex_min, weighted_median
from mobilesensor.l1approx import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    LPIterationLimit,
    RankDeficientError,
    best_l1,
    lp_solve,
)
from mobilesensor.trajectory import ParametricPath, default_grid, make_quadrature, sample_composite


def test_single_equality():
    res = lp_solve(LinearProgram(c=[1.0], A=[[1.0]], b=[3.0]))
    assert res.status == OPTIMAL and res.value == pytest.approx(3.0)


def test_scalar_l1():
    res = lp_solve(LinearProgram(c=[1.0, 1.0], A=[[1.0, -1.0]], b=[2.0]))
    assert res.value == pytest.approx(2.0)
    np.testing.assert_allclose(res.x, [2.0, 0.0])


def test_infeasible_and_unbounded():
    assert lp_solve(LinearProgram(c=[1.0], A=[[1.0]], b=[-1.0])).status == INFEASIBLE
    assert lp_solve(LinearProgram(c=[-1.0, 0.0], A=[[1.0, -1.0]], b=[1.0])).status == UNBOUNDED


def test_free_variable():
    # min |y - 1| style: y free, y - u + v = 1
    res = lp_solve(LinearProgram(c=[0.0, 1.0, 1.0], A=[[1.0, -1.0, 1.0]], b=[1.0], free=[True, False, False]))
    assert res.value == pytest.approx(0.0, abs=1e-12)


def test_redundant_rows():
    A = [[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]]
    res = lp_solve(LinearProgram(c=[1.0, 2.0, 3.0], A=A, b=[1.0, 2.0, 1.0]))
    assert res.status == OPTIMAL
    assert res.value == pytest.approx(lp_vertex_min(np.array([1.0, 2, 3]), np.array(A)[[0, 2]], np.array([1.0, 1])))


def test_iteration_cap():
    rng = np.random.default_rng(0)
    A = rng.uniform(0.1, 1, (5, 12))
    x0 = rng.uniform(0.1, 1, 12)
    with pytest.raises(LPIterationLimit):
        lp_solve(LinearProgram(c=rng.normal(size=12) + 3, A=A, b=A @ x0), max_iter=1)


def _random_lp(rng, m=3, n=6):
    A = rng.normal(size=(m, n))
    b = A @ rng.uniform(0, 1, n)  # feasible
    c = A.T @ rng.normal(size=m) + rng.uniform(0, 1, n)  # bounded below
    return c, A, b


def test_ten_random_lps_match_vertex_enumeration():
    rng = np.random.default_rng(2024)
    for _ in range(10):
        c, A, b = _random_lp(rng)
        res = lp_solve(LinearProgram(c=c, A=A, b=b))
        assert abs(res.value - lp_vertex_min(c, A, b)) <= 1e-9 * max(1.0, abs(res.value))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(0, 4))
def test_random_lps_property(seed, m, extra):
    rng = np.random.default_rng(seed)
    c, A, b = _random_lp(rng, m, m + 1 + extra)
    res = lp_solve(LinearProgram(c=c, A=A, b=b))
    assert res.status == OPTIMAL
    assert np.all(res.x >= 0)
    np.testing.assert_allclose(A @ res.x, b, atol=1e-8 * (1 + np.abs(b).max()))
    assert abs(res.value - lp_vertex_min(c, A, b)) <= 1e-9 * max(1.0, abs(res.value))


# ---------------------------------------------------------------------------
# best L1

def _basis(exprs, T=1.0, grid=None):
    p = ParametricPath(["t"], T)
    g = grid or default_grid(T)
    return p, g, np.array([sample_composite(e, p, g) for e in exprs])


def test_median_example():
    p, g, G = _basis(["1"])
    sol = best_l1(sample_composite("x1", p, g), G, g)
    assert sol.coefficients[0] == pytest.approx(0.5, abs=1e-12)
    assert sol.residual_l1 == pytest.approx(0.25, abs=1e-12)


def test_quartic_example():
    p, g, G = _basis(["1", "x1", "x1^2", "x1^3"])
    sol = best_l1(sample_composite("x1^4", p, g), G, g)
    assert abs(sol.residual_l1 - 1 / 256) / (1 / 256) < 1e-3
    assert np.all(sol.certificate_excess(G, g.weights) <= 0)


def test_target_in_span():
    p, g, G = _basis(["x1", "cos(x1)"])
    sol = best_l1(2 * G[0] + 3 * G[1], G, g)
    assert sol.residual_l1 <= 1e-9
    np.testing.assert_allclose(sol.coefficients, [2.0, 3.0], atol=1e-9)


def test_zero_target():
    p, g, G = _basis(["1", "x1"])
    sol = best_l1(np.zeros(len(g.nodes)), G, g)
    assert sol.residual_l1 == 0 and len(sol.node_signs) == 0
    np.testing.assert_array_equal(sol.coefficients, [0.0, 0.0])


def test_rank_deficient():
    p, g, G = _basis(["x1", "2*x1"])
    with pytest.raises(RankDeficientError):
        best_l1(sample_composite("x1^2", p, g), G, g)


@pytest.mark.parametrize("target", ["x1^2", "x1^3", "x1^4", "x1^5"])
def test_grid_refinement_stable(target):
    m = int(target[-1])
    lower = ["1"] + [f"x1^{k}" for k in range(1, m)]
    p, g, G = _basis(lower)
    coarse = best_l1(sample_composite(target, p, g), G, g).residual_l1
    fine_g = g.refined(2)
    _, _, Gf = _basis(lower, grid=fine_g)
    fine = best_l1(sample_composite(target, p, fine_g), Gf, fine_g).residual_l1
    assert abs(coarse - fine) < 1e-3 * fine


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_constant_basis_gives_weighted_median(seed):
    rng = np.random.default_rng(seed)
    g = make_quadrature(1.0, 6, 3)
    F = rng.normal(size=len(g.nodes))
    sol = best_l1(F, np.ones((1, len(F))), g)
    med = weighted_median(F, g.weights)
    gaps = np.diff(np.sort(F))
    # L1 minimizers of a weighted sum of |F_i - a| form the interval around the weighted median
    obj = lambda a: np.sum(g.weights * np.abs(F - a))  # noqa: E731
    assert obj(sol.coefficients[0]) <= obj(med) + 1e-12
    assert abs(sol.coefficients[0] - med) <= gaps.max() + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_certificate_on_random_designs(seed, n):
    rng = np.random.default_rng(seed)
    g = make_quadrature(1.0, 8, 4)
    t = g.nodes
    G = np.array([np.cos((k + 1) * t * rng.uniform(0.5, 3)) for k in range(n)])
    F = np.exp(rng.uniform(-1, 1) * t) + rng.normal() * t**3
    sol = best_l1(F, G, g)
    assert np.all(sol.certificate_excess(G, g.weights) <= 0)
    # no coefficient perturbation improves the objective
    obj = lambda a: np.sum(g.weights * np.abs(F - a @ G))  # noqa: E731
    for _ in range(5):
        d = rng.normal(size=n)
        assert obj(sol.coefficients + 1e-4 * d / np.linalg.norm(d)) >= sol.residual_l1 - 1e-12
