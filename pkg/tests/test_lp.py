"""Revised simplex engine against a dense-tableau reference solver."""

import math

import numpy as np
import pytest

from mmot.errors import InsufficientSupport
from mmot.lp import StandardLP, solve_lp, solve_transport

from oracles import coupling_lp, min_over_vertices, tableau_simplex


def _random_feasible_lp(rng, k, ncols):
    """Equality-form instance with a known feasible point."""
    A = rng.normal(size=(k, ncols))
    x0 = rng.uniform(0.0, 1.0, size=ncols)
    b = A @ x0
    c = rng.uniform(0.0, 2.0, size=ncols)
    return StandardLP(c=c, A=A, b=b)


def test_standard_lp_validation():
    with pytest.raises(ValueError):
        StandardLP(c=np.ones(3), A=np.ones((2, 2)), b=np.ones(2))
    with pytest.raises(ValueError):
        StandardLP(c=np.ones(2), A=np.ones(4), b=np.ones(2))


def test_tiny_known_optimum():
    # min x0 + 2 x1 s.t. x0 + x1 = 1  ->  x = (1, 0)
    lp = StandardLP(c=np.array([1.0, 2.0]), A=np.array([[1.0, 1.0]]), b=np.array([1.0]))
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.0, abs=1e-12)
    assert sol.primal == {0: pytest.approx(1.0)}


def test_negative_rhs_rows_are_handled():
    # same LP written with a sign-flipped row
    lp = StandardLP(
        c=np.array([1.0, 2.0]), A=np.array([[-1.0, -1.0]]), b=np.array([-1.0])
    )
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.0, abs=1e-12)


def test_infeasible_yields_farkas_certificate():
    lp = StandardLP(
        c=np.zeros(2),
        A=np.array([[1.0, 1.0], [1.0, 1.0]]),
        b=np.array([1.0, 2.0]),
    )
    sol = solve_lp(lp)
    assert sol.status == "infeasible"
    y = np.asarray(sol.certificate, dtype=float)
    assert y @ lp.b > 1e-10
    assert (lp.A.T @ y <= 1e-8).all()


def test_unbounded_yields_ray():
    lp = StandardLP(
        c=np.array([-1.0, 0.0]), A=np.array([[1.0, -1.0]]), b=np.array([0.0])
    )
    sol = solve_lp(lp)
    assert sol.status == "unbounded"
    ray = sol.certificate
    x = np.zeros(2)
    for j, v in ray.items():
        x[j] = v
    assert (x >= -1e-12).all()
    assert np.allclose(lp.A @ x, 0.0, atol=1e-9)
    assert float(lp.c @ x) < 0


def test_matches_tableau_oracle_on_random_instances():
    rng = np.random.default_rng(101)
    for trial in range(30):
        k = int(rng.integers(2, 6))
        ncols = int(rng.integers(k + 1, 14))
        lp = _random_feasible_lp(rng, k, ncols)
        sol = solve_lp(lp)
        status, _, obj = tableau_simplex(lp.A, lp.b, lp.c)
        assert sol.status == status == "optimal", f"trial {trial}"
        assert sol.objective_value == pytest.approx(obj, abs=1e-8)
        # reported primal is feasible and attains the objective
        x = np.zeros(lp.c.size)
        for j, v in sol.primal.items():
            x[j] = v
        assert np.allclose(lp.A @ x, lp.b, atol=1e-8)
        assert float(lp.c @ x) == pytest.approx(sol.objective_value, abs=1e-9)


def test_duals_are_complementary_on_random_instances():
    rng = np.random.default_rng(55)
    for _ in range(10):
        lp = _random_feasible_lp(rng, 4, 10)
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        red = lp.c - lp.A.T @ sol.dual
        assert red.min() >= -1e-8
        for j, v in sol.primal.items():
            if v > 1e-9:
                assert abs(red[j]) <= 1e-8


def test_solve_transport_two_point_pair_matrix():
    # two equal weights, reciprocal-distance pair cost with distance 2
    recip = np.array([[math.inf, 0.5], [0.5, math.inf]])
    atoms, u_mat, value = solve_transport(np.array([0.5, 0.5]), recip, 2)
    assert value == pytest.approx(0.5, abs=1e-12)
    assert atoms == {
        (0, 1): pytest.approx(0.5, abs=1e-12),
        (1, 0): pytest.approx(0.5, abs=1e-12),
    }
    assert u_mat.shape == (2, 2)


def test_solve_transport_matches_vertex_enumeration():
    # vertex enumeration is exponential, so only genuinely tiny shapes
    rng = np.random.default_rng(17)
    for n, m in [(2, 2), (2, 3), (2, 4), (3, 2)]:
        for _ in range(4):
            w = rng.uniform(0.2, 1.0, size=m)
            w /= w.sum()
            recip = rng.uniform(0.1, 2.0, size=(m, m))
            recip = 0.5 * (recip + recip.T)

            def tup_cost(t):
                return math.fsum(
                    recip[t[i], t[j]]
                    for i in range(n)
                    for j in range(i + 1, n)
                )

            A, b, c, _ = coupling_lp(w, tup_cost, n)
            want = min_over_vertices(A, b, c)
            _, _, value = solve_transport(w, recip, n)
            assert value == pytest.approx(want, abs=1e-9)


def test_solve_transport_matches_tableau_on_larger_shapes():
    rng = np.random.default_rng(171)
    for n, m in [(3, 3), (3, 4), (2, 6)]:
        w = rng.uniform(0.2, 1.0, size=m)
        w /= w.sum()
        recip = rng.uniform(0.1, 2.0, size=(m, m))
        recip = 0.5 * (recip + recip.T)

        def tup_cost(t):
            return math.fsum(
                recip[t[i], t[j]] for i in range(n) for j in range(i + 1, n)
            )

        A, b, c, _ = coupling_lp(w, tup_cost, n)
        status, _, want = tableau_simplex(A, b, c)
        assert status == "optimal"
        _, _, value = solve_transport(w, recip, n)
        assert value == pytest.approx(want, abs=1e-9)


def test_solve_transport_marginals_reproduced():
    rng = np.random.default_rng(29)
    m, n = 6, 3
    w = rng.uniform(0.5, 1.5, size=m)
    w /= w.sum()
    recip = rng.uniform(0.1, 1.0, size=(m, m))
    recip = 0.5 * (recip + recip.T)
    atoms, u_mat, value = solve_transport(w, recip, n)
    for slot in range(n):
        marg = np.zeros(m)
        for t, x in atoms.items():
            marg[t[slot]] += x
        assert np.allclose(marg, w, atol=1e-9)
    # dual feasibility with complementary slackness on the support
    for t, x in atoms.items():
        cost_t = math.fsum(
            recip[t[i], t[j]] for i in range(n) for j in range(i + 1, n)
        )
        spread = math.fsum(u_mat[i, t[i]] for i in range(n))
        assert cost_t - spread >= -1e-8
        if x > 1e-9:
            assert abs(cost_t - spread) <= 1e-7


def test_solve_transport_rejects_heavy_weight_in_injective_mode():
    recip = np.full((3, 3), math.inf)
    ix = np.array([[0, 1], [0, 2], [1, 2]])
    recip[ix[:, 0], ix[:, 1]] = recip[ix[:, 1], ix[:, 0]] = 1.0
    with pytest.raises(InsufficientSupport):
        solve_transport(np.array([0.6, 0.2, 0.2]), recip, 2)


def test_solve_transport_injective_needs_enough_points():
    recip = np.array([[math.inf, 1.0], [1.0, math.inf]])
    with pytest.raises(InsufficientSupport):
        solve_transport(np.array([1.0 / 3] * 3)[:2] * 1.5, recip, 3)


def test_solve_transport_input_validation():
    recip = np.ones((2, 2))
    with pytest.raises(ValueError):
        solve_transport(np.array([0.5, 0.5]), recip, 1)
    with pytest.raises(ValueError):
        solve_transport(np.array([0.9, 0.2]), recip, 2)
    with pytest.raises(ValueError):
        solve_transport(np.array([1.0, -0.1]) / 0.9, recip, 2)
    with pytest.raises(ValueError):
        solve_transport(np.array([0.5, 0.5]), np.ones((3, 3)), 2)


def test_column_generation_reaches_full_pool_optimum():
    # force the generated route by capping the pool, compare to the
    # uncapped solve
    rng = np.random.default_rng(83)
    m, n = 7, 3
    w = rng.uniform(0.5, 1.5, size=m)
    w /= w.sum()
    recip = rng.uniform(0.2, 1.0, size=(m, m))
    recip = 0.5 * (recip + recip.T)
    _, _, full = solve_transport(w, recip, n)
    _, _, capped = solve_transport(w, recip, n, pool_cap=m)
    assert capped == pytest.approx(full, abs=1e-9)
