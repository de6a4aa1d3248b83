"""Plans, potentials, duality audits, bounds, and the swap rearrangement."""

import itertools
import math

import numpy as np
import pytest

from mmot.cost import coulomb, pointwise_cost
from mmot.errors import (
    DimensionMismatch,
    EmptyRestriction,
    NegativeWeight,
    NoOffDiagonalSupport,
    NormalizationError,
    OverlappingNeighborhoods,
    ParseError,
)
from mmot.grid import GridSpec
from mmot.lp import solve_mmot
from mmot.measure import DiscreteMeasure, UniformBall, discretize
from mmot.transport import (
    PotentialVector,
    TransportPlan,
    bound_parameters,
    diagonal_clearance,
    lemma_upper_bound,
    load_plan,
    load_potentials,
    max_dual_excess,
    plan_cost,
    plan_measure,
    potential_bound,
    product_plan,
    product_plan_cost,
    save_plan,
    save_potentials,
    swap_improve,
    symmetrize_potentials,
    verify_duality,
)

G1 = GridSpec(level=1, window_halfwidth=1.0, dimension=1)


def _two_point_plan(diagonal: bool) -> TransportPlan:
    a, b = (-1,), (2,)
    if diagonal:
        atoms = {((a), (a)): 0.5, ((b), (b)): 0.5}
        atoms = {(a, a): 0.5, (b, b): 0.5}
    else:
        atoms = {(a, b): 0.5, (b, a): 0.5}
    return TransportPlan(G1, 2, atoms)


def test_plan_marginals_and_validate():
    plan = _two_point_plan(diagonal=False)
    plan.validate()
    assert plan.marginal(0) == {(-1,): 0.5, (2,): 0.5}
    assert plan.marginal(0) == plan.marginal(1)
    assert plan.total_mass() == 1.0
    assert plan_measure(plan).atoms == plan.marginal(0)

    bad_arity = TransportPlan(G1, 2, {((-1,),): 1.0})
    with pytest.raises(ValueError):
        bad_arity.validate()
    bad_mass = TransportPlan(G1, 2, {((-1,), (2,)): 0.7})
    with pytest.raises(ValueError):
        bad_mass.validate()
    skewed = TransportPlan(G1, 2, {((-1,), (2,)): 0.7, ((2,), (-1,)): 0.3})
    with pytest.raises(ValueError):
        skewed.validate()


def test_plan_cost_modes():
    plan = _two_point_plan(diagonal=False)
    # cell mode: sup distance between cells -1 and 2 is 4 half-cells = 2
    assert plan_cost(plan, coulomb(2)) == pytest.approx(0.5, abs=1e-15)
    # pointwise at cell centers -0.75, 0.75: distance 1.5
    assert plan_cost(plan, coulomb(2), cost_mode="pointwise") == pytest.approx(
        1.0 / 1.5, abs=1e-15
    )
    # stored positions override the centers
    pos = {(-1,): (-1.0,), (2,): (1.0,)}
    assert plan_cost(
        plan, coulomb(2), cost_mode="pointwise", positions=pos
    ) == pytest.approx(0.5, abs=1e-15)
    diag = _two_point_plan(diagonal=True)
    assert plan_cost(diag, coulomb(2), cost_mode="pointwise") == math.inf
    assert math.isfinite(plan_cost(diag, coulomb(2)))
    with pytest.raises(ValueError):
        plan_cost(plan, coulomb(2), cost_mode="exact")


def test_potential_vector_access():
    pots = PotentialVector(G1, ({(-1,): 0.25, (2,): 0.3}, {(-1,): -0.1, (2,): 0.0}))
    assert pots.n_marginals == 2
    assert pots.value(0, (-1,)) == 0.25
    with pytest.raises(DimensionMismatch):
        pots.value(1, (1,))
    w = {(-1,): 0.5, (2,): 0.5}
    assert pots.dual_objective(w) == pytest.approx(0.5 * (0.25 + 0.3 - 0.1 + 0.0))
    assert pots.sup_norm() == 0.3
    with pytest.raises(DimensionMismatch):
        pots.dual_objective({(0,): 1.0})


def test_symmetrize_preserves_dual_objective():
    pots = PotentialVector(
        G1, ({(-1,): 0.7, (2,): 0.1}, {(-1,): -0.2, (2,): 0.4})
    )
    w = {(-1,): 0.35, (2,): 0.65}
    sym = symmetrize_potentials(pots)
    assert sym.dual_objective(w) == pytest.approx(pots.dual_objective(w), abs=1e-15)
    assert sym.symmetrized[(-1,)] == pytest.approx(0.25)
    assert sym.values[0] == sym.values[1]


def test_max_dual_excess_matches_bruteforce():
    rng = np.random.default_rng(47)
    for n, m in [(2, 5), (3, 4)]:
        u = rng.normal(size=(n, m))
        recip = rng.uniform(0.1, 2.0, size=(m, m))
        recip = 0.5 * (recip + recip.T)
        want = -math.inf
        for t in itertools.product(range(m), repeat=n):
            c = math.fsum(
                recip[t[i], t[j]] for i in range(n) for j in range(i + 1, n)
            )
            want = max(want, math.fsum(u[i, t[i]] for i in range(n)) - c)
        got = max_dual_excess(u, recip)
        assert got == pytest.approx(want, abs=1e-12)


def test_max_dual_excess_ignores_infinite_cost():
    u = np.zeros((2, 2))
    recip = np.array([[math.inf, 0.5], [0.5, math.inf]])
    # only off-diagonal tuples count: excess = 0 - 0.5
    assert max_dual_excess(u, recip) == pytest.approx(-0.5)


def test_verify_duality_on_a_solved_instance():
    g = GridSpec(level=2, window_halfwidth=1.0, dimension=1)
    mu = discretize(UniformBall(center=(0.0,), radius=1.0), g, samples_per_axis=16)
    model = coulomb(2)
    plan, pots, value = solve_mmot(mu, model)
    rep = verify_duality(plan, pots, model)
    assert rep.primal_value == pytest.approx(value, abs=1e-12)
    assert rep.relative_gap <= 1e-10
    assert rep.max_slackness_violation <= 1e-9
    assert rep.max_dual_violation <= 1e-9
    assert rep.diagonal_clearance_alpha > 0.0
    assert rep.potential_bound_satisfied
    assert rep.potential_sup <= rep.potential_bound
    assert rep.cost_mode == "cell"
    d = rep.as_dict()
    assert set(d) >= {"primal_value", "dual_value", "relative_gap"}
    assert "primal_value=" in rep.to_kv_block()
    assert '"relative_gap"' in rep.to_json()


def test_verify_duality_shape_checks():
    plan = _two_point_plan(diagonal=False)
    other = GridSpec(level=2, window_halfwidth=1.0, dimension=1)
    pots_wrong_grid = PotentialVector(other, ({}, {}))
    with pytest.raises(DimensionMismatch):
        verify_duality(plan, pots_wrong_grid, coulomb(2))
    pots3 = PotentialVector(G1, ({}, {}, {}))
    with pytest.raises(DimensionMismatch):
        verify_duality(plan, pots3, coulomb(2))
    pots2 = PotentialVector(G1, ({(-1,): 0.0, (2,): 0.0}, {(-1,): 0.0, (2,): 0.0}))
    with pytest.raises(DimensionMismatch):
        verify_duality(plan, pots2, coulomb(3))


def test_diagonal_clearance_cases():
    diag = _two_point_plan(diagonal=True)
    assert diagonal_clearance(diag) == 0.0
    swap = _two_point_plan(diagonal=False)
    # cells -1 and 2 are separated by two interior cells: distance 1
    assert diagonal_clearance(swap) == pytest.approx(1.0)
    # restricting the window below the atoms leaves nothing to measure
    assert diagonal_clearance(swap, window_radius=0.25) == math.inf
    with pytest.raises(ValueError):
        diagonal_clearance(swap, window_radius=2.0)


def test_product_plan_and_its_cost():
    g = GridSpec(level=1, window_halfwidth=1.0, dimension=1)
    mu = DiscreteMeasure(g, {(-1,): 0.25, (1,): 0.25, (2,): 0.5})
    pp = product_plan(mu, 2)
    pp.validate()
    assert len(pp.atoms) == 9
    assert pp.atoms[((-1,), (2,))] == pytest.approx(0.125)
    direct = plan_cost(pp, coulomb(2))
    assert product_plan_cost(mu, coulomb(2)) == pytest.approx(direct, rel=1e-12)
    with pytest.raises(ValueError):
        product_plan(mu, 2, max_atoms=4)
    # pointwise product cost is infinite: the diagonal carries mass
    assert product_plan_cost(mu, coulomb(2), cost_mode="pointwise") == math.inf


def test_bound_formulas_frozen_values():
    assert lemma_upper_bound(2, 1.0, 0.0) == 1.0
    assert lemma_upper_bound(3, 0.5, -1.0) == 9.0
    assert potential_bound(2, 1.0, 0.0) == 4.0
    assert potential_bound(2, 1.0, 1.0) == 3.0
    assert potential_bound(3, 0.5, 0.0) == 48.0


def test_bound_parameters_off_diagonal_plan():
    plan = _two_point_plan(diagonal=False)
    mu = plan_measure(plan)
    r, k = bound_parameters(plan, mu, coulomb(2), 1.0)
    assert 0.0 < r <= diagonal_clearance(plan) / 4.0 + 1e-12
    centers = [plan.grid.cell_center(c) for c in ((-1,), (2,))]
    assert k == pytest.approx(pointwise_cost(coulomb(2), centers) / 2.0)
    assert potential_bound(2, r, k) > 0.0
    with pytest.raises(ValueError):
        bound_parameters(plan, mu, coulomb(2), 1.0, m_fraction=1.5)


def test_bound_parameters_needs_off_diagonal_atom():
    plan = _two_point_plan(diagonal=True)
    with pytest.raises(NoOffDiagonalSupport):
        bound_parameters(plan, plan_measure(plan), coulomb(2), 1.0)


def test_swap_two_point_diagonal_becomes_antidiagonal():
    plan = _two_point_plan(diagonal=True)
    before = plan_cost(plan, coulomb(2))
    centers = [((-1,), (-1,)), ((2,), (2,))]
    new, after = swap_improve(plan, coulomb(2), centers, [0.3, 0.3])
    assert new.atoms == {
        ((-1,), (2,)): pytest.approx(0.5),
        ((2,), (-1,)): pytest.approx(0.5),
    }
    assert after < before
    assert after == pytest.approx(plan_cost(new, coulomb(2)))
    for slot in (0, 1):
        assert new.marginal(slot) == plan.marginal(slot)


def test_swap_three_point_latin_rotation():
    g = GridSpec(level=1, window_halfwidth=1.0, dimension=1)
    cells = [(-1,), (1,), (2,)]
    third = 1.0 / 3.0
    plan = TransportPlan(g, 3, {(c, c, c): third for c in cells})
    centers = [(c, c, c) for c in cells]
    new, after = swap_improve(plan, coulomb(3), centers, [0.2, 0.2, 0.2])
    assert len(new.atoms) == 3
    for t, w in new.atoms.items():
        assert w == pytest.approx(third)
        assert len(set(t)) == 3
    # each slot sees each cell exactly once: a Latin square
    for slot in range(3):
        assert sorted(t[slot] for t in new.atoms) == cells
        assert new.marginal(slot) == plan.marginal(slot)
    assert after < plan_cost(plan, coulomb(3))


def test_swap_rejects_overlapping_neighborhoods():
    plan = _two_point_plan(diagonal=True)
    centers = [((-1,), (-1,)), ((2,), (2,))]
    with pytest.raises(OverlappingNeighborhoods):
        swap_improve(plan, coulomb(2), centers, [5.0, 5.0])


def test_swap_rejects_empty_restriction():
    plan = _two_point_plan(diagonal=True)
    # second neighborhood sits on a cell holding no plan mass
    centers = [((-1,), (-1,)), ((1,), (1,))]
    with pytest.raises(EmptyRestriction):
        swap_improve(plan, coulomb(2), centers, [0.3, 0.3])


def test_swap_validates_arguments():
    plan = _two_point_plan(diagonal=True)
    with pytest.raises(ValueError):
        swap_improve(plan, coulomb(2), [((-1,), (-1,))], [0.3])
    with pytest.raises(ValueError):
        swap_improve(
            plan, coulomb(2), [((-1,), (-1,)), ((2,), (2,))], [0.3, -0.1]
        )
    with pytest.raises(ValueError):
        swap_improve(plan, coulomb(2), [((-1,),), ((2,), (2,))], [0.3, 0.3])


def test_plan_file_roundtrip(tmp_path):
    plan = _two_point_plan(diagonal=False)
    path = tmp_path / "swap.plan"
    save_plan(plan, path)
    back = load_plan(path)
    assert back.grid == plan.grid
    assert back.n_marginals == 2
    assert back.atoms == plan.atoms


def test_plan_file_errors(tmp_path):
    head = "mmot-plan v1 level=1 halfwidth=1.0 dim=1 N=2\n"
    cases = {
        "empty.plan": ("", ParseError),
        "arity.plan": (head + "-1 0.5\n", ParseError),
        "dupe.plan": (head + "-1 2 0.5\n-1 2 0.5\n", ParseError),
        "neg.plan": (head + "-1 2 -0.5\n2 -1 1.5\n", NegativeWeight),
        "mass.plan": (head + "-1 2 0.4\n2 -1 0.4\n", NormalizationError),
        "marg.plan": (head + "-1 2 0.7\n2 -1 0.3\n", ParseError),
        "outside.plan": (head + "-9 2 1.0\n", ParseError),
        "badn.plan": ("mmot-plan v1 level=1 halfwidth=1.0 dim=1 N=1\n-1 0.5\n", ParseError),
    }
    for name, (text, exc) in cases.items():
        path = tmp_path / name
        path.write_text(text)
        with pytest.raises(exc):
            load_plan(path)


def test_potentials_file_roundtrip(tmp_path):
    pots = PotentialVector(
        G1, ({(-1,): 0.25, (2,): -0.5}, {(-1,): 0.0, (2,): 1.25e-3})
    )
    path = tmp_path / "u.potentials"
    save_potentials(pots, path)
    back = load_potentials(path)
    assert back.grid == pots.grid
    assert back.values == pots.values


def test_potentials_file_errors(tmp_path):
    head = "mmot-potentials v1 level=1 halfwidth=1.0 dim=1 N=2\n"
    cases = {
        "slot.potentials": (head + "3 1 0.5\n", ParseError),
        "arity.potentials": (head + "1 0.5\n", ParseError),
        "dupe.potentials": (head + "1 1 0.5\n1 1 0.25\n", ParseError),
        "cell.potentials": (head + "1 7 0.5\n", ParseError),
    }
    for name, (text, exc) in cases.items():
        path = tmp_path / name
        path.write_text(text)
        with pytest.raises(exc):
            load_potentials(path)
