import math

import numpy as np
import pytest

from huberlearn.bilevel import (
    AlphaGrid,
    Landscape,
    NoConvergedPointError,
    argmin_landscape,
    landscape,
    refine,
    sweep,
    u_grid_values,
    unimodality_violations,
)
from huberlearn.costs import CostKind, cost_l2sq
from huberlearn.grid import INF
from huberlearn.solver import RegularizerKind, SolverConfig, objective, solve

TV, TGV2 = RegularizerKind.TV, RegularizerKind.TGV2
TIGHT = SolverConfig(gap_tol=1e-14, max_iters=200000)
PAIR = np.array([[0.0, 1.0]])


def _fake(values, converged=None):
    values = np.asarray(values, dtype=float)
    grid = AlphaGrid(*[np.arange(1, n + 1) * 0.1 for n in values.shape])
    conv = np.ones(values.shape, bool) if converged is None else np.asarray(converged)
    z = np.zeros(values.shape)
    return Landscape(grid, values, z, z.astype(int), z, conv)


def test_u_grid_values():
    u = u_grid_values()
    assert u.size == 51 and u[0] == 0.001 and u[1] == 0.01 and u[-1] == 0.5
    assert np.all(np.diff(u) > 0)


def test_alpha_grid_validation():
    assert AlphaGrid([0.1, 0.2], [1.0]).shape == (2, 1)
    assert len(AlphaGrid.builtin("paperU", 2)) == 51 * 51
    for bad in ([0.2, 0.1], [0.0, 1.0], [], [0.1, math.inf]):
        with pytest.raises(ValueError):
            AlphaGrid(bad)
    with pytest.raises(ValueError):
        AlphaGrid.builtin("nope")


def test_single_point_landscape_is_composition():
    ls = landscape(TV, PAIR, PAIR, AlphaGrid([0.1]), INF, 0.0, CostKind.l2sq(), TIGHT)
    u = solve(TV, PAIR, 0.1, INF, 0.0, TIGHT).u
    assert ls.cost_values[0] == pytest.approx(cost_l2sq(u, PAIR), abs=1e-12)


def test_two_pixel_clean_landscape():
    # u = (a, 1 - a), so the cost is a^2
    ls = landscape(TV, PAIR, PAIR, AlphaGrid([0.1, 0.25]), INF, 0.0, CostKind.l2sq(), TIGHT)
    np.testing.assert_allclose(ls.cost_values, [0.01, 0.0625], atol=1e-7)
    alpha, interior, idx = argmin_landscape(ls)
    assert alpha == (0.1,) and not interior and idx == (0,)


def test_argmin_rules():
    assert argmin_landscape(_fake([1, 2, 3]))[1:] == (False, (0,))
    assert argmin_landscape(_fake([3, 1, 2]))[1:] == (True, (1,))
    # ties go to the smaller index; unconverged points are skipped
    assert argmin_landscape(_fake([3, 1, 1, 2]))[2] == (1,)
    assert argmin_landscape(_fake([0, 1, 2], [False, True, True]))[2] == (1,)
    with pytest.raises(NoConvergedPointError):
        argmin_landscape(_fake([0, 1], [False, False]))
    a, inside, idx = argmin_landscape(_fake([[5, 5, 5], [5, 1, 5], [5, 5, 5]]))
    assert inside and idx == (1, 1)


def test_unimodality_counter():
    assert unimodality_violations(_fake([3, 2, 1, 2, 3])) == 0
    assert unimodality_violations(_fake([3, 1, 2, 1, 3])) == 1
    assert unimodality_violations(_fake([1, 1, 1])) == 0
    assert unimodality_violations(_fake([[3, 1, 3], [2, 0, 2], [3, 1, 3]])) == 0


def test_warm_start_matches_cold_start(fixture_pair):
    f, f0 = fixture_pair
    alphas = [0.05, 0.1, 0.15]
    cfg = SolverConfig(gap_tol=1e-8)
    warm = landscape(TV, f, f0, AlphaGrid(alphas), 100.0, 1e-10, CostKind.l2sq(), cfg, warm_start=True)
    cold = landscape(TV, f, f0, AlphaGrid(alphas), 100.0, 1e-10, CostKind.l2sq(), cfg, warm_start=False)
    assert warm.converged.all() and cold.converged.all()
    assert warm.iterations.sum() <= cold.iterations.sum()
    # each u is within sqrt(2 gap) of the minimizer; the cost is Lipschitz
    # with constant |a + b - 2 f0| / 2 along the segment between them
    for k, a in enumerate(alphas):
        pmax = 1.0 + objective(TV, f, f, a, 100.0, 1e-10)
        du = math.sqrt(2 * warm.rel_gap[k] * pmax) + math.sqrt(2 * cold.rel_gap[k] * pmax)
        lip = math.sqrt(2 * warm.cost_values[k]) + math.sqrt(2 * cold.cost_values[k]) + du
        assert abs(warm.cost_values[k] - cold.cost_values[k]) <= 0.5 * du * lip


def test_parallel_evaluation_is_order_independent():
    f = np.array([[0.0, 0.2, 1.0, 0.9]])
    f0 = np.array([[0.0, 0.0, 1.0, 1.0]])
    grid = AlphaGrid([0.05, 0.1, 0.2], [0.1, 0.3])
    cfg = SolverConfig(gap_tol=1e-8, max_iters=50000)
    a = landscape(TGV2, f, f0, grid, 100.0, 0.0, CostKind.l2sq(), cfg, warm_start=False)
    b = landscape(TGV2, f, f0, grid, 100.0, 0.0, CostKind.l2sq(), cfg, warm_start=False, workers=2)
    assert np.abs(a.cost_values - b.cost_values).max() <= 1e-10


def test_landscape_arity_check():
    with pytest.raises(ValueError):
        landscape(TGV2, PAIR, PAIR, AlphaGrid([0.1]), INF, 0.0, CostKind.l2sq())


def test_refine_descends_to_left_bound():
    res = refine(TV, PAIR, PAIR, 0.1, INF, 0.0, CostKind.l2sq(), TIGHT, radius=0.05, tol=1e-3)
    assert res.cost <= res.start_cost
    # cost = a^2 on [0.05, 0.15]: the left end wins
    assert res.alpha[0] == pytest.approx(0.05, abs=2e-3)
    with pytest.raises(ValueError):
        refine(TV, PAIR, PAIR, 0.1, INF, 0.0, CostKind.l2sq(), TIGHT, radius=0.001, tol=0.01)


def test_refine_improves_on_grid_argmin(fixture_pair):
    f, f0 = fixture_pair
    cfg = SolverConfig(gap_tol=1e-8)
    ls = landscape(TV, f, f0, AlphaGrid([0.08, 0.1, 0.12, 0.14]), 100.0, 1e-10, CostKind.l2sq(), cfg)
    a, _, idx = argmin_landscape(ls)
    res = refine(TV, f, f0, a, 100.0, 1e-10, CostKind.l2sq(), cfg, radius=0.02, tol=1e-3)
    assert res.cost <= ls.cost_values[idx] + 1e-9


def test_sweep_basics():
    grid = AlphaGrid([0.1, 0.25, 0.4])
    one = sweep(TV, PAIR, PAIR, grid, CostKind.l2sq(), [(100.0, 0.0)], TIGHT)
    assert one.drifts == [] and len(one.argmins) == 1
    two = sweep(TV, PAIR, PAIR, grid, CostKind.l2sq(), [(INF, 0.0), (INF, 0.0)], TIGHT)
    assert two.drifts == [0] and two.drifts_abs == [0.0]
    with pytest.raises(ValueError):
        sweep(TV, PAIR, PAIR, grid, CostKind.l2sq(), [(100.0, 0.0), (10.0, 0.0)])
    with pytest.raises(ValueError):
        sweep(TV, PAIR, PAIR, grid, CostKind.l2sq(), [])
    d = two.to_dict()
    assert d["schedule"] == [["inf", 0.0], ["inf", 0.0]]
