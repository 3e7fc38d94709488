"""Cell geometry of the regularized response and the enumeration oracles."""

import numpy as np
import pytest

from tariff_complex import (
    CellInfeasibleError,
    Pattern,
    asymptotic_cell_system,
    cell_qp,
    cell_system,
    count_patterns,
    det_oracle,
    det_response_set,
    enumerate_patterns,
    is_feasible,
    neighbors,
    pattern_of,
    pure_assignment_lp,
    quad_oracle,
    quad_profit,
    quad_response,
    solve_cell,
)
from conftest import interior_point, line_instance, make_instance, tie_instance


def test_line_instance_cells_are_intervals():
    # e = 1, r = 1.5, beta = 8: the contract wins alone below x = 1.25, the
    # customer splits on [1.25, 1.75], and walks away above 1.75.
    inst = line_instance(e=1.0, r=1.5, c=0.0, lo=1.0, hi=2.0)
    beta = 8.0
    only_contract = Pattern(np.array([[0, 1]]))
    split = Pattern(np.array([[1, 1]]))
    walk = Pattern(np.array([[1, 0]]))
    assert pattern_of(inst, np.array([[1.1]]), beta) == only_contract
    assert pattern_of(inst, np.array([[1.5]]), beta) == split
    assert pattern_of(inst, np.array([[1.9]]), beta) == walk

    sys_split = cell_system(inst, split, beta)
    assert sys_split.contains(np.array([[1.75]]))  # closed boundary
    assert not sys_split.strictly_classifies(np.array([[1.75]]))
    assert sys_split.strictly_classifies(np.array([[1.5]]))
    # threshold is inclusive, so the boundary point already concentrates
    assert pattern_of(inst, np.array([[1.75]]), beta) == walk

    x, val = solve_cell(inst, only_contract, beta)
    assert val == pytest.approx(1.25, abs=1e-9)
    assert x[0, 0] == pytest.approx(1.25, abs=1e-9)
    res = quad_oracle(inst, beta)
    assert res.value == pytest.approx(1.25, abs=1e-9)
    # the maximum sits on the boundary shared by both closed cells
    assert res.pattern in (only_contract, split)
    assert res.n_feasible == 3 and res.n_total == 3


def test_pattern_of_lands_in_its_cell():
    rng = np.random.default_rng(47)
    for _ in range(40):
        inst = make_instance(rng, S=int(rng.integers(1, 4)),
                             W=int(rng.integers(1, 3)), H=int(rng.integers(1, 3)))
        beta = float(10.0 ** rng.uniform(-1, 1.5))
        x = rng.uniform(0.0, 4.0, size=(inst.W, inst.H))
        pat = pattern_of(inst, x, beta)
        assert cell_system(inst, pat, beta).contains(x, tol=1e-8)


def test_cell_value_matches_profit_and_is_concave():
    rng = np.random.default_rng(53)
    for _ in range(40):
        inst = make_instance(rng, S=int(rng.integers(1, 4)),
                             W=int(rng.integers(1, 3)), H=int(rng.integers(1, 3)))
        beta = float(10.0 ** rng.uniform(-1, 1.5))
        x = rng.uniform(0.0, 4.0, size=(inst.W, inst.H))
        pat = pattern_of(inst, x, beta)
        qp = cell_qp(inst, pat, beta)
        assert qp.value(x) == pytest.approx(quad_profit(inst, x, beta), abs=1e-10)
        assert qp.min_concavity_eig() >= -1e-9


def test_solve_cell_dominates_cell_points():
    rng = np.random.default_rng(59)
    inst = make_instance(rng, S=2, W=2, H=1)
    beta = 2.0
    x0 = rng.uniform(0.5, 3.5, size=(2, 1))
    pat = pattern_of(inst, x0, beta)
    xs, val = solve_cell(inst, pat, beta)
    system = cell_system(inst, pat, beta)
    assert system.contains(xs, tol=1e-7)
    qp = cell_qp(inst, pat, beta)
    assert val == pytest.approx(qp.value(xs), abs=1e-8)
    G, h = system.matrices()
    for _ in range(50):
        # random point of the closed cell via a ray from x0
        d = rng.normal(size=2)
        rate = G @ d
        slack = h - G @ x0.ravel()
        pos = rate > 1e-12
        t_max = float(np.min(slack[pos] / rate[pos])) if pos.any() else 1.0
        xr = x0.ravel() + rng.uniform(0.0, 0.95) * t_max * d
        assert qp.value(xr) <= val + 1e-8


def test_solve_cell_warm_start_changes_nothing():
    rng = np.random.default_rng(61)
    inst = make_instance(rng, S=2, W=1, H=2)
    pat = pattern_of(inst, inst.polytope.midpoint(), 1.0)
    x_cold, v_cold = solve_cell(inst, pat, 1.0)
    x_warm, v_warm = solve_cell(inst, pat, 1.0, warm=rng.uniform(0, 4, size=2))
    assert v_warm == pytest.approx(v_cold, abs=1e-9)
    assert np.allclose(x_cold, x_warm, atol=1e-7)


def test_empty_cell_detection():
    inst = line_instance(e=1.0, r=10.0, c=0.0, lo=1.0, hi=2.0)
    # the contract is strictly better everywhere in the box, so the
    # walk-away-only cell is empty at beta = 1
    walk = Pattern(np.array([[1, 0]]))
    ok, witness = is_feasible(inst, walk, 1.0)
    assert not ok and witness is None
    with pytest.raises(CellInfeasibleError):
        solve_cell(inst, walk, 1.0)
    only = Pattern(np.array([[0, 1]]))
    ok, witness = is_feasible(inst, only, 1.0)
    assert ok
    assert cell_system(inst, only, 1.0).contains(witness)


def test_oracle_matches_fine_grid_in_one_dimension():
    rng = np.random.default_rng(67)
    inst = make_instance(rng, S=2, W=1, H=1)
    beta = 1.5
    res = quad_oracle(inst, beta)
    grid = np.linspace(0.0, 4.0, 20001)
    vals = [quad_profit(inst, np.array([[t]]), beta) for t in grid]
    assert res.value >= max(vals) - 1e-12
    assert res.value == pytest.approx(max(vals), abs=1e-5)


def test_pattern_census():
    assert count_patterns(2, 1) == 9
    pats = list(enumerate_patterns(2, 1))
    assert len(pats) == 9
    assert len({p.key() for p in pats}) == 9
    assert all(p.row_sizes().min() >= 1 for p in pats)
    assert count_patterns(3, 2) == 343


def test_pure_assignment_lp_closed_form():
    inst = tie_instance()
    # segments with reservation 3, 4, 5 buy; the best such price is x = 3
    res = pure_assignment_lp(inst, (0, 0, 1, 1, 1))
    assert res is not None
    val, x = res
    assert val == pytest.approx(1.8, abs=1e-9)
    assert x[0, 0] == pytest.approx(3.0, abs=1e-9)
    # reservation-1 buyer cannot coexist with a reservation-2 walk-away
    assert pure_assignment_lp(inst, (1, 0, 0, 0, 0)) is None


def test_det_oracle_tie_instance():
    res = det_oracle(tie_instance())
    assert res.value == pytest.approx(1.8, abs=1e-9)
    assert res.x[0, 0] == pytest.approx(3.0, abs=1e-9)
    assert res.pattern.is_pure()


def test_det_assignment_lies_in_its_limit_cell():
    rng = np.random.default_rng(71)
    for _ in range(25):
        inst = make_instance(rng, S=2, W=2, H=1)
        x = rng.uniform(0.0, 4.0, size=(2, 1))
        _, resp = det_response_set(inst, x)
        pat = resp.support()
        assert asymptotic_cell_system(inst, pat).contains(x, tol=1e-8)


def test_pattern_of_stabilizes_for_large_beta():
    # the deterministic optimum itself sits on tie boundaries, so probe a
    # max-slack interior point of the optimal limit cell instead
    done = 0
    for trial in range(20):
        inst = make_instance(np.random.default_rng(300 + trial), S=2, W=1, H=1)
        res = det_oracle(inst)
        x = interior_point(asymptotic_cell_system(inst, res.pattern))
        if x is None:
            continue
        x = x.reshape(inst.W, inst.H)
        sets, resp = det_response_set(inst, x)
        assert all(len(t) == 1 for t in sets)
        assert resp.support() == res.pattern
        beta = 1.0
        while pattern_of(inst, x, beta) != res.pattern:
            beta *= 2.0
            assert beta < 1e12
        assert pattern_of(inst, x, 2.0 * beta) == res.pattern
        done += 1
        if done == 5:
            break
    assert done == 5


def test_neighbors_drop_worst_add_best():
    rng = np.random.default_rng(79)
    inst = make_instance(rng, S=2, W=2, H=1)
    x = inst.polytope.midpoint()
    V = inst.disutilities(x)
    pat = Pattern(np.array([[1, 1, 0], [0, 1, 0]]))
    moves = neighbors(inst, pat, 1.0, x)
    assert [m.segment for m in moves] == [0, 1]

    m0 = moves[0]
    worst = int(np.argmax(V[0, [0, 1]]))  # among active options 0, 1
    assert m0.minus is not None
    assert m0.minus.A[0, worst] == 0
    assert m0.plus is not None and m0.plus.A[0, 2] == 1  # only inactive option

    m1 = moves[1]
    assert m1.minus is None  # singleton row cannot drop
    best = int(np.array([0, 2])[np.argmin(V[1, [0, 2]])])
    assert m1.plus.A[1, best] == 1
    assert m1.plus.A[1, 1] == 1  # old option stays


def test_neighbors_tie_break_lowest_index():
    inst = tie_instance()
    x = np.array([[3.0]])
    pat = Pattern(np.ones((5, 2), dtype=np.int8))
    moves = neighbors(inst, pat, 1.0, x)
    V = inst.disutilities(x)
    for s, mv in enumerate(moves):
        assert mv.plus is None
        dropped = int(np.flatnonzero(mv.minus.A[s] != pat.A[s])[0])
        assert dropped == int(np.argmax(V[s]))  # first index on exact ties


def test_oracle_pattern_cap():
    rng = np.random.default_rng(83)
    inst = make_instance(rng, S=3, W=2, H=1)
    with pytest.raises(ValueError):
        quad_oracle(inst, 1.0, max_patterns=10)
    with pytest.raises(ValueError):
        det_oracle(inst, max_patterns=2)


def test_quad_oracle_beats_every_sampled_price(tiny_set, tiny_beta_list,
                                               tiny_quad_oracles):
    rng = np.random.default_rng(89)
    for inst, beta, res in zip(tiny_set[:6], tiny_beta_list[:6], tiny_quad_oracles[:6]):
        assert res.n_feasible >= 1
        assert inst.polytope.contains(res.x, tol=1e-7)
        for _ in range(30):
            x = rng.uniform(0.0, 4.0, size=(inst.W, inst.H))
            assert quad_profit(inst, x, beta) <= res.value + 1e-8
        assert quad_profit(inst, res.x, beta) == pytest.approx(res.value, abs=1e-8)
