"""Pivoting local search with randomized block restarts."""

import numpy as np
import pytest

from tariff_complex import (
    QspcOptions,
    explore_good_neighbors,
    miqp_restart,
    pattern_of,
    qspc,
    quad_profit,
    solve_cell,
    solve_quad,
    SolverOptions,
)
from conftest import make_instance, tie_instance


def test_qspc_report_shape():
    rng = np.random.default_rng(139)
    inst = make_instance(rng, S=2, W=2, H=1)
    rep = qspc(inst, 1.0)
    assert rep.status == "heuristic"
    assert rep.bound is None and rep.gap is None
    assert rep.node_count == 0
    assert rep.has_incumbent()
    assert quad_profit(inst, rep.x, 1.0) == pytest.approx(rep.objective, abs=1e-8)
    assert inst.polytope.contains(rep.x, tol=1e-7)
    assert rep.extras["n_explore"] >= 1
    assert not rep.extras["timed_out"]


def test_log_is_monotone_and_typed():
    rng = np.random.default_rng(149)
    for seed in range(6):
        inst = make_instance(np.random.default_rng(400 + seed), S=3, W=2, H=1)
        rep = qspc(inst, 1.5, opts=QspcOptions(rng_seed=seed))
        phis = [row["phi"] for row in rep.trace]
        assert all(b >= a - 1e-12 for a, b in zip(phis, phis[1:]))
        assert all(row["phase"] in ("descent", "restart") for row in rep.trace)
        assert all(set(row) == {"phase", "pattern_hash", "phi"} for row in rep.trace)
        assert rep.objective == pytest.approx(phis[-1], abs=1e-12)


def test_quality_against_oracle(tiny_set, tiny_beta_list, tiny_quad_oracles):
    hits = 0
    n = 10
    for i in range(n):
        inst, beta = tiny_set[i], tiny_beta_list[i]
        res = tiny_quad_oracles[i]
        rep = qspc(inst, beta, opts=QspcOptions(rng_seed=i))
        assert rep.objective <= res.value + 1e-7  # never beats the oracle
        if res.value - rep.objective <= 0.01 * max(1.0, abs(res.value)):
            hits += 1
    assert hits >= n - 1


def test_runs_are_deterministic():
    rng = np.random.default_rng(151)
    inst = make_instance(rng, S=3, W=2, H=1)
    a = qspc(inst, 0.8, opts=QspcOptions(rng_seed=5))
    b = qspc(inst, 0.8, opts=QspcOptions(rng_seed=5))
    assert repr(a.trace) == repr(b.trace)
    assert a.objective == b.objective
    assert a.x.tobytes() == b.x.tobytes()
    c = qspc(inst, 0.8, opts=QspcOptions(rng_seed=6))
    assert c.objective >= a.objective - 0.5  # different stream, same ballpark


def test_start_at_optimum_is_a_fixed_point(tiny_set, tiny_beta_list,
                                           tiny_quad_oracles):
    inst, beta = tiny_set[1], tiny_beta_list[1]
    res = tiny_quad_oracles[1]
    rep = qspc(inst, beta, start=res.x)
    assert rep.objective >= res.value - 1e-7


def test_full_block_restart_reaches_global(tiny_set, tiny_beta_list,
                                           tiny_quad_oracles):
    # sigma = 1 frees every indicator, so one restart solves the full program
    inst, beta = tiny_set[3], tiny_beta_list[3]
    res = tiny_quad_oracles[3]
    opts = QspcOptions(sigma=1.0, restart_gap=1e-6, rng_seed=0)
    rep = qspc(inst, beta, opts=opts)
    assert rep.objective == pytest.approx(res.value, abs=1e-5)


def test_degenerate_restart_is_a_no_op():
    rng = np.random.default_rng(157)
    inst = make_instance(rng, S=2, W=2, H=1)
    beta = 1.0
    x0 = inst.polytope.midpoint()
    A = pattern_of(inst, x0, beta)
    x_A, phi_A = solve_cell(inst, A, beta, warm=x0)
    opts = QspcOptions(sigma=0.0, gamma_s=0, gamma_w=0)
    A_r, x_r, phi_r = miqp_restart(inst, beta, A, opts, warm=(x_A, phi_A))
    assert A_r == A
    assert phi_r == phi_A
    assert np.array_equal(x_r, x_A)


def test_restart_gamma_validation():
    rng = np.random.default_rng(163)
    inst = make_instance(rng, S=2, W=1, H=1)
    A = pattern_of(inst, inst.polytope.midpoint(), 1.0)
    with pytest.raises(ValueError):
        miqp_restart(inst, 1.0, A, QspcOptions(gamma_s=5))
    with pytest.raises(ValueError):
        miqp_restart(inst, 1.0, A, QspcOptions(gamma_w=3))


def test_explore_returns_input_at_local_optimum(tiny_set, tiny_beta_list,
                                                tiny_quad_oracles):
    inst, beta = tiny_set[4], tiny_beta_list[4]
    res = tiny_quad_oracles[4]
    x_A, phi_A = solve_cell(inst, res.pattern, beta, warm=res.x)
    A_n, x_n, phi_n = explore_good_neighbors(inst, beta, res.pattern, x_A, phi_A)
    assert A_n == res.pattern  # no single flip beats the global optimum
    assert phi_n == phi_A


def test_explore_strictly_improves_from_poor_cell():
    inst = tie_instance()
    beta = 50.0  # sharp response, so the walk-away cell is truly profitless
    x0 = np.array([[5.4]])
    A = pattern_of(inst, x0, beta)
    assert np.array_equal(A.A[:, 1], np.zeros(5))  # nobody buys here
    x_A, phi_A = solve_cell(inst, A, beta, warm=x0)
    assert phi_A == pytest.approx(0.0, abs=1e-10)
    A_n, x_n, phi_n = explore_good_neighbors(inst, beta, A, x_A, phi_A)
    assert phi_n > 0.9  # winning back the top segment pays about 0.99
    assert A_n != A


def test_restricted_miqp_mode_dominates_single_flips(tiny_set, tiny_beta_list):
    inst, beta = tiny_set[5], tiny_beta_list[5]
    x0 = inst.polytope.midpoint()
    A = pattern_of(inst, x0, beta)
    x_A, phi_A = solve_cell(inst, A, beta, warm=x0)
    opts = QspcOptions(restart_gap=1e-9)
    _, _, phi_qp = explore_good_neighbors(inst, beta, A, x_A, phi_A,
                                          mode="per_pattern_qp", opts=opts)
    _, _, phi_mi = explore_good_neighbors(inst, beta, A, x_A, phi_A,
                                          mode="restricted_miqp", opts=opts)
    assert phi_mi >= phi_qp - 1e-7  # joint flips include every single flip


def test_time_limit_zero_keeps_start_state():
    rng = np.random.default_rng(167)
    inst = make_instance(rng, S=2, W=2, H=1)
    rep = qspc(inst, 1.0, opts=QspcOptions(time_limit_s=0.0))
    assert rep.status == "heuristic"
    assert rep.has_incumbent()
    assert rep.extras["timed_out"]
    assert quad_profit(inst, rep.x, 1.0) == pytest.approx(rep.objective, abs=1e-8)


def test_heuristic_stays_below_exact_bound():
    rng = np.random.default_rng(173)
    inst = make_instance(rng, S=2, W=2, H=1)
    beta = 1.2
    exact = solve_quad(inst, beta, SolverOptions(gap=1e-6))
    heur = qspc(inst, beta)
    assert heur.objective <= exact.bound + 1e-7


def test_options_validation():
    with pytest.raises(ValueError):
        QspcOptions(sigma=1.5)
    with pytest.raises(ValueError):
        QspcOptions(r_max=0)
    with pytest.raises(ValueError):
        QspcOptions(neighbor_mode="annealing")
