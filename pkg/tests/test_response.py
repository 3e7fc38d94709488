"""Regularized, logit, and deterministic customer responses."""

import numpy as np
import pytest

from tariff_complex import (
    Beta,
    QpProblem,
    det_profit,
    det_response_set,
    logit_profit,
    logit_row,
    penalization_equivalence_check,
    project_simplex,
    qpcc_objective,
    quad_profit,
    quad_response,
    quad_response_row,
    solve_qp,
)
from conftest import make_instance, tie_instance


def test_closed_form_hand_example():
    # V = (0, 1, 3), beta = 1: threshold c_2 = (2 + 0 + 1)/2 = 1.5, so the
    # third option drops out and y = (beta/2)(c - V)+ = (0.75, 0.25, 0).
    det = quad_response_row(np.array([0.0, 1.0, 3.0]), beta=1.0)
    assert np.allclose(det.ybar, [0.75, 0.25, 0.0], atol=1e-15)
    assert det.tau == 2
    assert det.mu == pytest.approx(1.5, abs=1e-15)
    assert det.lam[2] == pytest.approx(1.5, abs=1e-15)
    assert det.lam[:2] == pytest.approx([0.0, 0.0], abs=1e-15)


def test_row_matches_simplex_projection_and_qp():
    rng = np.random.default_rng(23)
    for _ in range(80):
        n = int(rng.integers(1, 13))
        beta = float(10.0 ** rng.uniform(-2, 2))
        V = np.concatenate([[0.0], rng.uniform(-2.0, 8.0, size=n - 1)]) \
            if n > 1 else np.zeros(1)
        y = quad_response_row(V, beta).ybar
        assert np.max(np.abs(y - project_simplex(-0.5 * beta * V))) <= 1e-12
        # same point from the generic QP  min V.y + (1/beta) <y - 1, y>
        prob = QpProblem(Q=(2.0 / beta) * np.eye(n), c=V - 1.0 / beta,
                         G=-np.eye(n), h=np.zeros(n),
                         A=np.ones((1, n)), b=np.array([1.0]))
        sol = solve_qp(prob)
        assert sol.status == "optimal"
        assert np.max(np.abs(y - sol.z)) <= 1e-9


def test_row_kkt_residual_small():
    rng = np.random.default_rng(29)
    for _ in range(60):
        n = int(rng.integers(2, 13))
        V = rng.uniform(-4.0, 10.0, size=n)
        beta = float(10.0 ** rng.uniform(-2, 2))
        det = quad_response_row(V, beta)
        assert det.kkt_residual(V) <= 1e-9
        assert det.ybar.min() >= 0.0
        assert abs(det.ybar.sum() - 1.0) <= 1e-12


def test_soft_threshold_boundary_is_inclusive():
    for beta in (0.3, 1.0, 7.0):
        gap = 2.0 / beta
        full = quad_response_row(np.array([0.0, gap, gap + 1.0]), beta).ybar
        assert np.array_equal(full, [1.0, 0.0, 0.0])
        near = quad_response_row(np.array([0.0, gap - 1e-6]), beta).ybar
        assert near[1] > 0.0
        assert near[0] > near[1]


def test_ties_share_mass_equally():
    y = quad_response_row(np.array([0.0, 0.0, 5.0]), beta=1.0).ybar
    assert y[0] == pytest.approx(y[1], abs=1e-15)
    assert y[2] == 0.0


def test_full_support_for_small_beta():
    V = np.array([0.0, 0.5, 1.0])
    det = quad_response_row(V, beta=0.01)
    assert det.tau == V.size  # nothing excluded
    assert np.all(det.ybar > 0.0)


def test_quad_response_per_segment_beta():
    rng = np.random.default_rng(31)
    inst = make_instance(rng, S=2, W=2, H=1)
    x = inst.polytope.midpoint()
    beta = Beta(value=1.0, scales=np.array([0.5, 5.0]))
    resp, details = quad_response(inst, x, beta)
    V = inst.disutilities(x)
    for s, b in enumerate((0.5, 5.0)):
        assert np.allclose(resp.ybar[s], quad_response_row(V[s], b).ybar)
        assert details[s].beta == b


def test_logit_row_is_boltzmann():
    V = np.array([0.0, 1.0, 2.5])
    beta = 1.3
    y = logit_row(V, beta)
    ref = np.exp(-beta * V)
    ref /= ref.sum()
    assert np.allclose(y, ref, atol=1e-15)
    assert logit_row(np.array([0.0, 1e4]), 10.0)[1] >= 0.0  # no overflow


def test_det_response_optimistic_ties():
    inst = tie_instance()
    x = np.array([[3.0]])
    sets, resp = det_response_set(inst, x)
    # segment with R = 3 is exactly indifferent and takes the contract
    assert np.array_equal(sets[2], [0, 1])
    assert resp.ybar[2, 1] == 1.0
    assert resp.ybar[0, 0] == 1.0 and resp.ybar[1, 0] == 1.0  # priced out
    assert resp.ybar[3, 1] == 1.0 and resp.ybar[4, 1] == 1.0
    assert det_profit(inst, x) == pytest.approx(1.8, abs=1e-12)
    assert det_profit(inst, np.array([[3.05]])) == pytest.approx(1.22, abs=1e-12)


def test_qpcc_objective_equals_quad_profit():
    rng = np.random.default_rng(37)
    for _ in range(50):
        inst = make_instance(rng, S=int(rng.integers(1, 4)),
                             W=int(rng.integers(1, 3)), H=int(rng.integers(1, 3)))
        x = rng.uniform(0.0, 4.0, size=(inst.W, inst.H))
        beta = float(10.0 ** rng.uniform(-1.3, 1.7))
        _, details = quad_response(inst, x, beta)
        assert qpcc_objective(inst, x, beta, details) == \
            pytest.approx(quad_profit(inst, x, beta), abs=1e-10)


def test_penalization_equivalence_randomized():
    rng = np.random.default_rng(41)
    for _ in range(40):
        n = int(rng.integers(2, 10))
        V = rng.uniform(-3.0, 9.0, size=n)
        beta = float(10.0 ** rng.uniform(-2, 2))
        assert penalization_equivalence_check(V, beta)


def test_limits_recover_det_and_uniform():
    rng = np.random.default_rng(43)
    inst = make_instance(rng, S=3, W=2, H=2)
    x = inst.polytope.midpoint()
    _, det_resp = det_response_set(inst, x)
    big, _ = quad_response(inst, x, 1e9)
    assert np.allclose(big.ybar, det_resp.ybar, atol=1e-6)
    tiny, _ = quad_response(inst, x, 1e-9)
    assert np.allclose(tiny.ybar, 1.0 / (inst.W + 1), atol=1e-6)
    assert logit_profit(inst, x, 1e-9) == pytest.approx(
        quad_profit(inst, x, 1e-9), abs=1e-5)


def test_beta_validation():
    with pytest.raises(ValueError):
        Beta(value=0.0)
    with pytest.raises(ValueError):
        Beta(value=1.0, scales=np.array([1.0, -1.0]))
    assert Beta.coerce(3.0).per_segment(4) == pytest.approx([3.0] * 4)
    with pytest.raises(ValueError):
        Beta(value=1.0, scales=np.ones(3)).per_segment(4)
