"""Local search over the response complex for the regularized model.

The search walks the polyhedral complex of support patterns.  One state is a
pattern ``A`` together with the optimum ``(x_A, phi_A)`` of the concave QP on
its closed cell.  A descent step evaluates the one-flip neighborhood (worst
active option out, best inactive option in, per segment) and moves to the
best strictly improving candidate.  At a local optimum, a restart frees a
seeded random subset of activation indicators and re-optimizes that
restricted mixed-binary program; the outer loop stops after ``r_max``
restarts in a row fail to improve.

All randomness flows through one generator seeded by ``rng_seed``; repeated
runs are bit-identical.  Logged records carry no timings, so reports stay
byte-stable (wall-clock goes to the logging stream only).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .bnb import SolveReport, SolverOptions, solve_quad
from .model import Instance, Pattern
from .price_complex import CellInfeasibleError, neighbors, pattern_of, solve_cell
from .response import Beta, quad_response
from .subqp import find_feasible_point

log = logging.getLogger("tariff_complex.qspc")

_EPS_ACCEPT = 1e-9  # strict-improvement margin for a descent move
_REL_IMPROVE = 1e-6  # relative margin for resetting the restart counter


@dataclass
class QspcOptions:
    """Search knobs.

    ``gamma_s`` whole pattern rows and ``gamma_w`` whole contract columns
    are freed per restart, plus each remaining coefficient independently
    with probability ``sigma``.  ``neighbor_mode`` picks how the one-flip
    neighborhood is scanned: one QP per candidate pattern, or a single
    restricted mixed-binary solve with the candidate indicators freed.
    """

    r_max: int = 3
    gamma_s: int = 1
    gamma_w: int = 1
    sigma: float = 0.05
    neighbor_mode: str = "per_pattern_qp"  # or "restricted_miqp"
    rng_seed: int = 0
    restart_gap: float = 3e-2
    restart_time_limit_s: float = 3600.0
    time_limit_s: float = 3600.0

    def __post_init__(self):
        if self.r_max < 1:
            raise ValueError(f"r_max must be at least 1, got {self.r_max}")
        if self.gamma_s < 0 or self.gamma_w < 0:
            raise ValueError("gamma_s and gamma_w must be nonnegative")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in [0, 1], got {self.sigma}")
        if self.neighbor_mode not in ("per_pattern_qp", "restricted_miqp"):
            raise ValueError(f"unknown neighbor_mode {self.neighbor_mode!r}")
        if not (self.restart_gap > 0):
            raise ValueError(f"restart_gap must be positive, got {self.restart_gap}")


@dataclass
class QspcState:
    """Best pattern found so far with its cell optimum; phi never decreases."""

    pattern: Pattern
    x: np.ndarray
    phi: float
    r: int = 0
    log: list[dict] = field(default_factory=list)
    n_explore: int = 0
    n_restarts: int = 0
    n_infeasible_neighbors: int = 0
    timed_out: bool = False

    def record(self, phase: str):
        self.log.append({"phase": phase, "pattern_hash": self.pattern.hash_hex(),
                         "phi": self.phi})


def _cell_state(inst, beta, pattern, warm=None):
    x, phi = solve_cell(inst, pattern, beta, warm=warm)
    return x, phi


def explore_good_neighbors(inst: Instance, beta: Beta | float, A: Pattern,
                           x_A: np.ndarray, phi_A: float,
                           mode: str = "per_pattern_qp",
                           opts: QspcOptions | None = None,
                           counters: QspcState | None = None
                           ) -> tuple[Pattern, np.ndarray, float]:
    """One neighborhood scan from the cell optimum ``(x_A, phi_A)`` of ``A``.

    Returns the incumbent unchanged unless a candidate strictly improves.
    Candidate values tie-break on the lexicographically smallest pattern so
    the result does not depend on evaluation order.
    """
    bet = Beta.coerce(beta)
    moves = neighbors(inst, A, bet, x_A)
    if mode == "restricted_miqp":
        fz = A.A.astype(np.int8).copy()
        freed_any = False
        for mv in moves:
            for cand in (mv.minus, mv.plus):
                if cand is None:
                    continue
                s = mv.segment
                w = int(np.flatnonzero(cand.A[s] != A.A[s])[0])
                fz[s, w] = -1
                freed_any = True
        if not freed_any:
            return A, x_A, phi_A
        opts = opts or QspcOptions()
        rep = solve_quad(inst, bet,
                         SolverOptions(gap=opts.restart_gap,
                                       time_limit_s=opts.restart_time_limit_s),
                         fixed_z=fz, warm_incumbent=(x_A, phi_A))
        return _adopt_if_better(inst, bet, rep, A, x_A, phi_A, counters)

    best = None  # (phi, pattern key, pattern, x)
    for mv in moves:
        for cand in (mv.minus, mv.plus):
            if cand is None:
                continue
            try:
                x_c, phi_c = _cell_state(inst, bet, cand, warm=x_A)
            except CellInfeasibleError:
                if counters is not None:
                    counters.n_infeasible_neighbors += 1
                continue
            key = (-phi_c, cand.key())
            if best is None or key < best[0]:
                best = (key, cand, x_c, phi_c)
    if best is not None and best[3] > phi_A + _EPS_ACCEPT:
        return best[1], best[2], best[3]
    return A, x_A, phi_A


def _adopt_if_better(inst, bet, rep, A, x_A, phi_A, counters):
    """Re-anchor a mixed-binary incumbent to its cell optimum; keep the
    input state unless that beats it."""
    if counters is not None and rep.status == "time_limit":
        counters.timed_out = True
    if not rep.has_incumbent() or rep.pattern == A:
        return A, x_A, phi_A
    try:
        x_n, phi_n = _cell_state(inst, bet, rep.pattern, warm=rep.x.ravel())
    except CellInfeasibleError:
        return A, x_A, phi_A
    if phi_n > phi_A + _EPS_ACCEPT:
        return rep.pattern, x_n, phi_n
    return A, x_A, phi_A


def miqp_restart(inst: Instance, beta: Beta | float, A: Pattern,
                 opts: QspcOptions, rng: np.random.Generator | None = None,
                 warm: tuple[np.ndarray, float] | None = None,
                 counters: QspcState | None = None
                 ) -> tuple[Pattern, np.ndarray, float]:
    """Free a random pattern block and re-optimize the restricted program.

    ``gamma_s`` rows and ``gamma_w`` contract columns are drawn uniformly
    without replacement; every coefficient outside them is freed with
    probability ``sigma``.  The generator is taken as given so a caller can
    thread one evolving stream through successive restarts.
    """
    bet = Beta.coerce(beta)
    rng = rng if rng is not None else np.random.default_rng(opts.rng_seed)
    S, W = inst.S, inst.W
    if not 0 <= opts.gamma_s <= S:
        raise ValueError(f"gamma_s must lie in [0, {S}], got {opts.gamma_s}")
    if not 0 <= opts.gamma_w <= W:
        raise ValueError(f"gamma_w must lie in [0, {W}], got {opts.gamma_w}")
    free = np.zeros((S, W + 1), dtype=bool)
    rows = rng.choice(S, size=opts.gamma_s, replace=False)
    cols = rng.choice(W, size=opts.gamma_w, replace=False) + 1  # contract columns
    free[rows, :] = True
    free[:, cols] = True
    coin = rng.random((S, W + 1)) < opts.sigma
    free |= coin
    if not free.any():
        return A, *(warm or _cell_state(inst, bet, A))
    fz = A.A.astype(np.int8).copy()
    fz[free] = -1
    if warm is None:
        warm = _cell_state(inst, bet, A)
    x_A, phi_A = warm
    if counters is not None:
        counters.n_restarts += 1
    rep = solve_quad(inst, bet,
                     SolverOptions(gap=opts.restart_gap,
                                   time_limit_s=opts.restart_time_limit_s),
                     fixed_z=fz, warm_incumbent=(x_A, phi_A))
    return _adopt_if_better(inst, bet, rep, A, x_A, phi_A, counters)


def _start_point(inst: Instance, start):
    if start is not None:
        return np.asarray(start, dtype=float).reshape(inst.W, inst.H)
    mid = inst.polytope.midpoint()
    if inst.polytope.contains(mid):
        return mid
    G, h = inst.polytope.rows()
    ok, z = find_feasible_point(G, h)
    if not ok:
        raise ValueError("price polytope admits no feasible point")
    return z.reshape(inst.W, inst.H)


def qspc(inst: Instance, beta: Beta | float, start=None,
         opts: QspcOptions | None = None) -> SolveReport:
    """Pivoting local search with randomized restarts; returns the best
    pattern's cell optimum as a heuristic report (no bound, no gap)."""
    opts = opts or QspcOptions()
    bet = Beta.coerce(beta)
    t0 = time.perf_counter()
    x0 = _start_point(inst, start)
    A0 = pattern_of(inst, x0, bet)
    x_A, phi_A = _cell_state(inst, bet, A0, warm=x0)
    state = QspcState(pattern=A0, x=x_A, phi=phi_A)
    state.record("descent")
    rng = np.random.default_rng(opts.rng_seed)

    def out_of_time():
        return time.perf_counter() - t0 > opts.time_limit_s

    while state.r < opts.r_max and not out_of_time():
        if state.r == 0:
            while not out_of_time():
                state.n_explore += 1
                A_n, x_n, phi_n = explore_good_neighbors(
                    inst, bet, state.pattern, state.x, state.phi,
                    mode=opts.neighbor_mode, opts=opts, counters=state)
                moved = A_n != state.pattern
                state.pattern, state.x, state.phi = A_n, x_n, phi_n
                state.record("descent")
                log.info("descent phi=%.9g pattern=%s t=%.3f", state.phi,
                         state.pattern.hash_hex(), time.perf_counter() - t0)
                if not moved:
                    break
        if out_of_time():
            break
        A_r, x_r, phi_r = miqp_restart(inst, bet, state.pattern, opts, rng=rng,
                                       warm=(state.x, state.phi), counters=state)
        improved = phi_r > state.phi + _REL_IMPROVE * max(1.0, abs(state.phi))
        if improved:
            state.pattern, state.x, state.phi = A_r, x_r, phi_r
            state.r = 0
        else:
            state.r += 1
        state.record("restart")
        log.info("restart phi=%.9g r=%d t=%.3f", state.phi, state.r,
                 time.perf_counter() - t0)

    if out_of_time():
        state.timed_out = True
    resp, _ = quad_response(inst, state.x, bet)
    return SolveReport(
        status="heuristic",
        objective=state.phi,
        bound=None,
        gap=None,
        x=state.x,
        response=resp,
        pattern=state.pattern,
        node_count=0,
        wall_time_s=time.perf_counter() - t0,
        trace=list(state.log),
        extras={"n_explore": state.n_explore, "n_restarts": state.n_restarts,
                "n_infeasible_neighbors": state.n_infeasible_neighbors,
                "timed_out": state.timed_out},
    )
