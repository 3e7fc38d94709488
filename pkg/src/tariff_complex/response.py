"""Customer response models and induced profits.

Three lower-level behaviours for how a segment splits demand across the
options (no purchase, contract 1, ..., contract W) given its disutility
vector V (V[0] = 0):

* quadratic regularization: the split is the Euclidean projection of
  ``-(beta/2) V`` onto the simplex, computed in closed form with its full
  multiplier set;
* logit: softmax of ``-beta V``;
* deterministic: all mass on a single minimum-disutility option, ties
  resolved in the seller's favor (largest margin, then lowest index).

The regularization strength ``beta`` may carry optional per-segment scale
factors, giving segment s an effective strength ``scales[s] * beta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EPS_KKT, EPS_TIE, Instance, ResponseMatrix, profit
from .subqp import project_simplex


@dataclass(frozen=True)
class Beta:
    """Regularization strength, optionally scaled per segment."""

    value: float
    scales: np.ndarray | None = None

    def __post_init__(self):
        if not (self.value > 0):
            raise ValueError("beta must be positive")
        if self.scales is not None:
            sc = np.asarray(self.scales, dtype=float)
            if np.any(sc <= 0):
                raise ValueError("beta scales must be positive")
            sc = np.array(sc, copy=True)
            sc.flags.writeable = False
            object.__setattr__(self, "scales", sc)

    @classmethod
    def coerce(cls, beta: "Beta | float") -> "Beta":
        return beta if isinstance(beta, Beta) else cls(float(beta))

    def per_segment(self, S: int) -> np.ndarray:
        if self.scales is None:
            return np.full(S, self.value)
        if self.scales.shape != (S,):
            raise ValueError(f"beta scales have shape {self.scales.shape}, expected {(S,)}")
        return self.scales * self.value


@dataclass
class QuadResponseDetail:
    """Per-segment solution of the regularized split with its KKT certificate.

    ``ybar``, ``lam`` are option-indexed (length W+1).  ``tau`` is the number
    of options receiving positive mass; ``order`` is the stable ascending
    sort of the disutilities that the threshold rule was applied in.
    """

    ybar: np.ndarray
    tau: int
    mu: float
    lam: np.ndarray
    order: np.ndarray
    beta: float

    def kkt_residual(self, V: np.ndarray) -> float:
        """Max violation of the optimality system at disutilities V."""
        V = np.asarray(V, dtype=float)
        y, lam, mu = self.ybar, self.lam, self.mu
        r_stat = np.abs(V + (2.0 / self.beta) * y - lam - mu).max()
        r_feas = max(abs(y.sum() - 1.0), float(np.maximum(-y, 0.0).max()),
                     float(np.maximum(-lam, 0.0).max()))
        r_comp = float(np.abs(y * lam).max())
        return max(float(r_stat), r_feas, r_comp)


def quad_response_row(V: np.ndarray, beta: float) -> QuadResponseDetail:
    """Closed-form regularized split for one segment.

    Sort V ascending (stable, so ties keep original index order).  With
    prefix thresholds ``c_j = (2/beta + sum of the j smallest V) / j``, the
    support size tau is the first j whose next sorted value reaches c_j;
    if none does, every option stays active.  Kept options get mass
    ``(beta/2)(c_tau - V_w)``; excluded ones get multiplier ``V_w - c_tau``.
    """
    V = np.asarray(V, dtype=float).ravel()
    n = V.size
    order = np.argsort(V, kind="stable")
    Vs = V[order]
    prefix = np.cumsum(Vs)
    tau = n
    c_tau = (2.0 / beta + prefix[-1]) / n
    for j in range(1, n):
        c_j = (2.0 / beta + prefix[j - 1]) / j
        if Vs[j] >= c_j:
            tau = j
            c_tau = c_j
            break
    y_s = np.zeros(n)
    y_s[:tau] = (beta / 2.0) * (c_tau - Vs[:tau])
    y_s = np.maximum(y_s, 0.0)
    y_s /= y_s.sum()
    lam_s = np.zeros(n)
    lam_s[tau:] = Vs[tau:] - c_tau
    y = np.zeros(n)
    lam = np.zeros(n)
    y[order] = y_s
    lam[order] = lam_s
    return QuadResponseDetail(ybar=y, tau=tau, mu=float(c_tau), lam=lam,
                              order=order, beta=float(beta))


def quad_response(inst: Instance, x: np.ndarray,
                  beta: Beta | float) -> tuple[ResponseMatrix, list[QuadResponseDetail]]:
    """Regularized response of every segment at prices x."""
    b = Beta.coerce(beta).per_segment(inst.S)
    V = inst.disutilities(x)
    details = [quad_response_row(V[s], b[s]) for s in range(inst.S)]
    return ResponseMatrix(np.array([d.ybar for d in details])), details


def quad_profit(inst: Instance, x: np.ndarray, beta: Beta | float) -> float:
    resp, _ = quad_response(inst, x, beta)
    return profit(inst, x, resp)


def logit_row(V: np.ndarray, beta: float) -> np.ndarray:
    a = -beta * np.asarray(V, dtype=float)
    a = a - a.max()  # overflow guard, invariant under the normalization
    e = np.exp(a)
    return e / e.sum()


def logit_response(inst: Instance, x: np.ndarray, beta: Beta | float) -> ResponseMatrix:
    b = Beta.coerce(beta).per_segment(inst.S)
    V = inst.disutilities(x)
    return ResponseMatrix(np.array([logit_row(V[s], b[s]) for s in range(inst.S)]))


def logit_profit(inst: Instance, x: np.ndarray, beta: Beta | float) -> float:
    return profit(inst, x, logit_response(inst, x, beta))


def det_response_set(inst: Instance, x: np.ndarray,
                     eps_tie: float = EPS_TIE) -> tuple[list[np.ndarray], ResponseMatrix]:
    """Minimum-disutility option sets and the seller-optimal selection.

    Returns per-segment arrays of tied options (disutility within eps_tie of
    the minimum) plus the one-hot response picking, inside each tie set, the
    option with the largest weighted margin (no purchase counts 0), lowest
    index on exact margin ties.
    """
    V = inst.disutilities(x)
    margins = inst.margins(x)
    sets: list[np.ndarray] = []
    y = np.zeros((inst.S, inst.W + 1))
    for s in range(inst.S):
        ties = np.flatnonzero(V[s] <= V[s].min() + eps_tie)
        sets.append(ties)
        gain = np.where(ties == 0, 0.0, inst.rho[s] * margins[s, ties - 1])
        best = ties[int(np.argmax(gain))]  # argmax keeps the first = lowest index
        y[s, best] = 1.0
    return sets, ResponseMatrix(y)


def det_profit(inst: Instance, x: np.ndarray, eps_tie: float = EPS_TIE) -> float:
    _, resp = det_response_set(inst, x, eps_tie)
    return profit(inst, x, resp)


def qpcc_objective(inst: Instance, x: np.ndarray, beta: Beta | float,
                   details: list[QuadResponseDetail]) -> float:
    """Profit in multiplier form: sum_s rho_s (mu_s + <R_s - C_s, y_s> - (2/beta_s)|ybar_s|^2).

    Must coincide with :func:`quad_profit`; the identity is what lets the
    complementarity formulation drop the bilinear <theta, y> term.  Raises if
    the supplied details do not actually certify (inst, x, beta), which
    catches stale details from a different price vector.
    """
    bet = Beta.coerce(beta).per_segment(inst.S)
    V = inst.disutilities(x)
    total = 0.0
    for s, d in enumerate(details):
        if abs(d.beta - bet[s]) > 1e-12 * max(1.0, bet[s]):
            raise ValueError(f"detail {s} was computed for beta={d.beta}, expected {bet[s]}")
        res = d.kkt_residual(V[s])
        if res > 1e-6:
            raise ValueError(f"stale response detail for segment {s}: KKT residual {res:.3e}")
        y = d.ybar
        total += inst.rho[s] * (
            d.mu
            + float((inst.R[s] - inst.C[s]) @ y[1:])
            - (2.0 / bet[s]) * float(y @ y)
        )
    return float(total)


def penalization_equivalence_check(V: np.ndarray, beta: float, tol: float = 1e-8) -> bool:
    """Check the three equivalent penalizations give one argmin.

    Minimizing ``<V, y> + (1/beta) pen(y)`` over the simplex for
    ``pen = <y - 1, y>``, ``|y - uniform|^2`` and ``|y|^2`` yields the same
    point; each route is solved by completing the square and projecting.
    """
    V = np.asarray(V, dtype=float).ravel()
    n = V.size
    # <y-1, y> = |y|^2 - sum y: the linear part is constant on the simplex
    y1 = project_simplex(-(beta / 2.0) * V + 0.5)
    y2 = project_simplex(np.full(n, 1.0 / n) - (beta / 2.0) * V)
    y3 = project_simplex(-(beta / 2.0) * V)
    return bool(np.abs(y1 - y3).max() <= tol and np.abs(y2 - y3).max() <= tol)
