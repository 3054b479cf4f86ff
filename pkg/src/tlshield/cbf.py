"""Exponential control-barrier-function machinery and the safety QP.

Supports relative degrees 1 and 2.  The GP-robust constraint is assembled
by evaluating the barrier's Lie derivatives with the disturbance estimate
set to each worst-case endpoint of the per-dimension confidence box; the
constraint is affine in the disturbance (validated structurally for degree
2), so endpoint evaluation is exact.

The quadratic program returns the minimal perturbation of a proposed
action: it minimizes ``1/2 a_pt' H a_pt + K_eps * eps`` subject to the
barrier rows evaluated at the total action, the action box, and
``eps >= 0``.  Solved exactly by active-set enumeration with KKT solves;
problem sizes here are tiny (m <= 4, a handful of constraints).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import gp as gpmod


class CbfError(ValueError):
    pass


def pole_place(r_b: int, poles: Sequence[float]) -> np.ndarray:
    """Gain row K placing the companion closed-loop eigenvalues at ``poles``."""
    poles = list(poles)
    if len(poles) != r_b:
        raise CbfError(f"need {r_b} poles, got {len(poles)}")
    if any(p >= 0 for p in poles):
        raise CbfError("poles must be strictly negative")
    coeffs = np.poly(poles)  # [1, c_{r-1}, ..., c_0]
    return np.asarray(coeffs[1:][::-1], dtype=float)


def _companion_closed_loop(gains: np.ndarray) -> np.ndarray:
    r = gains.shape[0]
    a = np.zeros((r, r))
    for i in range(r - 1):
        a[i, i + 1] = 1.0
    a[-1, :] -= gains
    return a


@dataclass
class Barrier:
    """Barrier h(s) >= 0 with callbacks for Lie derivatives up to its degree.

    ``coords`` lists the state indices h depends on; for relative degree 2
    the disturbance must vanish on those rows (pure kinematic chain), which
    keeps the robust constraint affine in the disturbance estimate.
    """

    name: str
    h: Callable[[np.ndarray], float]
    grad_h: Callable[[np.ndarray], np.ndarray]
    relative_degree: int
    gains: np.ndarray
    hess_h: Optional[Callable[[np.ndarray], np.ndarray]] = None
    coords: Tuple[int, ...] = ()
    eta: float = 1.0

    def __post_init__(self):
        if self.relative_degree not in (1, 2):
            raise CbfError("relative degree must be 1 or 2")
        self.gains = np.asarray(self.gains, dtype=float).reshape(-1)
        if self.gains.shape[0] != self.relative_degree:
            raise CbfError("gain row length must equal the relative degree")
        if self.relative_degree == 2 and self.hess_h is None:
            raise CbfError("relative degree 2 requires hess_h")
        if not 0.0 < self.eta <= 1.0:
            raise CbfError("eta must lie in (0, 1]")
        eigs = np.linalg.eigvals(_companion_closed_loop(self.gains))
        if np.any(eigs.real >= 0):
            raise CbfError(f"barrier {self.name!r}: closed-loop matrix not Hurwitz")

    def with_gains(self, gains: Sequence[float]) -> "Barrier":
        return replace(self, gains=np.asarray(gains, dtype=float))


def _drift_jacobian(drift: Callable, s: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    n = s.shape[0]
    jac = np.empty((n, n))
    for k in range(n):
        dp = s.copy()
        dm = s.copy()
        dp[k] += eps
        dm[k] -= eps
        jac[:, k] = (np.asarray(drift(dp)) - np.asarray(drift(dm))) / (2 * eps)
    return jac


def traverse(b: Barrier, s: np.ndarray, drift: Callable, dhat: np.ndarray) -> np.ndarray:
    """Stacked Lie derivatives [h, L_{f+dhat} h, ...] up to order r_b - 1."""
    s = np.asarray(s, dtype=float)
    if b.relative_degree == 1:
        return np.array([b.h(s)])
    fhat = np.asarray(drift(s), dtype=float) + np.asarray(dhat, dtype=float)
    return np.array([b.h(s), float(np.dot(b.grad_h(s), fhat))])


def _constraint_at(
    b: Barrier,
    s: np.ndarray,
    drift: Callable,
    gain: Callable,
    dhat: np.ndarray,
    jac: Optional[np.ndarray],
) -> Tuple[np.ndarray, float]:
    """(alpha, beta) of  alpha . a_total + beta >= 0  for a fixed disturbance."""
    grad = np.asarray(b.grad_h(s), dtype=float)
    g = np.atleast_2d(np.asarray(gain(s), dtype=float))
    if g.shape[0] != s.shape[0]:
        g = g.reshape(s.shape[0], -1)
    fhat = np.asarray(drift(s), dtype=float) + dhat
    if b.relative_degree == 1:
        alpha = grad @ g
        beta = float(grad @ fhat) + b.gains[0] * b.h(s)
        return alpha, beta
    hess = np.asarray(b.hess_h(s), dtype=float)
    glie = hess @ fhat + jac.T @ grad  # gradient of L_f h
    alpha = glie @ g
    lf2 = float(glie @ fhat)
    xi = np.array([b.h(s), float(grad @ fhat)])
    beta = lf2 + float(b.gains @ xi)
    return alpha, beta


def ecbf_constraint(
    b: Barrier,
    s: np.ndarray,
    drift: Callable,
    gain: Callable,
    gp_bounds: Tuple[np.ndarray, np.ndarray],
    disturbed_rows: Optional[Sequence[int]] = None,
) -> Tuple[np.ndarray, float]:
    """Robust ECBF row: worst case of the constraint over the disturbance box.

    ``gp_bounds`` is the per-dimension (lower, upper) confidence box for the
    disturbance; rows outside ``disturbed_rows`` are clamped to zero (the
    model declares the disturbance lives on those rows only).  The slope of
    beta in each disturbance dimension is measured by a unit perturbation,
    which is exact because the constraint is affine in the disturbance.
    """
    s = np.asarray(s, dtype=float)
    n = s.shape[0]
    lower = np.asarray(gp_bounds[0], dtype=float).copy()
    upper = np.asarray(gp_bounds[1], dtype=float).copy()
    if lower.shape != (n,) or upper.shape != (n,):
        raise CbfError("gp_bounds must be per-state-dimension vectors")
    if disturbed_rows is not None:
        mask = np.zeros(n, dtype=bool)
        mask[list(disturbed_rows)] = True
        lower[~mask] = 0.0
        upper[~mask] = 0.0
        if b.relative_degree == 2 and set(b.coords) & set(disturbed_rows):
            raise CbfError(
                f"barrier {b.name!r}: relative degree 2 requires the disturbance "
                f"to vanish on coords {b.coords}"
            )
    center = (lower + upper) / 2.0
    halfw = (upper - lower) / 2.0
    jac = _drift_jacobian(drift, s) if b.relative_degree == 2 else None
    alpha, beta0 = _constraint_at(b, s, drift, gain, center, jac)
    beta = beta0
    for k in np.nonzero(halfw > 0)[0]:
        bump = np.zeros(n)
        bump[k] = 1.0
        _, beta_k = _constraint_at(b, s, drift, gain, center + bump, jac)
        beta -= abs(beta_k - beta0) * halfw[k]
    return alpha, float(beta)


def discrete_cbf_constraint(
    b: Barrier,
    s: np.ndarray,
    drift: Callable,
    gain: Callable,
    dhat: np.ndarray,
    eta: float,
    dt: float,
) -> Tuple[np.ndarray, float]:
    """Linearized one-step decay condition h(F(s,a)) >= (1 - eta) h(s).

    Uses the nominal Euler one-step map expanded to first order in the
    action.  Relative degree 1 only.
    """
    if b.relative_degree != 1:
        raise CbfError("discrete constraint supports relative degree 1 only")
    if not 0.0 < eta <= 1.0:
        raise CbfError("eta must lie in (0, 1]")
    s = np.asarray(s, dtype=float)
    g = np.atleast_2d(np.asarray(gain(s), dtype=float))
    if g.shape[0] != s.shape[0]:
        g = g.reshape(s.shape[0], -1)
    s_free = s + dt * (np.asarray(drift(s), dtype=float) + np.asarray(dhat, dtype=float))
    alpha = dt * (np.asarray(b.grad_h(s_free), dtype=float) @ g)
    beta = b.h(s_free) - (1.0 - eta) * b.h(s)
    return alpha, float(beta)


# ---------------------------------------------------------------------------
# Quadratic program


@dataclass
class QpProblem:
    h_mat: np.ndarray  # positive definite (m, m)
    k_eps: float
    a_rl: np.ndarray
    a_low: np.ndarray
    a_high: np.ndarray
    constraints: List[Tuple[np.ndarray, float]]  # alpha . a_total + beta + eps >= 0
    slack_of: Optional[List[int]] = None  # per-row slack index; default one shared slack

    @property
    def n_slacks(self) -> int:
        if self.slack_of is None:
            return 1
        return max(self.slack_of, default=-1) + 1 if self.slack_of else 1


@dataclass
class QpSolution:
    a_pt: np.ndarray
    eps: float
    objective: float
    active: Tuple[int, ...]  # row indices into the assembled constraint list
    multipliers: Optional[np.ndarray] = None  # per assembled row, zero if inactive

    @property
    def perturbed(self) -> bool:
        return bool(np.linalg.norm(self.a_pt) > 1e-6)


def solve_qp(p: QpProblem, tol: float = 1e-9) -> QpSolution:
    """Exact minimizer by enumerating active sets with KKT solves.

    Variables are z = (t, eps...) with t the total action; the objective is
    1/2 (t - a_rl)' H (t - a_rl) + K_eps * sum(eps).  Every subset of at
    most len(z) constraint rows is tried as an equality system; candidates
    must be primal feasible and dual feasible.  Ties break toward smaller
    ||a_pt||.  By default all rows share one slack; ``slack_of`` assigns
    rows to separate slack variables.
    """
    m = p.a_rl.shape[0]
    h_mat = np.asarray(p.h_mat, dtype=float)
    if h_mat.shape != (m, m):
        raise CbfError("H must be (m, m)")
    np.linalg.cholesky(h_mat)  # PD check
    if np.any(p.a_low > p.a_high):
        raise CbfError("empty action box")
    slack_of = p.slack_of if p.slack_of is not None else [0] * len(p.constraints)
    if len(slack_of) != len(p.constraints):
        raise CbfError("slack_of must assign every constraint row")
    n_eps = p.n_slacks

    nz = m + n_eps
    big_q = np.zeros((nz, nz))
    big_q[:m, :m] = h_mat
    lin = np.zeros(nz)
    lin[:m] = -h_mat @ p.a_rl
    lin[m:] = p.k_eps

    rows: List[Tuple[np.ndarray, float]] = []
    for (alpha, beta), k in zip(p.constraints, slack_of):
        g = np.zeros(nz)
        g[:m] = np.asarray(alpha, dtype=float)
        g[m + k] = 1.0
        rows.append((g, float(beta)))
    for j in range(m):
        g = np.zeros(nz)
        g[j] = 1.0
        rows.append((g, -float(p.a_low[j])))
        g2 = np.zeros(nz)
        g2[j] = -1.0
        rows.append((g2, float(p.a_high[j])))
    for k in range(n_eps):
        g_eps = np.zeros(nz)
        g_eps[m + k] = 1.0
        rows.append((g_eps, 0.0))

    def objective(z: np.ndarray) -> float:
        d = z[:m] - p.a_rl
        return 0.5 * float(d @ h_mat @ d) + p.k_eps * float(np.sum(z[m:]))

    best = None
    n_rows = len(rows)
    for size in range(0, nz + 1):
        for subset in itertools.combinations(range(n_rows), size):
            g_act = np.array([rows[i][0] for i in subset]).reshape(size, nz)
            h_act = np.array([rows[i][1] for i in subset])
            kkt = np.zeros((nz + size, nz + size))
            kkt[:nz, :nz] = big_q
            kkt[:nz, nz:] = -g_act.T
            kkt[nz:, :nz] = g_act
            rhs = np.concatenate([-lin, -h_act])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            z, lam = sol[:nz], sol[nz:]
            if np.any(lam < -tol):
                continue
            if any(g @ z + h < -1e-8 for g, h in rows):
                continue
            cand = (objective(z), float(np.linalg.norm(z[:m] - p.a_rl)), z, subset, lam)
            if best is None or cand[0] < best[0] - 1e-12 or (
                abs(cand[0] - best[0]) <= 1e-12 and cand[1] < best[1] - 1e-12
            ):
                best = cand
    if best is None:
        raise CbfError("no KKT point found (should be impossible: eps relaxes all rows)")
    _, _, z, subset, lam = best
    lambdas = np.zeros(n_rows)
    lambdas[list(subset)] = lam
    return QpSolution(
        a_pt=z[:m] - p.a_rl,
        eps=max(0.0, float(np.max(z[m:]))),
        objective=best[0],
        active=subset,
        multipliers=lambdas,
    )


# ---------------------------------------------------------------------------
# Safety filter


@dataclass
class SafetyFilter:
    """Assembles GP-robust ECBF rows for every barrier and solves the QP."""

    barriers: List[Barrier]
    drift: Callable
    gain: Callable
    a_low: np.ndarray
    a_high: np.ndarray
    k_delta: float = 2.0
    k_eps: float = 1e6
    h_mat: Optional[np.ndarray] = None
    gp_model: Optional[gpmod.GpModel] = None
    disturbed_rows: Optional[Tuple[int, ...]] = None
    prior_sigma: float = 1.0
    margin: float = 0.0  # tightens each constraint to the sublevel set h >= margin
    one_step_guard: bool = False  # zero-order-hold reach guard (scalar systems)
    guard_dt: float = 0.0
    residual_lipschitz: float = 0.0  # assumed |d'| bound used by the guard lanes
    shared_slack: bool = True  # one slack for all rows, or one per barrier
    state_dim: int = 0

    def bounds_at(self, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n = len(np.asarray(s, dtype=float))
        if self.gp_model is not None:
            return gpmod.confidence_bounds(self.gp_model, s, self.k_delta)
        width = self.k_delta * self.prior_sigma
        return -width * np.ones(n), width * np.ones(n)

    def _lane_extreme(self, s0: float, u: float, center: float, width: float, sign: float, dt: float) -> float:
        """Largest |theta| along one comparison lane of the scalar flow.

        The lane integrates the drift plus ``center + sign * (width + L |x -
        s0|)``, which over- or under-estimates every disturbance within the
        box at s0 whose slope is bounded by ``residual_lipschitz``; by the
        scalar comparison lemma the true trajectory stays between the lanes.
        """
        lip = self.residual_lipschitz

        def field(x: float) -> float:
            g = float(np.atleast_2d(np.asarray(self.gain(np.array([x])), dtype=float))[0, 0])
            f = float(np.asarray(self.drift(np.array([x])), dtype=float)[0])
            return f + center + sign * (width + lip * abs(x - s0)) + g * u

        x = s0
        extreme = abs(x)
        n_sub = 3  # substeps keep RK4 honest across the |x - s0| kink
        sub = dt / n_sub
        for _ in range(n_sub):
            k1 = field(x)
            k2 = field(x + 0.5 * sub * k1)
            k3 = field(x + 0.5 * sub * k2)
            k4 = field(x + sub * k3)
            x = x + sub / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            extreme = max(extreme, abs(x))
        return extreme

    def _flight_ok(self, s, bounds, u: float) -> bool:
        lo_b, hi_b = bounds
        center = float((lo_b[0] + hi_b[0]) / 2.0)
        width = float((hi_b[0] - lo_b[0]) / 2.0)
        s0 = float(s[0])
        dt = self.guard_dt
        worst = max(
            self._lane_extreme(s0, u, center, width, +1.0, dt),
            self._lane_extreme(s0, u, center, width, -1.0, dt),
        )
        for b in self.barriers:
            if b.relative_degree != 1:
                continue
            thresh = b.eta * self.margin + (1.0 - b.eta) * b.h(s)
            if b.h(np.array([worst])) < thresh:
                return False
        return True

    def _guard_rows(self, s, bounds) -> List[Tuple[np.ndarray, float]]:
        """Soft one-step reach rows for degree-1 barriers under sampled control.

        A single zero-order-hold step of a fast scalar plant can traverse a
        large part of the safe set regardless of the instantaneous ECBF row,
        so additionally require the whole one-step flight to stay inside the
        margined set under the worst disturbance lane.  The admissible action
        interval is found by bisection and added as slack-relaxed rows; if no
        action is admissible the best achievable one is pinned instead.
        """
        dt = self.guard_dt
        if dt <= 0 or len(s) != 1:
            return []
        lo_b, hi_b = bounds
        center = float((lo_b[0] + hi_b[0]) / 2.0)
        width = float((hi_b[0] - lo_b[0]) / 2.0)
        s0 = float(s[0])
        rows: List[Tuple[np.ndarray, float, int]] = []
        u_min, u_max = float(self.a_low[0]), float(self.a_high[0])
        for pos, b in enumerate(self.barriers):
            if b.relative_degree != 1:
                continue
            thresh = b.eta * self.margin + (1.0 - b.eta) * b.h(s)

            def flight_h(u: float) -> float:
                worst = max(
                    self._lane_extreme(s0, u, center, width, +1.0, dt),
                    self._lane_extreme(s0, u, center, width, -1.0, dt),
                )
                return b.h(np.array([worst]))

            def ok(u: float) -> bool:
                return flight_h(u) >= thresh

            grid = np.linspace(u_min, u_max, 9)
            feas = [u for u in grid if ok(u)]
            if not feas:
                best = max(grid, key=flight_h)
                rows.append((np.array([1.0]), -float(best), pos))
                rows.append((np.array([-1.0]), float(best), pos))
                continue
            lo_u, hi_u = min(feas), max(feas)
            step = grid[1] - grid[0]
            if lo_u > u_min:
                a, bnd = lo_u - step, lo_u
                for _ in range(20):
                    mid = 0.5 * (a + bnd)
                    if ok(mid):
                        bnd = mid
                    else:
                        a = mid
                rows.append((np.array([1.0]), -bnd, pos))  # u >= bnd (+ eps)
            if hi_u < u_max:
                a, bnd = hi_u, hi_u + step
                for _ in range(20):
                    mid = 0.5 * (a + bnd)
                    if ok(mid):
                        a = mid
                    else:
                        bnd = mid
                rows.append((np.array([-1.0]), a, pos))  # u <= a (+ eps)
        return rows

    def filter(self, s: np.ndarray, a_rl: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        """Return (a_safe, a_pt, eps) with a_safe = a_rl + a_pt inside the box."""
        s = np.asarray(s, dtype=float)
        a_rl = np.asarray(a_rl, dtype=float)
        bounds = self.bounds_at(s)
        constraints = []
        slacks = []
        for i, b in enumerate(self.barriers):
            alpha, beta = ecbf_constraint(
                b, s, self.drift, self.gain, bounds, self.disturbed_rows
            )
            # Constraining h - margin instead of h shifts only the position
            # gain term; absorbs sampled-data and model-estimate slack.
            constraints.append((alpha, beta - b.gains[0] * self.margin))
            slacks.append(0 if self.shared_slack else i)
        m = a_rl.shape[0]

        def solve(rows, slack_of):
            problem = QpProblem(
                h_mat=self.h_mat if self.h_mat is not None else np.eye(m),
                k_eps=self.k_eps,
                a_rl=a_rl,
                a_low=np.asarray(self.a_low, dtype=float),
                a_high=np.asarray(self.a_high, dtype=float),
                constraints=rows,
                slack_of=slack_of,
            )
            return solve_qp(problem)

        sol = solve(constraints, slacks)
        if self.one_step_guard and m == 1 and len(s) == 1:
            # Lazily enforce the zero-order-hold reach guard: most actions
            # pass the flight check outright, so only re-solve on failure.
            a_try = float(np.clip(a_rl + sol.a_pt, self.a_low, self.a_high)[0])
            if not self._flight_ok(s, bounds, a_try):
                guard = self._guard_rows(s, bounds)
                rows = constraints + [(alpha, beta) for alpha, beta, _ in guard]
                slack_of = slacks + [
                    0 if self.shared_slack else pos for _, _, pos in guard
                ]
                sol = solve(rows, slack_of)
        a_safe = np.clip(a_rl + sol.a_pt, self.a_low, self.a_high)
        return a_safe, sol.a_pt, sol.eps


def safe_action(
    flt: SafetyFilter, s: np.ndarray, a_rl: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, float]:
    return flt.filter(s, a_rl)
