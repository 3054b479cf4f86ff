import math

import numpy as np
import pytest

from tlshield import gp
from tlshield.cbf import (
    Barrier,
    CbfError,
    QpProblem,
    SafetyFilter,
    discrete_cbf_constraint,
    ecbf_constraint,
    pole_place,
    safe_action,
    solve_qp,
    traverse,
)
from tlshield.envs import make_cartpole, make_pendulum, step_dynamics


def brute_force_objective(p: QpProblem, resolution=400):
    """Grid search over the box with the slack optimized exactly per point."""
    m = p.a_rl.shape[0]
    grids = [np.linspace(p.a_low[j], p.a_high[j], resolution + 1) for j in range(m)]
    mesh = np.meshgrid(*grids, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    best = np.inf
    for t in pts:
        eps = 0.0
        for alpha, beta in p.constraints:
            eps = max(eps, -(float(np.dot(alpha, t)) + beta))
        d = t - p.a_rl
        obj = 0.5 * float(d @ p.h_mat @ d) + p.k_eps * eps
        best = min(best, obj)
    return best


def assemble_rows(p: QpProblem):
    m = p.a_rl.shape[0]
    rows = []
    for alpha, beta in p.constraints:
        rows.append((np.concatenate([alpha, [1.0]]), beta))
    for j in range(m):
        e = np.zeros(m + 1)
        e[j] = 1.0
        rows.append((e, -p.a_low[j]))
        rows.append((-e, p.a_high[j]))
    e = np.zeros(m + 1)
    e[m] = 1.0
    rows.append((e, 0.0))
    return rows


def kkt_residuals(p: QpProblem, sol):
    m = p.a_rl.shape[0]
    z = np.concatenate([p.a_rl + sol.a_pt, [sol.eps]])
    rows = assemble_rows(p)
    grad = np.zeros(m + 1)
    grad[:m] = p.h_mat @ sol.a_pt
    grad[m] = p.k_eps
    stat = grad - sum(
        lam * g for lam, (g, _) in zip(sol.multipliers, rows)
    )
    comp = max(
        abs(lam * (g @ z + h)) / (1.0 + abs(lam))
        for lam, (g, h) in zip(sol.multipliers, rows)
    )
    return float(np.linalg.norm(stat)), comp


# ---------------------------------------------------------------------------
# Pole placement and barrier validation


def test_pole_place_scalar():
    assert np.allclose(pole_place(1, [-2.0]), [2.0])


def test_pole_place_second_order():
    assert np.allclose(pole_place(2, [-2.0, -3.0]), [6.0, 5.0])


def test_pole_place_rejects_nonnegative():
    with pytest.raises(CbfError):
        pole_place(1, [0.0])


def test_barrier_requires_hurwitz():
    with pytest.raises(CbfError):
        Barrier(
            name="bad",
            h=lambda s: 1.0,
            grad_h=lambda s: np.zeros(1),
            relative_degree=1,
            gains=np.array([-1.0]),
        )


# ---------------------------------------------------------------------------
# Traverse variable


def test_traverse_degree_one():
    env = make_pendulum()
    b = env.barriers[0]
    s = np.array([0.5])
    xi = traverse(b, s, env.nominal_drift, np.zeros(1))
    assert xi.shape == (1,)
    assert xi[0] == pytest.approx(b.h(s))


def test_traverse_cartpole_position():
    env = make_cartpole()
    b = next(bb for bb in env.barriers if bb.name == "position")
    s = np.array([0.05, 1.0, 0.2, -0.5])
    xi = traverse(b, s, env.nominal_drift, np.zeros(4))
    # xi = [h, -2 x xdot] for h = 2.4^2 - x^2
    assert xi[0] == pytest.approx(2.4**2 - 1.0)
    assert xi[1] == pytest.approx(-2.0 * 1.0 * (-0.5))


def test_traverse_zero_disturbance_is_nominal():
    env = make_cartpole()
    b = env.barriers[0]
    s = np.array([0.1, 0.3, -0.4, 0.2])
    xi0 = traverse(b, s, env.nominal_drift, np.zeros(4))
    grad = b.grad_h(s)
    assert xi0[1] == pytest.approx(float(grad @ env.nominal_drift(s)))


# ---------------------------------------------------------------------------
# ECBF constraint assembly


def test_zero_width_matches_known_model():
    env = make_pendulum(uncertainty=0.4)
    b = env.barriers[0]
    s = np.array([1.2])
    d_true = env.residual(s)
    alpha, beta = ecbf_constraint(
        b, s, env.nominal_drift, env.gain, (d_true, d_true), env.disturbed_rows
    )
    grad = b.grad_h(s)
    assert alpha[0] == pytest.approx(float(grad @ env.gain(s)[:, 0]))
    expected_beta = float(grad @ (env.nominal_drift(s) + d_true)) + b.gains[0] * b.h(s)
    assert beta == pytest.approx(expected_beta)


def test_worst_case_endpoint_sign():
    # For theta > 0 the h-dynamics coefficient on the disturbance is -2
    # theta < 0, so the upper endpoint is the worst case.
    env = make_pendulum()
    b = env.barriers[0]
    s = np.array([1.0])
    lo, hi = np.array([-0.5]), np.array([0.7])
    _, beta = ecbf_constraint(b, s, env.nominal_drift, env.gain, (lo, hi), (0,))
    _, beta_hi = ecbf_constraint(b, s, env.nominal_drift, env.gain, (hi, hi), (0,))
    assert beta == pytest.approx(beta_hi)


def test_widening_bounds_never_relaxes():
    env = make_cartpole()
    b = env.barriers[0]
    s = np.array([0.1, 0.5, 0.3, -0.2])
    widths = [0.0, 0.2, 0.5, 1.0]
    betas = []
    for w in widths:
        lo = -w * np.ones(4)
        hi = w * np.ones(4)
        _, beta = ecbf_constraint(b, s, env.nominal_drift, env.gain, (lo, hi), (2, 3))
        betas.append(beta)
    assert all(b2 <= b1 + 1e-12 for b1, b2 in zip(betas, betas[1:]))


def test_degree_two_requires_kinematic_coords():
    env = make_cartpole()
    b = env.barriers[0]
    s = np.zeros(4)
    with pytest.raises(CbfError):
        ecbf_constraint(
            b, s, env.nominal_drift, env.gain, (np.zeros(4), np.ones(4)), (0, 2, 3)
        )


# ---------------------------------------------------------------------------
# QP


def _qp(h=None, k_eps=1e6, a_rl=None, box=(-2.0, 2.0), cons=()):
    m = 1 if a_rl is None else len(a_rl)
    a_rl = np.zeros(m) if a_rl is None else np.asarray(a_rl, dtype=float)
    return QpProblem(
        h_mat=np.eye(m) if h is None else np.asarray(h, dtype=float),
        k_eps=k_eps,
        a_rl=a_rl,
        a_low=np.full(m, box[0]),
        a_high=np.full(m, box[1]),
        constraints=[(np.asarray(al, dtype=float), float(be)) for al, be in cons],
    )


def test_qp_slack_constraint_no_perturbation():
    p = _qp(a_rl=[0.7], cons=[([1.0], 5.0)])
    sol = solve_qp(p)
    assert np.allclose(sol.a_pt, 0.0, atol=1e-10)
    assert sol.eps == pytest.approx(0.0, abs=1e-10)


def test_qp_moves_instead_of_paying_slack():
    p = _qp(cons=[([1.0], -1.0)])
    sol = solve_qp(p)
    assert sol.a_pt[0] == pytest.approx(1.0, abs=1e-9)
    assert sol.eps == pytest.approx(0.0, abs=1e-9)


def test_qp_uses_slack_at_box_edge():
    p = _qp(cons=[([1.0], -5.0)])
    sol = solve_qp(p)
    assert sol.a_pt[0] == pytest.approx(2.0, abs=1e-9)
    assert sol.eps == pytest.approx(3.0, abs=1e-9)


def test_qp_random_instances_match_brute_force():
    rng = np.random.default_rng(12)
    for _ in range(40):
        m = int(rng.integers(1, 3))
        n_c = int(rng.integers(1, 4))
        a_rl = rng.uniform(-1.5, 1.5, m)
        diag = rng.uniform(0.5, 2.0, m)
        cons = [
            (rng.uniform(-2, 2, m), float(rng.uniform(-3, 3))) for _ in range(n_c)
        ]
        p = QpProblem(
            h_mat=np.diag(diag),
            k_eps=float(rng.choice([10.0, 1e3, 1e6])),
            a_rl=a_rl,
            a_low=np.full(m, -2.0),
            a_high=np.full(m, 2.0),
            constraints=cons,
        )
        sol = solve_qp(p)
        rows = assemble_rows(p)
        z = np.concatenate([p.a_rl + sol.a_pt, [sol.eps]])
        assert all(g @ z + h >= -1e-8 for g, h in rows)
        grid = brute_force_objective(p, resolution=200 if m == 2 else 4000)
        assert sol.objective <= grid + 1e-3
        stat, comp = kkt_residuals(p, sol)
        assert stat < 1e-6 and comp < 1e-6


def test_qp_empty_box_rejected():
    p = _qp()
    p.a_low = np.array([3.0])
    with pytest.raises(CbfError):
        solve_qp(p)


# ---------------------------------------------------------------------------
# Safety filter end to end


def test_interior_state_passthrough():
    env = make_pendulum()
    flt = SafetyFilter(
        barriers=env.barriers,
        drift=env.nominal_drift,
        gain=env.gain,
        a_low=env.a_low,
        a_high=env.a_high,
        prior_sigma=0.5,
        disturbed_rows=env.disturbed_rows,
    )
    a_safe, a_pt, eps = safe_action(flt, np.array([0.0]), np.array([1.0]))
    assert np.allclose(a_safe, [1.0])
    assert np.allclose(a_pt, 0.0, atol=1e-9)
    assert eps == pytest.approx(0.0, abs=1e-9)


def test_boundary_perturbation_opposes_outward_push():
    env = make_pendulum(uncertainty=0.4)
    flt = SafetyFilter(
        barriers=env.barriers,
        drift=env.nominal_drift,
        gain=env.gain,
        a_low=env.a_low,
        a_high=env.a_high,
        prior_sigma=3.0,
        disturbed_rows=env.disturbed_rows,
    )
    s = np.array([1.5])
    a_rl = np.array([10.0])  # pushing outward
    a_safe, a_pt, _ = safe_action(flt, s, a_rl)
    assert a_pt[0] < 0  # opposes the push
    h_now = env.barriers[0].h(s)
    s_next = step_dynamics(env, s, a_safe)
    assert env.barriers[0].h(s_next) >= min(h_now, 0.0) - 1e-3


def test_two_barriers_satisfied_simultaneously():
    env = make_cartpole()
    flt = SafetyFilter(
        barriers=env.barriers,
        drift=env.nominal_drift,
        gain=env.gain,
        a_low=env.a_low,
        a_high=env.a_high,
        prior_sigma=0.3,
        disturbed_rows=env.disturbed_rows,
    )
    s = np.array([0.15, 2.0, 0.4, 0.8])  # both barriers under pressure
    a_safe, a_pt, eps = safe_action(flt, s, np.array([5.0]))
    bounds = flt.bounds_at(s)
    for b in env.barriers:
        alpha, beta = ecbf_constraint(
            b, s, env.nominal_drift, env.gain, bounds, env.disturbed_rows
        )
        assert float(alpha @ a_safe) + beta + eps >= -1e-8


def test_forward_invariance_with_gp_under_random_actions():
    # Random proposed actions on the 40%-mismatch pendulum; the filter keeps
    # the angle barrier nonnegative while the GP learns from the run.
    env = make_pendulum(uncertainty=0.4)
    hyper = gp.GpHyper(sigma_f=5.0, lengthscale=0.7, sigma_noise=0.3)
    flt = SafetyFilter(
        barriers=env.barriers,
        drift=env.nominal_drift,
        gain=env.gain,
        a_low=env.a_low,
        a_high=env.a_high,
        prior_sigma=hyper.sigma_f,
        disturbed_rows=env.disturbed_rows,
        margin=0.15,
        one_step_guard=True,
        guard_dt=env.dt,
        residual_lipschitz=4.5,
    )
    rng = np.random.default_rng(7)
    buffer = []
    h_min = np.inf
    for episode in range(50):
        s = env.init_sampler(rng)
        for _ in range(200):
            a_rl = rng.uniform(env.a_low, env.a_high)
            a_safe, _, _ = safe_action(flt, s, a_rl)
            s_next = step_dynamics(env, s, a_safe)
            buffer.append(gp.residual_from_transition(env, s, a_safe, s_next, env.dt, episode))
            h_min = min(h_min, float(env.barriers[0].h(s_next)))
            s = s_next
        flt.gp_model = gp.fit(gp.subsample(buffer, 150, rng), hyper)
    assert h_min >= -1e-3


# ---------------------------------------------------------------------------
# Discrete-time variant


def test_discrete_constraint_limits():
    env = make_pendulum()
    b = env.barriers[0]
    s = np.array([0.8])
    dhat = np.zeros(1)
    alpha, beta = discrete_cbf_constraint(b, s, env.nominal_drift, env.gain, dhat, 1.0, env.dt)
    s_free = s + env.dt * env.nominal_drift(s)
    assert beta == pytest.approx(b.h(s_free))
    _, beta0 = discrete_cbf_constraint(b, s, env.nominal_drift, env.gain, dhat, 1e-9, env.dt)
    assert beta0 == pytest.approx(b.h(s_free) - b.h(s), abs=1e-6)
    with pytest.raises(CbfError):
        discrete_cbf_constraint(b, s, env.nominal_drift, env.gain, dhat, 1.5, env.dt)


def test_discrete_constraint_enforces_decay_bound():
    # Following the discrete rule keeps h above (1 - eta) h_t - slack along a
    # simulated run with the true residual in the estimate; dt small enough
    # that the first-order expansion of the one-step map is accurate.
    env = make_pendulum(uncertainty=0.0, dt=0.01)
    b = env.barriers[0]
    eta = 0.4
    rng = np.random.default_rng(3)
    s = np.array([0.9])
    for _ in range(200):
        dhat = env.residual(s)
        alpha, beta = discrete_cbf_constraint(b, s, env.nominal_drift, env.gain, dhat, eta, env.dt)
        p = QpProblem(
            h_mat=np.eye(1),
            k_eps=1e6,
            a_rl=rng.uniform(env.a_low, env.a_high),
            a_low=env.a_low,
            a_high=env.a_high,
            constraints=[(alpha, beta)],
        )
        sol = solve_qp(p)
        a_safe = np.clip(p.a_rl + sol.a_pt, env.a_low, env.a_high)
        h_before = b.h(s)
        s = step_dynamics(env, s, a_safe)
        assert b.h(s) >= (1 - eta) * h_before - sol.eps / eta - 4e-2


def test_discrete_requires_degree_one():
    env = make_cartpole()
    with pytest.raises(CbfError):
        discrete_cbf_constraint(
            env.barriers[0], np.zeros(4), env.nominal_drift, env.gain, np.zeros(4), 0.5, env.dt
        )


def test_per_barrier_slacks():
    # Two contradictory rows.  One shared slack covers the max shortfall
    # (eps = 5 at t = 0); separate slacks each cover their own row, so the
    # objective doubles but each row is satisfied by its own variable.
    cons = [(np.array([1.0]), -5.0), (np.array([-1.0]), -5.0)]
    shared = _qp(cons=cons)
    sol_shared = solve_qp(shared)
    assert sol_shared.eps == pytest.approx(5.0, abs=1e-6)
    split = _qp(cons=cons)
    split.slack_of = [0, 1]
    sol_split = solve_qp(split)
    assert sol_split.a_pt[0] == pytest.approx(0.0, abs=1e-6)
    assert sol_split.eps == pytest.approx(5.0, abs=1e-6)  # max of the two slacks
    assert sol_split.objective == pytest.approx(2 * sol_shared.objective, rel=1e-6)


def test_filter_per_barrier_slack_mode():
    env = make_cartpole()
    flt = SafetyFilter(
        barriers=env.barriers,
        drift=env.nominal_drift,
        gain=env.gain,
        a_low=env.a_low,
        a_high=env.a_high,
        prior_sigma=0.3,
        disturbed_rows=env.disturbed_rows,
        shared_slack=False,
    )
    a_safe, a_pt, eps = safe_action(flt, np.zeros(4), np.array([1.0]))
    assert np.allclose(a_safe, [1.0])
    assert eps == pytest.approx(0.0, abs=1e-9)
