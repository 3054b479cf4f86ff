"""Continuous-time plants with nominal/true parameter splits and labels.

Each environment is an :class:`EnvSpec` holding the *nominal* drift (built
from perturbed physical parameters), the known control gain, and the exact
residual ``d(s) = true_drift(s) - nominal_drift(s)``, so the simulated true
vector field is ``nominal_drift + gain a + residual`` exactly.  Parameter
uncertainty therefore shows up as the state-only disturbance the GP learns;
the control gain stays known (perturbing it would make the pendulum's
safety task infeasible at the torque limits).  The car is the exception:
its stated parameter errors live in the gain, so the nominal gain differs
from the simulated one.

All environments expose labeling regions plus an implicit ``unsafe``
proposition that holds wherever any barrier is negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .cbf import Barrier, pole_place


class EnvError(RuntimeError):
    pass


@dataclass(frozen=True)
class Region:
    name: str
    contains: Callable[[np.ndarray], bool]


@dataclass
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    a_low: np.ndarray
    a_high: np.ndarray
    dt: float
    nominal_drift: Callable[[np.ndarray], np.ndarray]
    gain: Callable[[np.ndarray], np.ndarray]
    residual: Callable[[np.ndarray], np.ndarray]
    regions: List[Region]
    barriers: List[Barrier]
    init_sampler: Callable[[np.random.Generator], np.ndarray]
    state_scale: np.ndarray
    disturbed_rows: Tuple[int, ...]
    noise_std: float = 0.0
    true_gain: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # enforcement-oriented barrier list describing the same safe set; the
    # safety filter uses it when present (labels always use `barriers`)
    filter_barriers: Optional[List[Barrier]] = None

    def enforcement_barriers(self) -> List[Barrier]:
        return self.filter_barriers if self.filter_barriers is not None else self.barriers

    @property
    def aps(self) -> Tuple[str, ...]:
        return tuple(r.name for r in self.regions) + ("unsafe",)

    def sim_gain(self, s: np.ndarray) -> np.ndarray:
        g = self.true_gain(s) if self.true_gain is not None else self.gain(s)
        return np.atleast_2d(np.asarray(g, dtype=float)).reshape(self.state_dim, self.action_dim)

    def true_field(self, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        return (
            np.asarray(self.nominal_drift(s), dtype=float)
            + self.sim_gain(s) @ a
            + np.asarray(self.residual(s), dtype=float)
        )


def clamp_action(spec: EnvSpec, a: np.ndarray) -> Tuple[np.ndarray, bool]:
    a = np.asarray(a, dtype=float).reshape(spec.action_dim)
    clamped = np.clip(a, spec.a_low, spec.a_high)
    return clamped, bool(np.any(clamped != a))


def step_dynamics(
    spec: EnvSpec,
    s: np.ndarray,
    a: np.ndarray,
    dt: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Fourth-order Runge-Kutta step of the true dynamics.

    Process noise, when configured, is drawn once per step from ``rng`` and
    held constant over the step on the disturbed rows.
    """
    dt = spec.dt if dt is None else dt
    s = np.asarray(s, dtype=float).reshape(spec.state_dim)
    a, _ = clamp_action(spec, a)
    w = np.zeros(spec.state_dim)
    if spec.noise_std > 0 and rng is not None:
        w[list(spec.disturbed_rows)] = rng.normal(0.0, spec.noise_std, len(spec.disturbed_rows))

    def field(state: np.ndarray) -> np.ndarray:
        return spec.true_field(state, a) + w

    k1 = field(s)
    k2 = field(s + 0.5 * dt * k1)
    k3 = field(s + 0.5 * dt * k2)
    k4 = field(s + dt * k3)
    s_next = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(s_next)):
        raise EnvError(f"{spec.name}: dynamics diverged (non-finite state)")
    return s_next


def barrier_values(spec: EnvSpec, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.array([b.h(s) for b in spec.barriers])


def label(spec: EnvSpec, s: np.ndarray) -> frozenset:
    """Names of regions containing s, plus 'unsafe' iff any barrier is negative."""
    s = np.asarray(s, dtype=float)
    names = {r.name for r in spec.regions if r.contains(s)}
    if len(spec.barriers) and float(np.min(barrier_values(spec, s))) < 0.0:
        names.add("unsafe")
    return frozenset(names)


def _interval_region(name: str, dim: int, lo: float, hi: float) -> Region:
    return Region(name, lambda s, d=dim, a=lo, b=hi: a <= float(s[d]) <= b)


def _disk_region(name: str, center: Sequence[float], radius: float) -> Region:
    c = np.asarray(center, dtype=float)
    return Region(name, lambda s, c=c, r=radius: float(np.hypot(s[0] - c[0], s[1] - c[1])) <= r)


# ---------------------------------------------------------------------------
# Inverted pendulum


def make_pendulum(
    uncertainty: float = 0.4,
    dt: float = 0.05,
    second_order: bool = False,
    region_halfwidth: float = math.pi / 12,
    torque_limit: float = 15.0,
    poles: Optional[Sequence[float]] = None,
    noise_std: float = 0.0,
    init_range: float = 0.3,
) -> EnvSpec:
    """Torque-limited pendulum with the angle rate law stated first-order.

    The default model treats the angle as the full state with
    ``theta_dot = (3g/2l) sin(theta) + 3/(2 m l^2) u`` (relative degree 1
    for the angle barrier); ``second_order=True`` switches to the physical
    variant with the same right-hand side driving ``theta_ddot``.
    """
    if not 0.0 <= uncertainty < 1.0:
        raise ValueError("uncertainty must lie in [0, 1)")
    g0, m_true, l_true = 9.81, 1.0, 1.0
    scale = 1.0 + uncertainty
    m_nom, l_nom = m_true * scale, l_true * scale
    gain_coef = 3.0 / (2.0 * m_true * l_true**2)
    drift_true_coef = 3.0 * g0 / (2.0 * l_true)
    drift_nom_coef = 3.0 * g0 / (2.0 * l_nom)
    theta_max = math.pi / 2

    regions = [
        _interval_region("green", 0, -math.pi / 4 - region_halfwidth, -math.pi / 4 + region_halfwidth),
        _interval_region("yellow", 0, math.pi / 4 - region_halfwidth, math.pi / 4 + region_halfwidth),
    ]

    if not second_order:
        barrier = Barrier(
            name="angle",
            h=lambda s: theta_max**2 - float(s[0]) ** 2,
            grad_h=lambda s: np.array([-2.0 * s[0]]),
            relative_degree=1,
            gains=pole_place(1, poles or (-2.0,)),
            coords=(0,),
        )
        return EnvSpec(
            name="pendulum",
            state_dim=1,
            action_dim=1,
            a_low=np.array([-torque_limit]),
            a_high=np.array([torque_limit]),
            dt=dt,
            nominal_drift=lambda s: np.array([drift_nom_coef * math.sin(s[0])]),
            gain=lambda s: np.array([[gain_coef]]),
            residual=lambda s: np.array([(drift_true_coef - drift_nom_coef) * math.sin(s[0])]),
            regions=regions,
            barriers=[barrier],
            init_sampler=lambda rng: np.array([rng.uniform(-init_range, init_range)]),
            state_scale=np.array([theta_max]),
            disturbed_rows=(0,),
            noise_std=noise_std,
        )

    barrier2 = Barrier(
        name="angle",
        h=lambda s: theta_max**2 - float(s[0]) ** 2,
        grad_h=lambda s: np.array([-2.0 * s[0], 0.0]),
        relative_degree=2,
        gains=pole_place(2, poles or (-2.0, -3.0)),
        hess_h=lambda s: np.diag([-2.0, 0.0]),
        coords=(0,),
    )
    return EnvSpec(
        name="pendulum2",
        state_dim=2,
        action_dim=1,
        a_low=np.array([-torque_limit]),
        a_high=np.array([torque_limit]),
        dt=dt,
        nominal_drift=lambda s: np.array([s[1], drift_nom_coef * math.sin(s[0])]),
        gain=lambda s: np.array([[0.0], [gain_coef]]),
        residual=lambda s: np.array([0.0, (drift_true_coef - drift_nom_coef) * math.sin(s[0])]),
        regions=regions,
        barriers=[barrier2],
        init_sampler=lambda rng: np.array(
            [rng.uniform(-init_range, init_range), rng.uniform(-0.2, 0.2)]
        ),
        state_scale=np.array([theta_max, 4.0]),
        disturbed_rows=(1,),
        noise_std=noise_std,
    )


# ---------------------------------------------------------------------------
# Cart-pole


def _cartpole_accels(theta, theta_dot, force, m_cart, m_pole, half_len, g0):
    total = m_cart + m_pole
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    temp = (force + m_pole * half_len * theta_dot**2 * sin_t) / total
    theta_acc = (g0 * sin_t - cos_t * temp) / (
        half_len * (4.0 / 3.0 - m_pole * cos_t**2 / total)
    )
    x_acc = temp - m_pole * half_len * theta_acc * cos_t / total
    return theta_acc, x_acc


def make_cartpole(
    uncertainty: float = 0.3,
    dt: float = 0.02,
    force_limit: float = 20.0,
    poles: Optional[Sequence[float]] = None,
    noise_std: float = 0.0,
) -> EnvSpec:
    """Classic cart-pole; state [theta, x, theta_dot, x_dot], force input.

    Safe set: |theta| <= 12 degrees and |x| <= 2.4 m; green/yellow bands on
    the cart position at -1.44..-0.96 and 0.96..1.44 m.
    """
    if not 0.0 <= uncertainty < 1.0:
        raise ValueError("uncertainty must lie in [0, 1)")
    g0 = 9.8
    m_cart_t, m_pole_t, half_len_t = 1.0, 0.1, 0.5
    scale = 1.0 + uncertainty
    m_cart_n, m_pole_n, half_len_n = m_cart_t * scale, m_pole_t * scale, half_len_t * scale
    theta_max = 12.0 * math.pi / 180.0
    x_max = 2.4

    def drift_with(params):
        m_c, m_p, hl = params

        def drift(s):
            th_acc, x_acc = _cartpole_accels(s[0], s[2], 0.0, m_c, m_p, hl, g0)
            return np.array([s[2], s[3], th_acc, x_acc])

        return drift

    def gain(s):
        th1, x1 = _cartpole_accels(s[0], s[2], 1.0, m_cart_t, m_pole_t, half_len_t, g0)
        th0, x0 = _cartpole_accels(s[0], s[2], 0.0, m_cart_t, m_pole_t, half_len_t, g0)
        return np.array([[0.0], [0.0], [th1 - th0], [x1 - x0]])

    drift_true = drift_with((m_cart_t, m_pole_t, half_len_t))
    drift_nom = drift_with((m_cart_n, m_pole_n, half_len_n))

    gains2 = pole_place(2, poles or (-3.0, -4.0))
    barriers = [
        Barrier(
            name="angle",
            h=lambda s: theta_max**2 - float(s[0]) ** 2,
            grad_h=lambda s: np.array([-2.0 * s[0], 0.0, 0.0, 0.0]),
            relative_degree=2,
            gains=gains2,
            hess_h=lambda s: np.diag([-2.0, 0.0, 0.0, 0.0]),
            coords=(0,),
        ),
        Barrier(
            name="position",
            h=lambda s: x_max**2 - float(s[1]) ** 2,
            grad_h=lambda s: np.array([0.0, -2.0 * s[1], 0.0, 0.0]),
            relative_degree=2,
            gains=gains2,
            hess_h=lambda s: np.diag([0.0, -2.0, 0.0, 0.0]),
            coords=(1,),
        ),
    ]

    # The filter enforces the same intervals through one-sided affine
    # barriers: the quadratic forms couple the squared velocity into the
    # constraint where the control coefficient vanishes, so with bounded
    # force they bind too late; the affine pairs brake in proportion to the
    # approach speed instead.
    def affine_barrier(name, dim, sign, bound):
        grad = np.zeros(4)
        grad[dim] = sign
        return Barrier(
            name=name,
            h=lambda s, d=dim, sg=sign, b=bound: sg * float(s[d]) + b,
            grad_h=lambda s, g=grad: g.copy(),
            relative_degree=2,
            gains=gains2,
            hess_h=lambda s: np.zeros((4, 4)),
            coords=(dim,),
        )

    filter_barriers = [
        affine_barrier("angle_high", 0, -1.0, theta_max),
        affine_barrier("angle_low", 0, 1.0, theta_max),
        affine_barrier("position_high", 1, -1.0, x_max),
        affine_barrier("position_low", 1, 1.0, x_max),
    ]
    return EnvSpec(
        name="cartpole",
        state_dim=4,
        action_dim=1,
        a_low=np.array([-force_limit]),
        a_high=np.array([force_limit]),
        dt=dt,
        nominal_drift=drift_nom,
        gain=gain,
        residual=lambda s: drift_true(s) - drift_nom(s),
        regions=[
            _interval_region("green", 1, -1.44, -0.96),
            _interval_region("yellow", 1, 0.96, 1.44),
        ],
        barriers=barriers,
        init_sampler=lambda rng: rng.uniform(-0.05, 0.05, size=4),
        state_scale=np.array([theta_max, x_max, 1.0, 2.0]),
        disturbed_rows=(2, 3),
        noise_std=noise_std,
        filter_barriers=filter_barriers,
    )


# ---------------------------------------------------------------------------
# Kinematic car


def make_car(
    uncertainty: float = 0.25,
    dt: float = 0.05,
    noise_std: float = 0.05,
    steer_limit: float = 0.6,
    accel_limit: float = 2.0,
    workspace: float = 5.0,
) -> EnvSpec:
    """Car-like model; state [px, py, heading, speed], inputs [accel, steer].

    The steering input is pre-mapped through tan, so the dynamics are affine
    in the action vector; the box bound on the second input corresponds to
    a +/- ``steer_limit`` rad steering angle.  The stated parameter errors
    (wheelbase and drive gain) sit in the control gain, so this is the one
    environment whose nominal gain differs from the simulated one.
    """
    if not 0.0 <= uncertainty < 1.0:
        raise ValueError("uncertainty must lie in [0, 1)")
    wheelbase_t, k_u_t = 1.0, 1.0
    scale = 1.0 + uncertainty
    wheelbase_n, k_u_n = wheelbase_t * scale, k_u_t * scale

    def drift(s):
        return np.array([s[3] * math.cos(s[2]), s[3] * math.sin(s[2]), 0.0, 0.0])

    def gain_nom(s):
        return np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 1.0 / wheelbase_n], [k_u_n, 0.0]])

    def gain_true(s):
        return np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 1.0 / wheelbase_t], [k_u_t, 0.0]])

    def box_barrier(name, dim, sign, bound):
        grad = np.zeros(4)
        grad[dim] = sign

        def hess(s):
            return np.zeros((4, 4))

        return Barrier(
            name=name,
            h=lambda s, d=dim, sg=sign, b=bound: sg * float(s[d]) + b,
            grad_h=lambda s, g=grad: g.copy(),
            relative_degree=2,
            gains=pole_place(2, (-1.0, -2.0)),
            hess_h=hess,
            coords=(dim,),
        )

    barriers = [
        box_barrier("x_low", 0, 1.0, workspace),
        box_barrier("x_high", 0, -1.0, workspace),
        box_barrier("y_low", 1, 1.0, workspace),
        box_barrier("y_high", 1, -1.0, workspace),
        Barrier(
            name="keepout",
            h=lambda s: float(s[0] ** 2 + s[1] ** 2) - 1.0,
            grad_h=lambda s: np.array([2.0 * s[0], 2.0 * s[1], 0.0, 0.0]),
            relative_degree=2,
            gains=pole_place(2, (-1.0, -2.0)),
            hess_h=lambda s: np.diag([2.0, 2.0, 0.0, 0.0]),
            coords=(0, 1),
        ),
    ]
    regions = [
        _disk_region("green", (-3.0, 0.0), 0.8),
        _disk_region("yellow", (3.0, 0.0), 0.8),
    ]
    steer_box = math.tan(steer_limit)
    return EnvSpec(
        name="car",
        state_dim=4,
        action_dim=2,
        a_low=np.array([-accel_limit, -steer_box]),
        a_high=np.array([accel_limit, steer_box]),
        dt=dt,
        nominal_drift=drift,
        gain=gain_nom,
        residual=lambda s: np.zeros(4),
        regions=regions,
        barriers=barriers,
        init_sampler=lambda rng: np.array([rng.uniform(-4, -2), rng.uniform(1.5, 3.0), 0.0, 0.0]),
        state_scale=np.array([workspace, workspace, math.pi, 3.0]),
        disturbed_rows=(3,),
        noise_std=noise_std,
        true_gain=gain_true,
    )


# ---------------------------------------------------------------------------
# Labeled particle workspace


_GYM_WAYPOINTS = [(2.0, 2.0), (8.0, 2.0), (8.0, 8.0), (2.0, 8.0), (5.0, 6.5)]


def _crater_waypoints(n: int = 10) -> List[Tuple[float, float]]:
    pts = []
    for k in range(n):
        ang = -0.5 * math.pi + 2.0 * math.pi * k / (n + 1)
        pts.append((5.0 + 3.5 * math.cos(ang), 5.0 + 3.5 * math.sin(ang)))
    return pts


def make_particle_gym(
    uncertainty: float = 0.3,
    dt: float = 0.02,
    layout: str = "gym",
    speed_limit: float = 1.0,
    waypoint_radius: float = 0.6,
    noise_std: float = 0.0,
) -> EnvSpec:
    """Velocity-controlled particle in a 10x10 labeled workspace.

    ``layout='gym'`` places five numbered waypoint disks and one circular
    obstacle; ``layout='crater'`` arranges ten waypoints plus a start pad
    around a central circular keep-out (the crater-survey analog).  The
    unknown residual is a smooth wind field scaled by ``uncertainty``.
    """
    if layout not in ("gym", "crater"):
        raise ValueError("layout must be 'gym' or 'crater'")

    def wind(s):
        return uncertainty * np.array(
            [0.5 * math.sin(0.6 * s[1]), 0.5 * math.cos(0.6 * s[0])]
        )

    if layout == "gym":
        regions = [
            _disk_region(f"r{i+1}", c, waypoint_radius) for i, c in enumerate(_GYM_WAYPOINTS)
        ]
        keepout_center, keepout_radius = np.array([5.0, 3.0]), 0.8
        start = np.array([1.0, 5.0])
    else:
        pts = _crater_waypoints(10)
        regions = [_disk_region(f"v{i+1}", c, waypoint_radius) for i, c in enumerate(pts)]
        regions.append(_disk_region("vstart", (5.0, 1.0), waypoint_radius))
        keepout_center, keepout_radius = np.array([5.0, 5.0]), 2.0
        start = np.array([5.0, 1.0])

    def box_barrier(name, dim, sign, bound):
        return Barrier(
            name=name,
            h=lambda s, d=dim, sg=sign, b=bound: sg * float(s[d]) + b,
            grad_h=lambda s, d=dim, sg=sign: np.eye(2)[d] * sg,
            relative_degree=1,
            gains=pole_place(1, (-2.0,)),
            coords=(dim,),
        )

    barriers = [
        box_barrier("x_low", 0, 1.0, 0.0),
        box_barrier("x_high", 0, -1.0, 10.0),
        box_barrier("y_low", 1, 1.0, 0.0),
        box_barrier("y_high", 1, -1.0, 10.0),
        Barrier(
            name="keepout",
            h=lambda s: float((s[0] - keepout_center[0]) ** 2 + (s[1] - keepout_center[1]) ** 2)
            - keepout_radius**2,
            grad_h=lambda s: np.array(
                [2.0 * (s[0] - keepout_center[0]), 2.0 * (s[1] - keepout_center[1])]
            ),
            relative_degree=1,
            gains=pole_place(1, (-2.0,)),
            coords=(0, 1),
        ),
    ]
    return EnvSpec(
        name=f"particle_{layout}",
        state_dim=2,
        action_dim=2,
        a_low=np.array([-speed_limit, -speed_limit]),
        a_high=np.array([speed_limit, speed_limit]),
        dt=dt,
        nominal_drift=lambda s: np.zeros(2),
        gain=lambda s: np.eye(2),
        residual=wind,
        regions=regions,
        barriers=barriers,
        init_sampler=lambda rng, st=start: st + rng.uniform(-0.2, 0.2, size=2),
        state_scale=np.array([10.0, 10.0]),
        disturbed_rows=(0, 1),
        noise_std=noise_std,
    )


_MAKERS = {
    "pendulum": make_pendulum,
    "cartpole": make_cartpole,
    "car": make_car,
    "particle_gym": make_particle_gym,
}


def make_env(name: str, **kwargs) -> EnvSpec:
    if name not in _MAKERS:
        raise ValueError(f"unknown environment {name!r} (have {sorted(_MAKERS)})")
    return _MAKERS[name](**kwargs)
