"""Reward, discount, potential-based shaping, and the guided penalty.

The base scheme pays ``1 - r_F`` exactly at accepting product states and
discounts them by ``r_F`` instead of ``gamma_F``.  Shaping adds a one-time
bonus for the first entry into each automaton state per round, tracked by a
state frontier that resets when the accepting frontier completes a round.
The guided reward replaces the shaped reward with ``r_n * ||a_pt||``
whenever the safety filter had to perturb the action.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import FrozenSet

import numpy as np

from .automaton import Ldgba, sink_states
from .product import ProductState


@dataclass(frozen=True)
class RewardParams:
    r_f: float = 0.9
    gamma_f: float = 0.99
    eta_phi: float = 1000.0
    r_n: float = -50.0
    zero_tol: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.r_f < 1.0 or not 0.0 < self.gamma_f < 1.0:
            raise ValueError("r_f and gamma_f must lie in (0, 1)")
        if self.eta_phi <= 0:
            raise ValueError("eta_phi must be positive")
        if self.r_n >= 0:
            raise ValueError("r_n must be negative")
        if not (1.0 - self.gamma_f) < (1.0 - self.r_f):
            warnings.warn(
                "expected 1 - gamma_f < 1 - r_f (accepting visits should be "
                "discounted harder than ordinary steps)",
                stacklevel=2,
            )


def coupled_r_f(gamma_f: float) -> float:
    """The r_F(gamma_F) schedule 1 - sqrt(1 - gamma_F) used for limit studies."""
    return 1.0 - float(np.sqrt(1.0 - gamma_f))


@dataclass(frozen=True)
class ShapingState:
    """Automaton states still owed a first-visit bonus this round."""

    pending: FrozenSet[str]
    initial_pending: FrozenSet[str]


def initial_shaping(a: Ldgba) -> ShapingState:
    base = frozenset(a.states) - {a.initial} - sink_states(a)
    return ShapingState(pending=base, initial_pending=base)


def base_reward(x: ProductState, a: Ldgba, p: RewardParams) -> float:
    return 1.0 - p.r_f if x.accepting else 0.0


def discount(x: ProductState, a: Ldgba, p: RewardParams) -> float:
    return p.r_f if x.accepting else p.gamma_f


def potential(q: str, shaping: ShapingState, p: RewardParams) -> float:
    return p.eta_phi * (1.0 - p.r_f) if q in shaping.pending else 0.0


def shaping_update(q_next: str, shaping: ShapingState, round_complete: bool) -> ShapingState:
    if round_complete:
        return replace(shaping, pending=shaping.initial_pending - {q_next})
    if q_next in shaping.pending:
        return replace(shaping, pending=shaping.pending - {q_next})
    return shaping


def shaped_reward(
    x: ProductState,
    x_next: ProductState,
    a: Ldgba,
    shaping_before: ShapingState,
    p: RewardParams,
) -> float:
    """Potential-shaped reward for the transition x -> x_next.

    ``shaping_before`` must already reflect x's own arrival (so a state is
    rewarded exactly once per round, on the transition that first enters it).
    """
    return (
        base_reward(x, a, p)
        + discount(x, a, p) * potential(x_next.q, shaping_before, p)
        - potential(x.q, shaping_before, p)
    )


def guided_reward(r_shaped: float, a_pt: np.ndarray, p: RewardParams) -> float:
    """Penalize filter interventions; pass the shaped reward through otherwise."""
    norm = float(np.linalg.norm(np.asarray(a_pt, dtype=float)))
    if norm > p.zero_tol:
        return p.r_n * norm
    return r_shaped
