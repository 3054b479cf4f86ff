"""On-the-fly product between a continuous environment and the embedded machine.

Product states are never enumerated; only the current one is kept.  The
automaton reads the label of the *current* environment state, so the
automaton move is independent of the stochastic arrival.  A product state
carries the post-update (live) frontier used by the next transition, plus
two derived flags fixed at arrival time: whether the arrival was an
accepting visit (judged against the frontier held before its own removal)
and whether it completed a round.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from .automaton import ELdgbaState, Ldgba, frontier_update, full_frontier, step
from .envs import EnvSpec, label, step_dynamics


class ProductError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ProductState:
    s: np.ndarray
    q: str
    frontier: int
    round_flag: bool = False
    accepting: bool = False

    def embedded(self) -> ELdgbaState:
        return ELdgbaState(self.q, self.frontier, self.round_flag)


@dataclass(frozen=True)
class Continuous:
    a: np.ndarray


@dataclass(frozen=True)
class Epsilon:
    target: str


ProductAction = Union[Continuous, Epsilon]


def initial_product_state(a: Ldgba, s0: np.ndarray) -> ProductState:
    full = full_frontier(a.n_accepting)
    return ProductState(
        s=np.asarray(s0, dtype=float),
        q=a.initial,
        frontier=full,
        round_flag=False,
        accepting=bool(a.acc_mask(a.initial) & full),
    )


def available_eps(a: Ldgba, x: ProductState) -> List[str]:
    """Epsilon-edge targets at x, in declaration order; empty on Q_D."""
    if x.q in a.deterministic:
        return []
    return [dst for src, dst in a.eps_transitions if src == x.q]


def is_unsafe(a: Ldgba, x: ProductState) -> bool:
    return x.q in a.unsafe


def product_step(
    env: EnvSpec,
    a: Ldgba,
    x: ProductState,
    u: ProductAction,
    dt: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> ProductState:
    """One synchronized move of (environment, embedded automaton).

    Continuous actions advance the plant and feed the current label to the
    automaton; epsilon actions switch the automaton state in place with the
    environment state and frontier unchanged.
    """
    if isinstance(u, Epsilon):
        targets = available_eps(a, x)
        if u.target not in targets:
            raise ProductError(f"illegal epsilon move {x.q!r} -> {u.target!r}")
        return ProductState(
            s=x.s,
            q=u.target,
            frontier=x.frontier,
            round_flag=False,
            accepting=bool(a.acc_mask(u.target) & x.frontier),
        )
    if x.q not in a.deterministic:
        raise ProductError(
            f"continuous action at nondeterministic automaton state {x.q!r}"
        )
    # The environment may label propositions the automaton does not know
    # (e.g. `unsafe` against a safety-free machine); guards only mention the
    # automaton's own alphabet, so project the label onto it.
    letter = frozenset(label(env, x.s)) & set(a.aps)
    s_next = step_dynamics(env, x.s, u.a, dt, rng)
    q_next = step(a, x.q, letter)
    accepting = bool(a.acc_mask(q_next) & x.frontier)
    frontier, round_flag = frontier_update(a, q_next, x.frontier)
    return ProductState(
        s=s_next, q=q_next, frontier=frontier, round_flag=round_flag, accepting=accepting
    )
