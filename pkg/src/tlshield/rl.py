"""Modular deterministic policy gradient: one DDPG bundle per automaton state.

Each LDGBA state (not embedded state) owns an actor, critic, their targets,
a replay buffer, and an exploration-noise level.  The active bundle is
selected by the automaton component of the product state; critic targets
bootstrap through the *next* transition's module using that module's target
networks.  Stored actions are always the pre-filter policy actions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from . import nn
from .automaton import Ldgba
from .envs import EnvSpec
from .product import Continuous, Epsilon, ProductAction, ProductState, available_eps


@dataclass(frozen=True)
class RlConfig:
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    tau_soft: float = 0.005
    batch: int = 64
    capacity: int = 100_000
    noise_std: float = 0.1  # fraction of the action range
    noise_decay: float = 0.999
    hidden: Tuple[int, ...] = (64, 64, 64)
    actor_final_scale: float = 0.003
    updates_per_step: int = 1  # gradient steps per environment step


class ReplayBuffer:
    """Bounded FIFO ring with uniform sampling."""

    def __init__(self, capacity: int, x_dim: int, a_dim: int):
        self.capacity = capacity
        self.x = np.zeros((capacity, x_dim))
        self.a = np.zeros((capacity, a_dim))
        self.r = np.zeros(capacity)
        self.gamma = np.zeros(capacity)
        self.x_next = np.zeros((capacity, x_dim))
        self.next_module = np.zeros(capacity, dtype=np.int64)
        self.done = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.head = 0

    def __len__(self) -> int:
        return self.size

    def push(self, x, a, r, gamma, x_next, next_module, done):
        if not (np.isfinite(r) and np.isfinite(gamma)):
            raise ValueError("non-finite reward or discount")
        i = self.head
        self.x[i] = x
        self.a[i] = a
        self.r[i] = r
        self.gamma[i] = gamma
        self.x_next[i] = x_next
        self.next_module[i] = next_module
        self.done[i] = done
        self.head = (self.head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.integers(0, self.size, size=n)


def encode_input(x: ProductState, state_scale: np.ndarray, n_sets: int) -> np.ndarray:
    """Normalized environment state followed by the frontier's one-hot bits."""
    bits = [(x.frontier >> j) & 1 for j in range(n_sets)]
    return np.concatenate([np.asarray(x.s, dtype=float) / state_scale, np.array(bits, dtype=float)])


@dataclass
class _Bundle:
    actor: nn.Mlp
    critic: nn.Mlp
    target_actor: nn.Mlp
    target_critic: nn.Mlp
    buffer: ReplayBuffer
    actor_opt: nn.OptState
    critic_opt: nn.OptState


class ModularAgent:
    def __init__(self, automaton: Ldgba, env: EnvSpec, cfg: RlConfig, seed: int):
        self.automaton = automaton
        self.env = env
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.n_sets = automaton.n_accepting
        self.x_dim = env.state_dim + self.n_sets
        self.a_dim = env.action_dim
        self.noise_scale = cfg.noise_std * (env.a_high - env.a_low)
        self.modules: Dict[str, _Bundle] = {}
        for q in automaton.states:
            actor = nn.init_mlp(
                (self.x_dim, *cfg.hidden, self.a_dim),
                self.rng,
                out_mode="box",
                out_low=env.a_low.astype(float),
                out_high=env.a_high.astype(float),
                final_scale=cfg.actor_final_scale,
            )
            critic = nn.init_mlp((self.x_dim + self.a_dim, *cfg.hidden, 1), self.rng)
            self.modules[q] = _Bundle(
                actor=actor,
                critic=critic,
                target_actor=nn.clone(actor),
                target_critic=nn.clone(critic),
                buffer=ReplayBuffer(cfg.capacity, self.x_dim, self.a_dim),
                actor_opt=nn.make_opt(actor, cfg.lr_actor),
                critic_opt=nn.make_opt(critic, cfg.lr_critic),
            )

    def module_index(self, q: str) -> int:
        return self.automaton.state_index[q]

    def encode(self, x: ProductState) -> np.ndarray:
        return encode_input(x, self.env.state_scale, self.n_sets)

    def policy_action(self, x: ProductState, explore: bool) -> np.ndarray:
        raw = nn.forward(self.modules[x.q].actor, self.encode(x))
        if explore:
            raw = raw + self.rng.normal(0.0, 1.0, self.a_dim) * self.noise_scale
        return np.clip(raw, self.env.a_low, self.env.a_high)

    def decay_noise(self):
        self.noise_scale = self.noise_scale * self.cfg.noise_decay


def select_action(
    agent: ModularAgent, x: ProductState, explore: bool
) -> Tuple[ProductAction, np.ndarray]:
    """Pick the product action at x and the matching plant action.

    Epsilon moves (take-first rule) map to the zero plant action; otherwise
    the module's actor output plus optional exploration noise, clamped to
    the action box.
    """
    eps = available_eps(agent.automaton, x)
    if eps:
        return Epsilon(eps[0]), np.zeros(agent.a_dim)
    a_rl = agent.policy_action(x, explore)
    return Continuous(a_rl), a_rl


def store(
    agent: ModularAgent,
    q: str,
    x_enc: np.ndarray,
    a_rl: np.ndarray,
    reward: float,
    gamma: float,
    x_next_enc: np.ndarray,
    next_q: str,
    done: bool,
):
    agent.modules[q].buffer.push(
        x_enc, a_rl, reward, gamma, x_next_enc, agent.module_index(next_q), done
    )


def update_module(agent: ModularAgent, q: str) -> Optional[Dict[str, float]]:
    """One DDPG update of module q; None when the buffer is still too small.

    Critic targets use the next transition's module: for each sampled
    transition, ``y = r + gamma * Q'_{q'}(x', pi'_{q'}(x'))`` with the target
    networks of module q'; terminal transitions use ``y = r``.
    """
    cfg = agent.cfg
    bundle = agent.modules[q]
    buf = bundle.buffer
    if len(buf) < cfg.batch:
        return None
    idx = buf.sample(agent.rng, cfg.batch)
    x = buf.x[idx]
    a = buf.a[idx]
    r = buf.r[idx]
    gamma = buf.gamma[idx]
    x_next = buf.x_next[idx]
    next_module = buf.next_module[idx]
    done = buf.done[idx]

    y = r.copy()
    live = ~done
    if live.any():
        boot = np.zeros(cfg.batch)
        for mod_idx in np.unique(next_module[live]):
            rows = live & (next_module == mod_idx)
            target_bundle = agent.modules[agent.automaton.states[mod_idx]]
            a_next = nn.forward(target_bundle.target_actor, x_next[rows])
            q_next = nn.forward(
                target_bundle.target_critic, np.concatenate([x_next[rows], a_next], axis=1)
            )[:, 0]
            boot[rows] = q_next
        y[live] += gamma[live] * boot[live]

    # Critic: minimize mean squared Bellman error.
    xa = np.concatenate([x, a], axis=1)
    pred, cache = nn.forward_cache(bundle.critic, xa)
    err = pred[:, 0] - y
    gout = (2.0 / cfg.batch) * err[:, None]
    gw, gb, _ = nn.backward(bundle.critic, cache, gout)
    nn.opt_step(bundle.critic, gw, gb, bundle.critic_opt)
    critic_loss = float(np.mean(err**2))

    # Actor: ascend mean Q(x, pi(x)) via the critic's input gradient.
    a_pi, cache_a = nn.forward_cache(bundle.actor, x)
    xa_pi = np.concatenate([x, a_pi], axis=1)
    q_pi, cache_q = nn.forward_cache(bundle.critic, xa_pi)
    ones = np.full((cfg.batch, 1), 1.0 / cfg.batch)
    _, _, g_input = nn.backward(bundle.critic, cache_q, ones)
    dq_da = g_input[:, agent.x_dim :]
    gw_a, gb_a, _ = nn.backward(bundle.actor, cache_a, -dq_da)
    nn.opt_step(bundle.actor, gw_a, gb_a, bundle.actor_opt)

    nn.soft_update(bundle.target_actor, bundle.actor, cfg.tau_soft)
    nn.soft_update(bundle.target_critic, bundle.critic, cfg.tau_soft)
    return {"critic_loss": critic_loss, "q_mean": float(np.mean(q_pi))}


# ---------------------------------------------------------------------------
# Agent serialization (network weights only; buffers are not checkpointed)


def agent_blobs(agent: ModularAgent) -> Dict[str, bytes]:
    out = {}
    for q, bundle in agent.modules.items():
        out[f"{q}/actor"] = nn.serialize_mlp(bundle.actor)
        out[f"{q}/critic"] = nn.serialize_mlp(bundle.critic)
        out[f"{q}/target_actor"] = nn.serialize_mlp(bundle.target_actor)
        out[f"{q}/target_critic"] = nn.serialize_mlp(bundle.target_critic)
    return out


def load_agent_blobs(agent: ModularAgent, blobs: Dict[str, bytes]):
    for q, bundle in agent.modules.items():
        bundle.actor = nn.deserialize_mlp(blobs[f"{q}/actor"])
        bundle.critic = nn.deserialize_mlp(blobs[f"{q}/critic"])
        bundle.target_actor = nn.deserialize_mlp(blobs[f"{q}/target_actor"])
        bundle.target_critic = nn.deserialize_mlp(blobs[f"{q}/target_critic"])
