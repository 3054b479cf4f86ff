"""Training and evaluation loop for safe LTL-constrained control.

One episode at a time: select the module's action, run it through the
safety filter, advance the product, apply the three-step exploration
guiding, store the pre-filter action with the guided reward, feed the
residual buffer, and update the active module.  The GP is refit from a
fresh subsample once per episode.  Metrics stream to a CSV whose bytes are
reproducible given the config and seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import tomli

from . import data as fixture_data
from . import gp as gpmod
from .automaton import Ldgba, parse_automaton, serialize_automaton, surely_accepting_states
from .cbf import SafetyFilter, pole_place
from .envs import EnvError, EnvSpec, barrier_values, make_env, step_dynamics
from .ltl import Next, parse_ltl, subformulas
from .product import Continuous, ProductState, initial_product_state, is_unsafe, product_step
from .reward import (
    RewardParams,
    ShapingState,
    base_reward,
    discount,
    guided_reward,
    initial_shaping,
    potential,
    shaped_reward,
    shaping_update,
)
from .rl import ModularAgent, RlConfig, agent_blobs, load_agent_blobs, select_action, store, update_module

_CKPT_MAGIC = b"TLCK"
_CKPT_VERSION = 1
VIRTUAL_SINK = "__unsafe_sink__"


class TrainerError(RuntimeError):
    pass


@dataclass
class GpConfig:
    enabled: bool = True
    sigma_f: float = 1.0
    lengthscale: float = 1.0
    sigma_noise: float = 0.1
    n_max: int = 200
    k_delta: float = 2.0
    refit_every_episode: bool = True
    grid_search: bool = False  # pick hyperparameters by marginal likelihood once


@dataclass
class CbfConfig:
    enabled: bool = True
    k_eps: float = 1e6
    margin: float = 0.0
    one_step_guard: bool = False
    residual_lipschitz: float = 0.0
    eta: float = 1.0
    shared_slack: bool = True
    poles1: Optional[List[float]] = None  # applied to relative-degree-1 barriers
    poles2: Optional[List[float]] = None


@dataclass
class TrainConfig:
    env_name: str = "pendulum"
    env_kwargs: Dict = field(default_factory=dict)
    automaton: str = "surveillance3_safe"
    task_formula: Optional[str] = None
    reward: RewardParams = field(default_factory=RewardParams)
    gp: GpConfig = field(default_factory=GpConfig)
    cbf: CbfConfig = field(default_factory=CbfConfig)
    rl: RlConfig = field(default_factory=RlConfig)
    episodes: int = 100
    max_steps: int = 200
    seed: int = 0
    out_dir: str = "out/run"
    guiding: bool = True
    rounds_required: int = 2
    eval_runs: int = 200
    task_kind: str = "auto"  # auto | finite | infinite
    gp_warmup_steps: int = 0
    update_every: int = 1
    raw_text: str = ""

    def __post_init__(self):
        if self.episodes < 1 or self.max_steps < 1:
            raise TrainerError("episodes and max_steps must be at least 1")
        if self.task_kind not in ("auto", "finite", "infinite"):
            raise TrainerError("task_kind must be auto, finite, or infinite")


def _section(blob, name):
    return dict(blob.get(name, {}))


def load_config(path) -> TrainConfig:
    path = Path(path)
    text = path.read_text()
    blob = tomli.loads(text)
    env_sec = _section(blob, "env")
    name = env_sec.pop("name", "pendulum")
    reward_sec = _section(blob, "reward")
    reward = RewardParams(
        r_f=reward_sec.get("r_f", 0.9),
        gamma_f=reward_sec.get("gamma_f", 0.99),
        eta_phi=reward_sec.get("eta_phi", 1000.0),
        r_n=reward_sec.get("r_n", -50.0),
        zero_tol=reward_sec.get("zero_tol", 1e-6),
    )
    gp_sec = _section(blob, "gp")
    cbf_sec = _section(blob, "cbf")
    rl_sec = _section(blob, "rl")
    trainer_sec = _section(blob, "trainer")
    task_sec = _section(blob, "task")
    rl_cfg = RlConfig(
        lr_actor=rl_sec.get("lr_actor", 1e-4),
        lr_critic=rl_sec.get("lr_critic", 1e-3),
        tau_soft=rl_sec.get("tau_soft", 0.005),
        batch=rl_sec.get("batch", 64),
        capacity=rl_sec.get("capacity", 100_000),
        noise_std=rl_sec.get("noise_std", 0.1),
        noise_decay=rl_sec.get("noise_decay", 0.999),
        hidden=tuple(rl_sec.get("hidden", (64, 64, 64))),
        updates_per_step=rl_sec.get("updates_per_step", 1),
    )
    return TrainConfig(
        env_name=name,
        env_kwargs=env_sec,
        automaton=_section(blob, "automaton").get("path", "surveillance3_safe"),
        task_formula=task_sec.get("formula"),
        reward=reward,
        gp=GpConfig(**gp_sec) if gp_sec else GpConfig(),
        cbf=CbfConfig(**cbf_sec) if cbf_sec else CbfConfig(),
        rl=rl_cfg,
        episodes=trainer_sec.get("episodes", 100),
        max_steps=trainer_sec.get("max_steps", 200),
        seed=trainer_sec.get("seed", 0),
        out_dir=trainer_sec.get("out_dir", "out/run"),
        guiding=trainer_sec.get("guiding", True),
        rounds_required=trainer_sec.get("rounds_required", 2),
        eval_runs=trainer_sec.get("eval_runs", 200),
        task_kind=trainer_sec.get("task_kind", "auto"),
        gp_warmup_steps=trainer_sec.get("gp_warmup_steps", 0),
        update_every=trainer_sec.get("update_every", 1),
        raw_text=text,
    )


def build_environment(cfg: TrainConfig) -> EnvSpec:
    return make_env(cfg.env_name, **cfg.env_kwargs)


def load_task_automaton(cfg: TrainConfig) -> Ldgba:
    path = Path(cfg.automaton)
    if path.exists():
        a = parse_automaton(path.read_text())
    else:
        a = fixture_data.load_automaton(cfg.automaton)
    if a.nondeterministic:
        raise TrainerError("training requires a fully deterministic automaton")
    if cfg.task_formula:
        # The formula may mention environment propositions the automaton
        # does not track, so atoms are not restricted to its alphabet.
        f = parse_ltl(cfg.task_formula, None)
        if any(isinstance(sub, Next) for sub in subformulas(f)):
            warnings.warn("task formula contains the next operator", stacklevel=2)
    return a


def _apply_cbf_gains(barriers, cbf_cfg: CbfConfig):
    out = []
    for b in barriers:
        poles = cbf_cfg.poles1 if b.relative_degree == 1 else cbf_cfg.poles2
        if poles:
            b = b.with_gains(pole_place(b.relative_degree, poles))
        if cbf_cfg.eta != b.eta:
            b = dataclasses.replace(b, eta=cbf_cfg.eta)
        out.append(b)
    return out


def build_filter(env: EnvSpec, cfg: TrainConfig) -> Optional[SafetyFilter]:
    if not cfg.cbf.enabled:
        return None
    return SafetyFilter(
        barriers=_apply_cbf_gains(env.enforcement_barriers(), cfg.cbf),
        drift=env.nominal_drift,
        gain=env.gain,
        a_low=env.a_low,
        a_high=env.a_high,
        k_delta=cfg.gp.k_delta,
        k_eps=cfg.cbf.k_eps,
        disturbed_rows=env.disturbed_rows,
        prior_sigma=cfg.gp.sigma_f,
        margin=cfg.cbf.margin,
        one_step_guard=cfg.cbf.one_step_guard,
        guard_dt=env.dt,
        residual_lipschitz=cfg.cbf.residual_lipschitz,
        shared_slack=cfg.cbf.shared_slack,
    )


# ---------------------------------------------------------------------------
# Exploration guiding


@dataclass
class Transition:
    x: ProductState
    a_rl: np.ndarray
    a_safe: np.ndarray
    x_next: ProductState
    reward: float
    terminal: bool = False


def designated_sink(a: Ldgba, guiding: bool) -> Optional[str]:
    if a.unsafe:
        return sorted(a.unsafe, key=a.state_index.get)[0]
    if guiding:
        warnings.warn(
            "guiding enabled but the automaton declares no unsafe state; "
            "interventions terminate into a virtual sink",
            stacklevel=2,
        )
        return VIRTUAL_SINK
    return None


def guide_step(tr: Transition, a_pt: np.ndarray, a: Ldgba, p: RewardParams, sink: Optional[str]) -> Transition:
    """Three-step exploration guiding applied to one transition.

    When the filter perturbed the action: the reward becomes the penalty,
    the arrival's automaton component is overwritten with the designated
    unsafe sink, and the transition turns terminal.  The stored action is
    the pre-filter policy action either way.
    """
    norm = float(np.linalg.norm(a_pt))
    if norm <= p.zero_tol:
        return tr
    if sink is None:
        raise TrainerError("guiding requires a designated unsafe sink state")
    x_next = replace(tr.x_next, q=sink, round_flag=False, accepting=False)
    return replace(tr, x_next=x_next, reward=p.r_n * norm, terminal=True)


# ---------------------------------------------------------------------------
# Episode metrics


@dataclass
class EpisodeMetrics:
    episode: int
    steps: int
    base_return: float
    shaped_return: float
    interventions: int
    rounds: int
    max_abs_state: np.ndarray
    safe: bool
    success: bool

    def csv_row(self) -> str:
        cols = [
            str(self.episode),
            str(self.steps),
            repr(float(self.base_return)),
            repr(float(self.shaped_return)),
            str(self.interventions),
            str(self.rounds),
        ]
        cols.extend(repr(float(v)) for v in self.max_abs_state)
        cols.append(str(int(self.safe)))
        cols.append(str(int(self.success)))
        return ",".join(cols)


def metrics_header(state_dim: int) -> str:
    cols = ["episode", "steps", "return", "shaped_return", "interventions", "rounds"]
    cols.extend(f"max_abs_state_{i+1}" for i in range(state_dim))
    cols.extend(["safe", "success"])
    return ",".join(cols)


@dataclass
class StepInfo:
    q: str
    round_flag: bool
    unsafe: bool


def success_of_episode(
    trace: Sequence[StepInfo],
    task_kind: str,
    rounds_required: int,
    success_states: frozenset = frozenset(),
) -> bool:
    """Task success for one episode.

    Finite tasks succeed when the run reaches a state from which every
    safe infinite continuation is accepting and never goes unsafe;
    infinite tasks need the required number of completed rounds within the
    budget, also without entering the unsafe component.
    """
    if any(info.unsafe for info in trace):
        return False
    if task_kind == "finite":
        return any(info.q in success_states for info in trace)
    rounds = sum(1 for info in trace if info.round_flag)
    return rounds >= rounds_required


def finite_success_states(a: Ldgba) -> frozenset:
    """Success states judged on the automaton with unsafe sinks removed.

    With a safety conjunct no state is surely accepting (the plant could
    still violate), so judge goal completion on safe continuations only.
    """
    if not a.unsafe:
        return surely_accepting_states(a)
    keep = [q for q in a.states if q not in a.unsafe]
    keep_set = set(keep)
    idx = {q: a.state_index[q] for q in keep}
    succ = {q: set() for q in keep}
    table = a.det_table()
    for q in keep:
        for target in table[idx[q]]:
            tq = a.states[int(target)]
            if tq in keep_set:
                succ[q].add(tq)
    result = []
    for q in keep:
        reach = {q}
        stack = [q]
        while stack:
            v = stack.pop()
            for w in succ[v]:
                if w not in reach:
                    reach.add(w)
                    stack.append(w)
        ok = True
        for j in range(a.n_accepting):
            sub = {v: {w for w in succ[v] if w in reach and not (a.acc_mask(w) >> j & 1)}
                   for v in reach if not (a.acc_mask(v) >> j & 1)}
            if _graph_has_cycle(sub):
                ok = False
                break
        if ok:
            result.append(q)
    return frozenset(result)


def _graph_has_cycle(graph) -> bool:
    indeg = {v: 0 for v in graph}
    for v, outs in graph.items():
        for w in outs:
            if w in indeg:
                indeg[w] += 1
    queue = [v for v, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        for w in graph[v]:
            if w in indeg:
                indeg[w] -= 1
                if indeg[w] == 0:
                    queue.append(w)
    return seen != len(graph)


def resolve_task_kind(cfg: TrainConfig, a: Ldgba) -> Tuple[str, frozenset]:
    success_states = finite_success_states(a)
    if cfg.task_kind == "auto":
        kind = "finite" if success_states else "infinite"
    else:
        kind = cfg.task_kind
    return kind, success_states


# ---------------------------------------------------------------------------
# Checkpoints


def _config_hash(env: EnvSpec, a: Ldgba, rl_cfg: RlConfig) -> bytes:
    tag = "|".join(
        [
            env.name,
            str(env.state_dim),
            str(env.action_dim),
            hashlib.sha256(serialize_automaton(a).encode()).hexdigest(),
            str(rl_cfg.hidden),
        ]
    )
    return hashlib.sha256(tag.encode()).digest()


def save_checkpoint(path, agent: ModularAgent, env: EnvSpec, a: Ldgba):
    blobs = agent_blobs(agent)
    stats = ";".join(
        f"{q}={len(bundle.buffer)}" for q, bundle in sorted(agent.modules.items())
    )
    blobs["__buffer_stats__"] = stats.encode()
    parts = [_CKPT_MAGIC, struct.pack("<H", _CKPT_VERSION), _config_hash(env, a, agent.cfg)]
    parts.append(struct.pack("<I", len(blobs)))
    for key in sorted(blobs):
        encoded = key.encode()
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", len(blobs[key])))
        parts.append(blobs[key])
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path, agent: ModularAgent, env: EnvSpec, a: Ldgba):
    blob = Path(path).read_bytes()
    if blob[:4] != _CKPT_MAGIC:
        raise TrainerError("not a checkpoint file")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != _CKPT_VERSION:
        raise TrainerError(f"unsupported checkpoint version {version}")
    stored_hash = blob[6:38]
    if stored_hash != _config_hash(env, a, agent.cfg):
        raise TrainerError("checkpoint incompatible with this config")
    (count,) = struct.unpack_from("<I", blob, 38)
    off = 42
    blobs = {}
    for _ in range(count):
        (klen,) = struct.unpack_from("<I", blob, off)
        off += 4
        key = blob[off : off + klen].decode()
        off += klen
        (blen,) = struct.unpack_from("<I", blob, off)
        off += 4
        blobs[key] = blob[off : off + blen]
        off += blen
    load_agent_blobs(agent, blobs)


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainResult:
    out_dir: Path
    checkpoint: Path
    metrics_path: Path
    metrics: List[EpisodeMetrics]


def run_training(cfg: TrainConfig, out_dir: Optional[str] = None) -> TrainResult:
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = build_environment(cfg)
    a = load_task_automaton(cfg)
    task_kind, success_states = resolve_task_kind(cfg, a)
    flt = build_filter(env, cfg)
    sink = designated_sink(a, cfg.guiding)
    agent = ModularAgent(a, env, cfg.rl, seed=cfg.seed)
    rng_env = np.random.default_rng(cfg.seed + 1)
    rng_gp = np.random.default_rng(cfg.seed + 2)
    hyper = gpmod.GpHyper(cfg.gp.sigma_f, cfg.gp.lengthscale, cfg.gp.sigma_noise)
    gp_buffer: List[gpmod.Measurement] = []

    if flt is not None and cfg.gp_warmup_steps > 0:
        s = env.init_sampler(rng_env)
        for _ in range(cfg.gp_warmup_steps):
            a_rl = rng_env.uniform(env.a_low, env.a_high) * 0.1
            a_safe, _, _ = flt.filter(s, a_rl)
            s_next = step_dynamics(env, s, a_safe, rng=rng_env)
            gp_buffer.append(gpmod.residual_from_transition(env, s, a_safe, s_next, env.dt, -1))
            s = s_next
        if cfg.gp.enabled:
            flt.gp_model = gpmod.fit(gpmod.subsample(gp_buffer, cfg.gp.n_max, rng_gp), hyper)

    rows: List[EpisodeMetrics] = []
    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w") as fh:
        fh.write(metrics_header(env.state_dim) + "\n")
        for episode in range(cfg.episodes):
            metrics = _run_episode(
                cfg, env, a, flt, agent, sink, task_kind, success_states,
                rng_env, gp_buffer, episode, explore=True, train=True,
            )
            if flt is not None and cfg.gp.enabled and cfg.gp.refit_every_episode:
                if cfg.gp.grid_search and episode == 0 and gp_buffer:
                    hyper = gpmod.grid_search_hyper(
                        gpmod.subsample(gp_buffer, cfg.gp.n_max, rng_gp)
                    )
                flt.gp_model = gpmod.fit(
                    gpmod.subsample(gp_buffer, cfg.gp.n_max, rng_gp), hyper
                )
            agent.decay_noise()
            rows.append(metrics)
            fh.write(metrics.csv_row() + "\n")

    ckpt = out / "ckpt.bin"
    save_checkpoint(ckpt, agent, env, a)
    (out / "config.echo").write_text(cfg.raw_text or _render_config(cfg))
    return TrainResult(out, ckpt, metrics_path, rows)


def _render_config(cfg: TrainConfig) -> str:
    return repr(dataclasses.asdict(cfg))


def _run_episode(
    cfg: TrainConfig,
    env: EnvSpec,
    a: Ldgba,
    flt: Optional[SafetyFilter],
    agent: ModularAgent,
    sink: Optional[str],
    task_kind: str,
    success_states: frozenset,
    rng_env: np.random.Generator,
    gp_buffer: Optional[List[gpmod.Measurement]],
    episode: int,
    explore: bool,
    train: bool,
    recorder: Optional[List[str]] = None,
) -> EpisodeMetrics:
    from .envs import label as env_label

    p = cfg.reward
    s0 = env.init_sampler(rng_env)
    x = initial_product_state(a, s0)
    shaping = initial_shaping(a)
    trace: List[StepInfo] = []
    base_ret = shaped_ret = 0.0
    interventions = rounds = 0
    max_abs = np.zeros(env.state_dim)
    h_min = math.inf
    steps = 0
    for _ in range(cfg.max_steps):
        _, a_rl = select_action(agent, x, explore=explore)
        if flt is not None:
            a_safe, a_pt, _ = flt.filter(x.s, a_rl)
        else:
            a_safe, a_pt = a_rl, np.zeros(env.action_dim)
        try:
            x_next = product_step(env, a, x, Continuous(a_safe), rng=rng_env)
        except EnvError as exc:
            warnings.warn(f"episode {episode} aborted: {exc}", stacklevel=2)
            break
        steps += 1
        r_base = base_reward(x, a, p)
        r_shaped = shaped_reward(x, x_next, a, shaping, p)
        tr = Transition(x, a_rl, a_safe, x_next, r_shaped)
        if cfg.guiding and train:
            tr = guide_step(tr, a_pt, a, p, sink)
        intervened = float(np.linalg.norm(a_pt)) > p.zero_tol
        interventions += int(intervened)
        terminal = tr.terminal or (
            tr.x_next.q in a.state_index and is_unsafe(a, tr.x_next)
        )
        if train:
            next_q = tr.x_next.q if tr.x_next.q in a.state_index else x.q
            store(
                agent,
                x.q,
                agent.encode(x),
                a_rl,
                tr.reward,
                discount(x, a, p),
                agent.encode(replace(tr.x_next, q=next_q)),
                next_q,
                terminal,
            )
            if gp_buffer is not None:
                gp_buffer.append(
                    gpmod.residual_from_transition(env, x.s, a_safe, x_next.s, env.dt, episode)
                )
            if steps % cfg.update_every == 0:
                for _ in range(cfg.rl.updates_per_step):
                    update_module(agent, x.q)
        if recorder is not None:
            cells = [repr(round(steps * env.dt, 10))]
            cells.extend(repr(float(v)) for v in x.s)
            cells.extend(repr(float(v)) for v in a_safe)
            cells.append(";".join(sorted(env_label(env, x.s))))
            recorder.append(",".join(cells))
        shaping = shaping_update(tr.x_next.q, shaping, tr.x_next.round_flag)
        base_ret += r_base
        shaped_ret += tr.reward
        rounds += int(x_next.round_flag)
        max_abs = np.maximum(max_abs, np.abs(x_next.s))
        h_vals = barrier_values(env, x_next.s)
        if h_vals.size:
            h_min = min(h_min, float(np.min(h_vals)))
        trace.append(
            StepInfo(
                q=tr.x_next.q,
                round_flag=tr.x_next.round_flag,
                unsafe=tr.x_next.q == VIRTUAL_SINK
                or (tr.x_next.q in a.state_index and is_unsafe(a, tr.x_next)),
            )
        )
        x = tr.x_next
        if terminal:
            break
    # Guided terminations appear in the trace as unsafe entries, so they
    # count against task success; physical safety is judged on the barriers.
    return EpisodeMetrics(
        episode=episode,
        steps=steps,
        base_return=base_ret,
        shaped_return=shaped_ret,
        interventions=interventions,
        rounds=rounds,
        max_abs_state=max_abs,
        safe=bool(h_min == math.inf or h_min >= 0.0),
        success=success_of_episode(trace, task_kind, cfg.rounds_required, success_states),
    )


# ---------------------------------------------------------------------------
# Evaluation


def wilson_interval(successes: int, n: int, z: float = 1.96) -> Tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    phat = successes / n
    denom = 1 + z**2 / n
    center = (phat + z**2 / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z**2 / (4 * n**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def evaluate(
    checkpoint_path, cfg: TrainConfig, n_runs: int, dump_dir: Optional[str] = None
) -> Dict[str, object]:
    """Deterministic-policy rollouts: success/safety rates with Wilson CIs.

    ``dump_dir`` writes one trajectory CSV per run (t, state, action, labels).
    """
    if n_runs < 1:
        raise TrainerError("n_runs must be positive")
    env = build_environment(cfg)
    a = load_task_automaton(cfg)
    task_kind, success_states = resolve_task_kind(cfg, a)
    flt = build_filter(env, cfg)
    agent = ModularAgent(a, env, cfg.rl, seed=cfg.seed)
    load_checkpoint(checkpoint_path, agent, env, a)
    if dump_dir is not None:
        Path(dump_dir).mkdir(parents=True, exist_ok=True)

    hyper = gpmod.GpHyper(cfg.gp.sigma_f, cfg.gp.lengthscale, cfg.gp.sigma_noise)
    successes = safe_count = 0
    returns = []
    for run in range(n_runs):
        rng = np.random.default_rng(cfg.seed + 10_000 + run)
        gp_buffer: List[gpmod.Measurement] = []
        recorder: Optional[List[str]] = [] if dump_dir is not None else None
        metrics = _run_episode(
            cfg, env, a, flt, agent, None, task_kind, success_states,
            rng, gp_buffer, episode=run, explore=False, train=False,
            recorder=recorder,
        )
        if recorder is not None:
            header = (
                ["t"]
                + [f"s_{i+1}" for i in range(env.state_dim)]
                + [f"a_{i+1}" for i in range(env.action_dim)]
                + ["labels"]
            )
            (Path(dump_dir) / f"run_{run:03d}.csv").write_text(
                "\n".join([",".join(header)] + recorder) + "\n"
            )
        if flt is not None and cfg.gp.enabled and gp_buffer:
            flt.gp_model = gpmod.fit(gpmod.subsample(gp_buffer, cfg.gp.n_max, rng), hyper)
        successes += int(metrics.success)
        safe_count += int(metrics.safe)
        returns.append(metrics.base_return)
    lo, hi = wilson_interval(successes, n_runs)
    s_lo, s_hi = wilson_interval(safe_count, n_runs)
    return {
        "n_runs": n_runs,
        "success_rate": successes / n_runs,
        "success_ci": [lo, hi],
        "safety_rate": safe_count / n_runs,
        "safety_ci": [s_lo, s_hi],
        "mean_return": float(np.mean(returns)),
    }
