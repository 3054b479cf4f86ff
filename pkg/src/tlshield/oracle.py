"""Exact analysis of finite models: product construction, value iteration
with state-dependent discounting, end-component decomposition, and induced
Markov-chain satisfaction probabilities.

Product states here carry the frontier the automaton state was *entered
with*, so accepting membership (and hence the reward and discount) is a
pure state function; this bookkeeping is isomorphic to the live-frontier
convention used by the on-the-fly product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .automaton import Ldgba, frontier_update, full_frontier, sink_states

_ARGMAX_TOL = 1e-9


class OracleError(RuntimeError):
    pass


@dataclass
class FiniteMdp:
    """Finite MDP with per-state action lists of (successor, probability) rows."""

    n_states: int
    transitions: List[List[List[Tuple[int, float]]]]
    labels: List[FrozenSet[str]]
    initial: int
    state_names: Optional[List[str]] = None

    def __post_init__(self):
        if len(self.transitions) != self.n_states or len(self.labels) != self.n_states:
            raise OracleError("transition/label tables must cover every state")
        for s, acts in enumerate(self.transitions):
            if not acts:
                raise OracleError(f"state {s} has no actions")
            for a, rows in enumerate(acts):
                total = sum(p for _, p in rows)
                if abs(total - 1.0) > 1e-12:
                    raise OracleError(f"probabilities at state {s} action {a} sum to {total}")

    def n_actions(self, s: int) -> int:
        return len(self.transitions[s])


# ---------------------------------------------------------------------------
# Gridworld fixtures


_MOVES = {"N": (0, 1), "E": (1, 0), "S": (0, -1), "W": (-1, 0)}
_LATERAL = {"N": ("W", "E"), "E": ("N", "S"), "S": ("E", "W"), "W": ("S", "N")}


def gridworld(
    width: int,
    height: int,
    labels: Dict[Tuple[int, int], Sequence[str]],
    slip: float = 0.2,
    initial: Tuple[int, int] = (0, 0),
) -> FiniteMdp:
    """Four-action grid with lateral slip; off-grid moves stay in place."""
    if not 0.0 <= slip < 1.0:
        raise OracleError("slip must lie in [0, 1)")

    def idx(x, y):
        return y * width + x

    def clip_move(x, y, move):
        dx, dy = _MOVES[move]
        nx, ny = x + dx, y + dy
        if 0 <= nx < width and 0 <= ny < height:
            return idx(nx, ny)
        return idx(x, y)

    transitions = []
    label_list = []
    for y in range(height):
        for x in range(width):
            acts = []
            for move in ("N", "E", "S", "W"):
                rows: Dict[int, float] = {}
                rows[clip_move(x, y, move)] = rows.get(clip_move(x, y, move), 0.0) + (1.0 - slip)
                for lat in _LATERAL[move]:
                    t = clip_move(x, y, lat)
                    rows[t] = rows.get(t, 0.0) + slip / 2.0
                acts.append(sorted(rows.items()))
            transitions.append(acts)
            label_list.append(frozenset(labels.get((x, y), ())))
    return FiniteMdp(
        n_states=width * height,
        transitions=transitions,
        labels=label_list,
        initial=idx(*initial),
        state_names=[f"({x},{y})" for y in range(height) for x in range(width)],
    )


def parse_gridworld(text: str) -> FiniteMdp:
    """Line format: width/height/slip/initial plus `label: name = x,y x,y ...`."""
    width = height = None
    slip = 0.2
    initial = (0, 0)
    labels: Dict[Tuple[int, int], List[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition(":")
        key, value = key.strip(), value.strip()
        if key == "width":
            width = int(value)
        elif key == "height":
            height = int(value)
        elif key == "slip":
            slip = float(value)
        elif key == "initial":
            x, y = value.split(",")
            initial = (int(x), int(y))
        elif key == "label":
            name, _, cells = value.partition("=")
            for cell in cells.split():
                x, y = cell.split(",")
                labels.setdefault((int(x), int(y)), []).append(name.strip())
        else:
            raise OracleError(f"line {lineno}: unknown key {key!r}")
    if width is None or height is None:
        raise OracleError("gridworld needs width and height")
    return gridworld(width, height, labels, slip, initial)


# ---------------------------------------------------------------------------
# Product construction


@dataclass
class FiniteProduct:
    mdp: FiniteMdp
    automaton: Ldgba
    states: List[Tuple[int, int, int]]  # (mdp state, automaton state index, entry frontier)
    index: Dict[Tuple[int, int, int], int]
    transitions: List[List[List[Tuple[int, float]]]]
    acc_mask: np.ndarray  # per product state: accepting sets it belongs to
    unsafe: np.ndarray
    initial: int

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_accepting(self) -> int:
        return self.automaton.n_accepting

    @property
    def full_mask(self) -> int:
        return full_frontier(self.automaton.n_accepting)

    def accepting(self) -> np.ndarray:
        return self.acc_mask != 0

    def n_actions(self, x: int) -> int:
        return len(self.transitions[x])


def build_product(mdp: FiniteMdp, a: Ldgba, cap: int = 10**6) -> FiniteProduct:
    """Enumerate the reachable product with frontier updates baked in."""
    if a.nondeterministic:
        raise OracleError("finite products require a fully deterministic automaton")
    ap_set = set(a.aps)
    unsafe_names = a.unsafe
    q_index = a.state_index
    init = (mdp.initial, q_index[a.initial], full_frontier(a.n_accepting))
    states: List[Tuple[int, int, int]] = [init]
    index = {init: 0}
    transitions: List[List[List[Tuple[int, float]]]] = []
    frontier_stack = [0]
    while frontier_stack:
        xi = frontier_stack.pop()
        while xi >= len(transitions):
            transitions.append(None)  # placeholder, filled below
        s, qi, entry = states[xi]
        q = a.states[qi]
        live, _ = frontier_update(a, q, entry)
        letter = frozenset(mdp.labels[s]) & ap_set
        q_next = a.states[int(a.det_table()[qi, a.index_of_letter(letter)])]
        qn_idx = q_index[q_next]
        acts = []
        for rows in mdp.transitions[s]:
            out = []
            for s_next, prob in rows:
                key = (s_next, qn_idx, live)
                if key not in index:
                    if len(states) >= cap:
                        raise OracleError(f"product exceeds state cap {cap}")
                    index[key] = len(states)
                    states.append(key)
                    frontier_stack.append(index[key])
                out.append((index[key], prob))
            acts.append(out)
        transitions[xi] = acts
    acc = np.zeros(len(states), dtype=np.int64)
    unsafe = np.zeros(len(states), dtype=bool)
    for i, (s, qi, entry) in enumerate(states):
        acc[i] = a.acc_mask(a.states[qi]) & entry
        unsafe[i] = a.states[qi] in unsafe_names
    return FiniteProduct(
        mdp=mdp,
        automaton=a,
        states=states,
        index=index,
        transitions=transitions,
        acc_mask=acc,
        unsafe=unsafe,
        initial=0,
    )


# ---------------------------------------------------------------------------
# Value iteration with state-dependent discounting


def _flatten(prod: FiniteProduct):
    """Dense (row per state-action) transition matrix and state offsets."""
    n = prod.n_states
    offsets = np.zeros(n + 1, dtype=np.int64)
    for x in range(n):
        offsets[x + 1] = offsets[x] + prod.n_actions(x)
    n_sa = int(offsets[-1])
    p_mat = np.zeros((n_sa, n))
    for x in range(n):
        for u, rows in enumerate(prod.transitions[x]):
            for x_next, prob in rows:
                p_mat[offsets[x] + u, x_next] += prob
    return p_mat, offsets


def _greedy(q_vals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    n = offsets.shape[0] - 1
    policy = np.zeros(n, dtype=np.int64)
    for x in range(n):
        qs = q_vals[offsets[x] : offsets[x + 1]]
        best = float(np.max(qs))
        policy[x] = int(np.nonzero(qs >= best - _ARGMAX_TOL)[0][0])
    return policy


def value_iteration(
    prod: FiniteProduct,
    r_f: float,
    gamma_f: float,
    tol: float = 1e-10,
    potential: Optional[np.ndarray] = None,
    unsafe_penalty: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Optimal values/policy for the accepting-state reward scheme.

    Runs Howard policy iteration (greedy improvement plus exact linear-solve
    evaluation), which reaches the fixed point of the Bellman operator far
    faster than plain sweeps at discounts near one; the returned values
    satisfy the Bellman equation to ``tol``.  ``potential`` adds the
    potential-based shaping term to every transition; ``unsafe_penalty``
    adds a per-step reward at unsafe sink states.  Ties in the greedy
    argmax break toward the lowest action index.
    """
    n = prod.n_states
    accepting = prod.accepting()
    r_state = np.where(accepting, 1.0 - r_f, 0.0) + np.where(prod.unsafe, unsafe_penalty, 0.0)
    gamma = np.where(accepting, r_f, gamma_f)
    p_mat, offsets = _flatten(prod)
    row_state = np.repeat(np.arange(n), np.diff(offsets))
    r_sa = r_state[row_state]
    if potential is not None:
        r_sa = r_sa + gamma[row_state] * (p_mat @ potential) - potential[row_state]

    policy = _greedy(r_sa, offsets)
    values = np.zeros(n)
    for _ in range(1000):
        rows = offsets[:-1] + policy
        p_pi = p_mat[rows]
        r_pi = r_sa[rows]
        values = np.linalg.solve(np.eye(n) - gamma[:, None] * p_pi, r_pi)
        q_vals = r_sa + gamma[row_state] * (p_mat @ values)
        new_policy = _greedy(q_vals, offsets)
        if np.array_equal(new_policy, policy):
            break
        policy = new_policy
    else:
        raise OracleError("policy iteration failed to converge")
    bellman = np.array(
        [np.max(q_vals[offsets[x] : offsets[x + 1]]) for x in range(n)]
    )
    if float(np.max(np.abs(bellman - values))) > tol:
        raise OracleError("Bellman residual above tolerance")
    return values, policy


def shaping_potential(prod: FiniteProduct, r_f: float, eta_phi: float) -> np.ndarray:
    """Static first-visit potential: eta*(1-r_f) on product states whose
    automaton component is neither initial nor a sink."""
    a = prod.automaton
    eligible = frozenset(a.states) - {a.initial} - sink_states(a)
    vec = np.zeros(prod.n_states)
    for i, (_, qi, _) in enumerate(prod.states):
        if a.states[qi] in eligible:
            vec[i] = eta_phi * (1.0 - r_f)
    return vec


# ---------------------------------------------------------------------------
# End components


def mec_decomposition(prod: FiniteProduct) -> List[Tuple[FrozenSet[int], Dict[int, Tuple[int, ...]]]]:
    """Maximal end components via iterated SCC pruning.

    Returns (state set, allowed actions per state) pairs with pairwise
    disjoint state sets.
    """
    n = prod.n_states
    allowed: Dict[int, set] = {x: set(range(prod.n_actions(x))) for x in range(n)}
    candidates = set(range(n))
    while True:
        succ = {x: set() for x in candidates}
        for x in candidates:
            for u in allowed[x]:
                for x_next, _ in prod.transitions[x][u]:
                    succ[x].add(x_next)
        comp_of = {}
        comps = _scc_sets(candidates, succ)
        for ci, comp in enumerate(comps):
            for x in comp:
                comp_of[x] = ci
        changed = False
        for x in list(candidates):
            keep = set()
            for u in allowed[x]:
                targets = {x_next for x_next, _ in prod.transitions[x][u]}
                if all(t in candidates and comp_of.get(t) == comp_of[x] for t in targets):
                    keep.add(u)
            if keep != allowed[x]:
                allowed[x] = keep
                changed = True
            if not keep:
                candidates.discard(x)
                changed = True
        if not changed:
            break
    mecs = []
    succ = {x: set() for x in candidates}
    for x in candidates:
        for u in allowed[x]:
            for x_next, _ in prod.transitions[x][u]:
                succ[x].add(x_next)
    for comp in _scc_sets(candidates, succ):
        has_cycle = len(comp) > 1 or any(x in succ[x] for x in comp)
        if not has_cycle:
            continue
        mecs.append(
            (frozenset(comp), {x: tuple(sorted(allowed[x])) for x in comp})
        )
    return mecs


def _scc_sets(nodes, succ) -> List[List[int]]:
    order: List[int] = []
    visited = set()
    for root in nodes:
        if root in visited:
            continue
        stack = [(root, iter(sorted(succ.get(root, ()))))]
        visited.add(root)
        while stack:
            v, it = stack[-1]
            advanced = False
            for w in it:
                if w in succ and w not in visited:
                    visited.add(w)
                    stack.append((w, iter(sorted(succ.get(w, ())))))
                    advanced = True
                    break
            if not advanced:
                order.append(v)
                stack.pop()
    # Kosaraju second pass on the reverse graph.
    pred: Dict[int, set] = {v: set() for v in nodes}
    for v in nodes:
        for w in succ.get(v, ()):
            if w in pred:
                pred[w].add(v)
    comps = []
    assigned = set()
    for v in reversed(order):
        if v in assigned:
            continue
        comp = [v]
        assigned.add(v)
        stack = [v]
        while stack:
            u = stack.pop()
            for w in pred[u]:
                if w not in assigned:
                    assigned.add(w)
                    comp.append(w)
                    stack.append(w)
        comps.append(comp)
    return comps


def amec_filter(mecs, prod: FiniteProduct):
    """End components that intersect every accepting set."""
    out = []
    for states_set, actions in mecs:
        mask = 0
        for x in states_set:
            mask |= int(prod.acc_mask[x])
        if mask == prod.full_mask:
            out.append((states_set, actions))
    return out


def max_sat_probability(prod: FiniteProduct, tol: float = 1e-10) -> np.ndarray:
    """Maximal probability of reaching an accepting end component, per state."""
    target = set()
    for states_set, _ in amec_filter(mec_decomposition(prod), prod):
        target |= states_set
    n = prod.n_states
    if not target:
        return np.zeros(n)
    p_mat, offsets = _flatten(prod)
    values = np.zeros(n)
    target_arr = np.zeros(n, dtype=bool)
    target_arr[list(target)] = True
    values[target_arr] = 1.0
    for _ in range(1_000_000):
        q_vals = p_mat @ values
        new_values = np.array(
            [np.max(q_vals[offsets[x] : offsets[x + 1]]) for x in range(n)]
        )
        new_values[target_arr] = 1.0
        if float(np.max(np.abs(new_values - values))) < min(tol, 1e-12):
            values = new_values
            break
        values = new_values
    # Exact refinement.  Greedy tie-breaking alone can pick value-optimal
    # actions that dawdle forever (reachability values do not penalize
    # delay), so build a proper policy by layered attraction: each state
    # picks an optimal action with positive probability of moving one layer
    # closer to the target, then evaluate it exactly.
    q_vals = p_mat @ values
    policy = np.zeros(n, dtype=np.int64)
    settled = target_arr.copy()
    current_layer = set(np.nonzero(target_arr)[0].tolist())
    while current_layer:
        next_layer = set()
        settled_idx = np.nonzero(settled)[0]
        for x in range(n):
            if settled[x]:
                continue
            qs = q_vals[offsets[x] : offsets[x + 1]]
            best = float(np.max(qs))
            for u in np.nonzero(qs >= best - _ARGMAX_TOL)[0]:
                mass = sum(
                    p for x_next, p in prod.transitions[x][int(u)] if settled[x_next]
                )
                if mass > 0:
                    policy[x] = int(u)
                    next_layer.add(x)
                    break
        for x in next_layer:
            settled[x] = True
        current_layer = next_layer
    return _reach_probability(prod, policy, target_arr)


def _induced_matrix(prod: FiniteProduct, policy: np.ndarray) -> np.ndarray:
    n = prod.n_states
    p_pi = np.zeros((n, n))
    for x in range(n):
        for x_next, prob in prod.transitions[x][int(policy[x])]:
            p_pi[x, x_next] += prob
    return p_pi


def _reach_probability(prod: FiniteProduct, policy: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Exact reach probabilities of ``target`` under a fixed policy."""
    n = prod.n_states
    p_pi = _induced_matrix(prod, policy)
    # States that cannot reach the target under the policy have probability 0.
    can_reach = target.copy()
    changed = True
    while changed:
        changed = False
        for x in range(n):
            if not can_reach[x] and np.any(p_pi[x][can_reach] > 0):
                can_reach[x] = True
                changed = True
    probs = np.zeros(n)
    probs[target] = 1.0
    solve_idx = np.nonzero(can_reach & ~target)[0]
    if solve_idx.size:
        sub = p_pi[np.ix_(solve_idx, solve_idx)]
        b = p_pi[np.ix_(solve_idx, np.nonzero(target)[0])].sum(axis=1)
        probs[solve_idx] = np.linalg.solve(np.eye(solve_idx.size) - sub, b)
    return probs


def recurrent_classes(prod: FiniteProduct, policy: np.ndarray) -> List[FrozenSet[int]]:
    """Bottom SCCs of the induced chain (its closed recurrent classes)."""
    n = prod.n_states
    p_pi = _induced_matrix(prod, policy)
    succ = {x: set(np.nonzero(p_pi[x] > 0)[0].tolist()) for x in range(n)}
    classes = []
    for comp in _scc_sets(set(range(n)), succ):
        comp_set = set(comp)
        if all(t in comp_set for x in comp for t in succ[x]):
            classes.append(frozenset(comp))
    return classes


def policy_sat_probability(prod: FiniteProduct, policy: np.ndarray) -> float:
    """Probability the induced chain satisfies the acceptance condition.

    Each recurrent class either meets every accepting set or none of them;
    the satisfaction probability equals the probability of absorption into
    the good classes.
    """
    good = np.zeros(prod.n_states, dtype=bool)
    for cls in recurrent_classes(prod, policy):
        mask = 0
        for x in cls:
            mask |= int(prod.acc_mask[x])
        if mask == prod.full_mask:
            for x in cls:
                good[x] = True
    probs = _reach_probability(prod, policy, good)
    return float(probs[prod.initial])


# ---------------------------------------------------------------------------
# Theorem suite over packaged fixtures


@dataclass
class CheckResult:
    fixture: str
    check: str
    passed: bool
    detail: str


def _load_descriptor(path) -> dict:
    import tomli

    with open(path, "rb") as fh:
        blob = tomli.load(fh)
    return blob["fixture"]


def run_theorem_suite(fixture_dir) -> List[CheckResult]:
    """Run the exact optimality checks described by each fixture descriptor.

    ``optimal_probability``: the satisfaction probability of the greedy
    value-iteration policy at (gamma_f, r_f) near one equals the maximal
    accepting-component reachability probability.  ``shaping_invariance``:
    potential shaping leaves the greedy policy argmax-identical.
    ``penalty_invariance``: per-step penalties on unsafe sinks leave the
    greedy policy's satisfaction probability maximal.
    ``recurrence_dichotomy``: recurrent classes of induced chains meet all
    accepting sets or none.
    """
    from pathlib import Path

    from .automaton import parse_automaton

    fixture_dir = Path(fixture_dir)
    results: List[CheckResult] = []
    descriptors = sorted(fixture_dir.glob("*.toml"))
    if not descriptors:
        raise OracleError(f"no fixture descriptors in {fixture_dir}")
    for desc_path in descriptors:
        desc = _load_descriptor(desc_path)
        name = desc_path.stem
        gamma_f = float(desc.get("gamma_f", 0.9999))
        r_f = float(desc.get("r_f", 0.99))
        eta_phi = float(desc.get("eta_phi", 1000.0))
        penalty = float(desc.get("unsafe_penalty", -1.0))

        def find(fname):
            local = fixture_dir / fname
            return local if local.exists() else fixture_dir.parent / fname

        mdp = parse_gridworld(find(desc["grid"]).read_text())
        a = parse_automaton(find(desc["automaton"]).read_text())
        prod = build_product(mdp, a)
        p_max = float(max_sat_probability(prod)[prod.initial])

        _, policy = value_iteration(prod, r_f=r_f, gamma_f=gamma_f)
        policies = {"greedy": policy}

        for check in desc.get("checks", []):
            if check == "optimal_probability":
                p_pol = policy_sat_probability(prod, policy)
                ok = abs(p_pol - p_max) <= 1e-6
                detail = f"policy={p_pol:.9f} max={p_max:.9f} states={prod.n_states}"
            elif check == "shaping_invariance":
                phi = shaping_potential(prod, r_f, eta_phi)
                _, shaped_policy = value_iteration(
                    prod, r_f=r_f, gamma_f=gamma_f, potential=phi
                )
                ok = bool(np.array_equal(shaped_policy, policy))
                n_diff = int(np.sum(shaped_policy != policy))
                detail = f"argmax differences={n_diff}/{prod.n_states}"
                policies["shaped"] = shaped_policy
            elif check == "penalty_invariance":
                _, pen_policy = value_iteration(
                    prod, r_f=r_f, gamma_f=gamma_f, unsafe_penalty=penalty
                )
                p_pol = policy_sat_probability(prod, pen_policy)
                ok = abs(p_pol - p_max) <= 1e-6
                detail = f"penalized policy={p_pol:.9f} max={p_max:.9f}"
                policies["penalized"] = pen_policy
            elif check == "recurrence_dichotomy":
                rng = np.random.default_rng(0)
                tested = dict(policies)
                for k in range(3):
                    tested[f"random{k}"] = np.array(
                        [rng.integers(prod.n_actions(x)) for x in range(prod.n_states)]
                    )
                ok = True
                bad = 0
                for pol in tested.values():
                    for cls in recurrent_classes(prod, pol):
                        mask = 0
                        for x in cls:
                            mask |= int(prod.acc_mask[x])
                        if mask not in (0, prod.full_mask):
                            ok = False
                            bad += 1
                detail = f"policies tested={len(tested)} mixed classes={bad}"
            else:
                ok, detail = False, f"unknown check {check!r}"
            results.append(CheckResult(name, check, ok, detail))
    return results
