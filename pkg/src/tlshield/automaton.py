"""Limit-deterministic generalized Buchi automata with frontier tracking.

An :class:`Ldgba` carries a deterministic part whose transitions are total
(checked exhaustively over the alphabet), one or more accepting sets inside
the deterministic part, optional epsilon edges out of the nondeterministic
part, and an optional declared set of unsafe sink states.

The frontier embedding augments a state ``q`` with a bitmask ``T`` of
accepting-set indices still unvisited in the current round.  Visiting a set
removes it; clearing the last one completes a round (``B = true``) and
resets the frontier.  Acceptance of the embedded machine is judged against
the frontier held *on arrival*, before the arriving state's own removal.

Text format (line oriented, ``#`` comments)::

    aps: green yellow unsafe
    states: q0 q1 q2 qbad
    initial: q0
    deterministic: q0 q1 q2 qbad
    accepting: F1 = q1 ; F2 = q2
    unsafe: qbad
    trans: q0 -> q1 : green & !unsafe
    eps:   qn -> qd
"""

from __future__ import annotations

import itertools
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Sequence, Tuple

import numpy as np

from .ltl import (
    Formula,
    LassoWord,
    Letter,
    LtlError,
    atomic_props,
    eval_boolean,
    format_formula,
    is_boolean,
    parse_ltl,
)

MAX_APS = 16


class AutomatonError(ValueError):
    pass


def full_frontier(f: int) -> int:
    return (1 << f) - 1


def frontier_indices(mask: int) -> FrozenSet[int]:
    """1-based accepting-set indices present in a frontier bitmask."""
    return frozenset(j + 1 for j in range(mask.bit_length()) if mask >> j & 1)


def frontier_mask(indices: Iterable[int]) -> int:
    mask = 0
    for j in indices:
        mask |= 1 << (j - 1)
    return mask


class ELdgbaState(NamedTuple):
    q: str
    frontier: int
    round_flag: bool = False


class Ldgba:
    """Immutable LDGBA with precompiled deterministic transition tables."""

    def __init__(
        self,
        aps: Sequence[str],
        states: Sequence[str],
        initial: str,
        deterministic: Iterable[str],
        transitions: Sequence[Tuple[str, Formula, str]],
        accepting: Sequence[Iterable[str]],
        eps_transitions: Sequence[Tuple[str, str]] = (),
        unsafe: Iterable[str] = (),
    ):
        if len(aps) > MAX_APS:
            raise AutomatonError(f"at most {MAX_APS} atomic propositions supported")
        if len(set(aps)) != len(aps):
            raise AutomatonError("duplicate atomic proposition")
        if len(set(states)) != len(states):
            raise AutomatonError("duplicate state name")
        self.aps: Tuple[str, ...] = tuple(aps)
        self.states: Tuple[str, ...] = tuple(states)
        self.state_index: Dict[str, int] = {q: i for i, q in enumerate(self.states)}
        if initial not in self.state_index:
            raise AutomatonError(f"initial state {initial!r} not declared")
        self.initial = initial
        det = frozenset(deterministic)
        unknown = det - set(self.states)
        if unknown:
            raise AutomatonError(f"deterministic states not declared: {sorted(unknown)}")
        self.deterministic: FrozenSet[str] = det
        self.nondeterministic: FrozenSet[str] = frozenset(self.states) - det

        self.transitions: Tuple[Tuple[str, Formula, str], ...] = tuple(transitions)
        for src, guard, dst in self.transitions:
            if src not in self.state_index or dst not in self.state_index:
                raise AutomatonError(f"transition uses undeclared state: {src} -> {dst}")
            if not is_boolean(guard):
                raise AutomatonError(f"guard on {src} -> {dst} contains temporal operators")
            extra = atomic_props(guard) - set(self.aps)
            if extra:
                raise AutomatonError(f"guard on {src} -> {dst} uses unknown APs {sorted(extra)}")

        self.accepting: Tuple[FrozenSet[str], ...] = tuple(frozenset(s) for s in accepting)
        if len(self.accepting) < 1:
            raise AutomatonError("at least one accepting set required")
        for j, fset in enumerate(self.accepting, start=1):
            outside = fset - det
            if outside:
                raise AutomatonError(
                    f"accepting set F{j} contains non-deterministic states {sorted(outside)}"
                )
            if fset - set(self.states):
                raise AutomatonError(f"accepting set F{j} uses undeclared states")

        self.eps_transitions: Tuple[Tuple[str, str], ...] = tuple(eps_transitions)
        for src, dst in self.eps_transitions:
            if src not in self.state_index or dst not in self.state_index:
                raise AutomatonError(f"eps transition uses undeclared state: {src} -> {dst}")
            if src in det:
                raise AutomatonError(f"eps transition from deterministic state {src!r}")

        self.n_letters = 1 << len(self.aps)
        self._acc_mask = np.zeros(len(self.states), dtype=np.int64)
        for j, fset in enumerate(self.accepting):
            for q in fset:
                self._acc_mask[self.state_index[q]] |= 1 << j

        self._det_table = self._build_det_table()
        self._sinks = self._compute_sinks()

        declared = frozenset(unsafe)
        not_sink = declared - self._sinks
        if not_sink:
            raise AutomatonError(f"declared unsafe states are not sinks: {sorted(not_sink)}")
        if declared - set(self.states):
            raise AutomatonError("declared unsafe states must be declared states")
        self.unsafe: FrozenSet[str] = declared

    # -- construction helpers -------------------------------------------------

    def _build_det_table(self) -> np.ndarray:
        """(n_states, n_letters) successor table; -1 where undefined.

        Verifies determinism and totality of the deterministic part by
        exhaustive enumeration of the alphabet.
        """
        n = len(self.states)
        table = np.full((n, self.n_letters), -1, dtype=np.int64)
        guards_by_src: Dict[str, List[Tuple[Formula, str]]] = {}
        for src, guard, dst in self.transitions:
            guards_by_src.setdefault(src, []).append((guard, dst))
        for q in self.states:
            qi = self.state_index[q]
            for letter_idx in range(self.n_letters):
                letter = self.letter_of_index(letter_idx)
                hits = [dst for guard, dst in guards_by_src.get(q, []) if eval_boolean(guard, letter)]
                if q in self.deterministic:
                    if len(hits) == 0:
                        raise AutomatonError(
                            f"totality violation: state {q!r} has no transition on letter "
                            f"{set(letter) or '{}'}"
                        )
                    if len(hits) > 1:
                        raise AutomatonError(
                            f"determinism violation: state {q!r} has {len(hits)} transitions "
                            f"on letter {set(letter) or '{}'}"
                        )
                    if hits[0] not in self.deterministic:
                        raise AutomatonError(
                            f"deterministic state {q!r} leaves Q_D on letter "
                            f"{set(letter) or '{}'} (to {hits[0]!r})"
                        )
                    table[qi, letter_idx] = self.state_index[hits[0]]
                elif len(hits) == 1:
                    table[qi, letter_idx] = self.state_index[hits[0]]
        return table

    def _compute_sinks(self) -> FrozenSet[str]:
        n = len(self.states)
        succ: List[set] = [set() for _ in range(n)]
        for qi in range(n):
            for target in self._det_table[qi]:
                if target >= 0:
                    succ[qi].add(int(target))
        for src, guard, dst in self.transitions:
            if src not in self.deterministic:
                if any(
                    eval_boolean(guard, self.letter_of_index(i)) for i in range(self.n_letters)
                ):
                    succ[self.state_index[src]].add(self.state_index[dst])
        for src, dst in self.eps_transitions:
            succ[self.state_index[src]].add(self.state_index[dst])

        sccs = _tarjan(n, succ)
        full = full_frontier(len(self.accepting))
        good_states: set[int] = set()
        for comp in sccs:
            has_cycle = len(comp) > 1 or any(v in succ[v] for v in comp)
            if not has_cycle:
                continue
            mask = 0
            for v in comp:
                mask |= int(self._acc_mask[v])
            if mask == full:
                good_states.update(comp)
        # States that can reach a good SCC are not sinks.
        pred: List[set] = [set() for _ in range(n)]
        for v in range(n):
            for w in succ[v]:
                pred[w].add(v)
        can_reach = set(good_states)
        stack = list(good_states)
        while stack:
            v = stack.pop()
            for u in pred[v]:
                if u not in can_reach:
                    can_reach.add(u)
                    stack.append(u)
        return frozenset(self.states[i] for i in range(n) if i not in can_reach)

    # -- alphabet -------------------------------------------------------------

    def letter_of_index(self, idx: int) -> Letter:
        return frozenset(ap for b, ap in enumerate(self.aps) if idx >> b & 1)

    def index_of_letter(self, letter: Iterable[str]) -> int:
        members = frozenset(letter)
        extra = members - set(self.aps)
        if extra:
            raise AutomatonError(f"letter uses unknown APs {sorted(extra)}")
        idx = 0
        for b, ap in enumerate(self.aps):
            if ap in members:
                idx |= 1 << b
        return idx

    # -- basic accessors -------------------------------------------------------

    @property
    def n_accepting(self) -> int:
        return len(self.accepting)

    def acc_mask(self, q: str) -> int:
        """Bitmask of accepting sets containing ``q`` (bit j-1 for F_j)."""
        return int(self._acc_mask[self.state_index[q]])

    def det_table(self) -> np.ndarray:
        return self._det_table

    def __eq__(self, other) -> bool:
        return isinstance(other, Ldgba) and serialize_automaton(self) == serialize_automaton(other)

    def __hash__(self):
        return hash(serialize_automaton(self))

    def __repr__(self):
        return (
            f"Ldgba({len(self.states)} states, {len(self.aps)} APs, "
            f"{len(self.accepting)} accepting sets)"
        )


def _tarjan(n: int, succ: List[set]) -> List[List[int]]:
    """Iterative Tarjan SCC; returns components as lists of vertex ids."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: List[int] = []
    sccs: List[List[int]] = []
    counter = itertools.count()
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, iter(sorted(succ[root])))]
        index[root] = low[root] = next(counter)
        stack.append(root)
        on_stack[root] = True
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if index[w] == -1:
                    index[w] = low[w] = next(counter)
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, iter(sorted(succ[w]))))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                sccs.append(comp)
    return sccs


# ---------------------------------------------------------------------------
# Parsing and serialization


def parse_automaton(text: str) -> Ldgba:
    aps: List[str] = []
    states: List[str] = []
    initial: str | None = None
    deterministic: List[str] = []
    accepting: List[Tuple[int, List[str]]] = []
    unsafe: List[str] = []
    transitions: List[Tuple[str, Formula, str]] = []
    eps: List[Tuple[str, str]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise AutomatonError(f"line {lineno}: expected 'key: value'")
        key, _, value = line.partition(":")
        key = key.strip()
        value = value.strip()
        if key == "aps":
            aps = value.split()
        elif key == "states":
            states = value.split()
        elif key == "initial":
            initial = value
        elif key == "deterministic":
            deterministic = value.split()
        elif key == "accepting":
            for chunk in value.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                name, _, members = chunk.partition("=")
                name = name.strip()
                if not (name.startswith("F") and name[1:].isdigit()):
                    raise AutomatonError(f"line {lineno}: accepting set name {name!r} (want F<k>)")
                accepting.append((int(name[1:]), members.split()))
        elif key == "unsafe":
            unsafe = value.split()
        elif key == "trans":
            arrow, _, guard_text = value.partition(":")
            if "->" not in arrow:
                raise AutomatonError(f"line {lineno}: expected 'src -> dst : guard'")
            src, _, dst = arrow.partition("->")
            try:
                guard = parse_ltl(guard_text.strip() or "true", aps or None)
            except LtlError as exc:
                raise AutomatonError(f"line {lineno}: bad guard: {exc}") from exc
            transitions.append((src.strip(), guard, dst.strip()))
        elif key == "eps":
            if "->" not in value:
                raise AutomatonError(f"line {lineno}: expected 'src -> dst'")
            src, _, dst = value.partition("->")
            eps.append((src.strip(), dst.strip()))
        else:
            raise AutomatonError(f"line {lineno}: unknown key {key!r}")

    if initial is None:
        raise AutomatonError("missing 'initial:' line")
    if not states:
        raise AutomatonError("missing 'states:' line")
    if not accepting:
        raise AutomatonError("missing 'accepting:' line")
    accepting.sort(key=lambda kv: kv[0])
    expected = list(range(1, len(accepting) + 1))
    if [k for k, _ in accepting] != expected:
        raise AutomatonError("accepting sets must be named F1..Ff without gaps")
    return Ldgba(
        aps=aps,
        states=states,
        initial=initial,
        deterministic=deterministic,
        transitions=transitions,
        accepting=[members for _, members in accepting],
        eps_transitions=eps,
        unsafe=unsafe,
    )


def serialize_automaton(a: Ldgba) -> str:
    lines = [
        "aps: " + " ".join(a.aps),
        "states: " + " ".join(a.states),
        "initial: " + a.initial,
        "deterministic: " + " ".join(q for q in a.states if q in a.deterministic),
        "accepting: "
        + " ; ".join(
            f"F{j} = " + " ".join(q for q in a.states if q in fset)
            for j, fset in enumerate(a.accepting, start=1)
        ),
    ]
    if a.unsafe:
        lines.append("unsafe: " + " ".join(q for q in a.states if q in a.unsafe))
    trans = sorted(
        a.transitions,
        key=lambda t: (a.state_index[t[0]], a.state_index[t[2]], format_formula(t[1])),
    )
    for src, guard, dst in trans:
        lines.append(f"trans: {src} -> {dst} : {format_formula(guard)}")
    for src, dst in sorted(a.eps_transitions, key=lambda e: (a.state_index[e[0]], a.state_index[e[1]])):
        lines.append(f"eps: {src} -> {dst}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Stepping


def step(a: Ldgba, q: str, letter: Iterable[str]) -> str:
    """Unique deterministic successor of ``q`` on ``letter``; ``q`` must be in Q_D."""
    if q not in a.deterministic:
        raise AutomatonError(f"step() called on nondeterministic state {q!r}")
    target = a._det_table[a.state_index[q], a.index_of_letter(letter)]
    return a.states[int(target)]


def frontier_update(a: Ldgba, q_next: str, frontier: int) -> Tuple[int, bool]:
    """Remove-then-reset frontier update for an arrival at ``q_next``.

    Removing the arriving state's accepting sets from the frontier; if that
    empties it the round is complete (``B = true``) and the frontier resets
    to all sets minus the arrival's (to the full set when the arrival covers
    everything, so the frontier is never empty).
    """
    hit = a.acc_mask(q_next)
    if hit == 0:
        return frontier, False
    remaining = frontier & ~hit
    if remaining:
        return remaining, False
    full = full_frontier(a.n_accepting)
    reset = full & ~hit
    return (reset if reset else full), True


def embedded_step(a: Ldgba, x: ELdgbaState, letter: Iterable[str]) -> ELdgbaState:
    """Advance the frontier-embedded machine one deterministic step.

    The returned state carries the frontier *after* the arrival's update;
    judge the arrival's acceptance against the pre-update frontier ``x.frontier``
    (see :func:`is_accepting`).
    """
    q_next = step(a, x.q, letter)
    frontier, round_flag = frontier_update(a, q_next, x.frontier)
    return ELdgbaState(q_next, frontier, round_flag)


def initial_embedded(a: Ldgba) -> ELdgbaState:
    return ELdgbaState(a.initial, full_frontier(a.n_accepting), False)


def is_accepting(a: Ldgba, x: ELdgbaState) -> bool:
    """Whether ``x`` is an accepting embedded state: q in F_j with j still in T.

    Callers judging an arrival must pass the frontier held before that
    arrival's own removal.
    """
    return bool(a.acc_mask(x.q) & x.frontier)


# ---------------------------------------------------------------------------
# Structural analysis


def sink_states(a: Ldgba) -> FrozenSet[str]:
    """States from which no run can satisfy the generalized Buchi condition."""
    return a._sinks


def unsafe_states(a: Ldgba, declared: Iterable[str]) -> FrozenSet[str]:
    """Validate that every declared unsafe state is a sink; return the set."""
    declared = frozenset(declared)
    bad = declared - a._sinks
    if bad:
        raise AutomatonError(f"declared unsafe states are not sinks: {sorted(bad)}")
    return declared


def surely_accepting_states(a: Ldgba) -> FrozenSet[str]:
    """States from which every infinite continuation is accepting.

    Holds exactly when, for every accepting set F_j, the subgraph reachable
    from the state with F_j removed is acyclic (no run can avoid F_j
    forever), for all j.
    """
    n = len(a.states)
    succ: List[set] = [set() for _ in range(n)]
    for qi in range(n):
        for target in a._det_table[qi]:
            if target >= 0:
                succ[qi].add(int(target))
    for src, dst in a.eps_transitions:
        succ[a.state_index[src]].add(a.state_index[dst])

    result = []
    for q in a.states:
        qi = a.state_index[q]
        reach = {qi}
        stack = [qi]
        while stack:
            v = stack.pop()
            for w in succ[v]:
                if w not in reach:
                    reach.add(w)
                    stack.append(w)
        ok = True
        for j in range(a.n_accepting):
            keep = [v for v in reach if not (int(a._acc_mask[v]) >> j & 1)]
            keep_set = set(keep)
            sub = {v: succ[v] & keep_set for v in keep}
            if _has_cycle(sub):
                ok = False
                break
        if ok:
            result.append(q)
    return frozenset(result)


def _has_cycle(graph: Dict[int, set]) -> bool:
    indeg = {v: 0 for v in graph}
    for v, outs in graph.items():
        for w in outs:
            indeg[w] += 1
    queue = [v for v, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        for w in graph[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    return seen != len(graph)


# ---------------------------------------------------------------------------
# Lasso acceptance


def _require_fully_deterministic(a: Ldgba):
    if a.nondeterministic:
        raise AutomatonError(
            "lasso acceptance requires a fully deterministic automaton "
            f"(nondeterministic states: {sorted(a.nondeterministic)})"
        )


def lasso_accepts(a: Ldgba, w: LassoWord) -> bool:
    """Generalized Buchi acceptance of the lasso word on the plain machine."""
    _require_fully_deterministic(a)
    q = a.initial
    for letter in w.prefix:
        q = step(a, q, letter)
    seen: Dict[str, int] = {}
    rep_masks: List[int] = []
    while q not in seen:
        seen[q] = len(rep_masks)
        mask = 0
        for letter in w.cycle:
            q = step(a, q, letter)
            mask |= a.acc_mask(q)
        rep_masks.append(mask)
    first = seen[q]
    periodic = 0
    for m in rep_masks[first:]:
        periodic |= m
    return periodic == full_frontier(a.n_accepting)


def lasso_accepts_embedded(a: Ldgba, w: LassoWord) -> bool:
    """Acceptance of the frontier-embedded machine on the lasso word.

    Runs the embedding with entry frontiers (arrival judged before its own
    removal) and checks that every embedded accepting set is met within the
    detected period.
    """
    _require_fully_deterministic(a)
    full = full_frontier(a.n_accepting)
    # The frontier the *next* state is entered with equals the current
    # state's post-update frontier.
    q, entry = a.initial, full
    for letter in w.prefix:
        live, _ = frontier_update(a, q, entry)
        q = step(a, q, letter)
        entry = live
    seen: Dict[Tuple[str, int], int] = {}
    rep_masks: List[int] = []
    while (q, entry) not in seen:
        seen[(q, entry)] = len(rep_masks)
        mask = 0
        for letter in w.cycle:
            live, _ = frontier_update(a, q, entry)
            q = step(a, q, letter)
            entry = live
            mask |= a.acc_mask(q) & entry
        rep_masks.append(mask)
    first = seen[(q, entry)]
    periodic = 0
    for m in rep_masks[first:]:
        periodic |= m
    return periodic == full


# ---------------------------------------------------------------------------
# Batch tables (consumed by equiv and oracle)


class MachineTables(NamedTuple):
    """Dense transition/acceptance tables for vectorized lasso runs."""

    n_states: int
    initial: int
    trans: np.ndarray  # (n_states, n_letters) int
    acc: np.ndarray  # (n_states,) int bitmask of accepting sets met at the state
    full_mask: int


def plain_tables(a: Ldgba) -> MachineTables:
    _require_fully_deterministic(a)
    return MachineTables(
        n_states=len(a.states),
        initial=a.state_index[a.initial],
        trans=a._det_table.copy(),
        acc=a._acc_mask.copy(),
        full_mask=full_frontier(a.n_accepting),
    )


def embedded_tables(a: Ldgba) -> MachineTables:
    """Entry-frontier embedded machine as dense tables.

    Embedded states are pairs ``(q, T)`` where ``T`` is the frontier the
    state was entered with; such a state meets accepting set j exactly when
    ``q`` is in F_j and j is still in T.  The successor's entry frontier is
    this state's post-update frontier, so acceptance is a per-state property
    and the generic lasso runner applies unchanged.
    """
    _require_fully_deterministic(a)
    f = a.n_accepting
    n_masks = 1 << f
    nq = len(a.states)
    n_emb = nq * n_masks

    def emb_index(qi: int, mask: int) -> int:
        return qi * n_masks + mask

    trans = np.full((n_emb, a.n_letters), -1, dtype=np.int64)
    acc = np.zeros(n_emb, dtype=np.int64)
    for qi, q in enumerate(a.states):
        for mask in range(n_masks):
            idx = emb_index(qi, mask)
            acc[idx] = int(a._acc_mask[qi]) & mask
            live, _ = frontier_update(a, q, mask)
            for letter_idx in range(a.n_letters):
                target = int(a._det_table[qi, letter_idx])
                trans[idx, letter_idx] = emb_index(target, live)
    return MachineTables(
        n_states=n_emb,
        initial=emb_index(a.state_index[a.initial], full_frontier(f)),
        trans=trans,
        acc=acc,
        full_mask=full_frontier(f),
    )
