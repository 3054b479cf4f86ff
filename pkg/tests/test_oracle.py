import itertools

import numpy as np
import pytest

from tlshield import data
from tlshield.oracle import (
    FiniteMdp,
    OracleError,
    amec_filter,
    build_product,
    gridworld,
    max_sat_probability,
    mec_decomposition,
    parse_gridworld,
    policy_sat_probability,
    recurrent_classes,
    run_theorem_suite,
    shaping_potential,
    value_iteration,
)


def single_state_mdp(label=()):
    return FiniteMdp(1, [[[(0, 1.0)]]], [frozenset(label)], 0)


def chain_mdp(n, label_last=("green",)):
    """Deterministic chain 0 -> 1 -> ... -> n-1 (absorbing), single action."""
    trans = [[[(min(i + 1, n - 1), 1.0)]] for i in range(n)]
    labels = [frozenset()] * (n - 1) + [frozenset(label_last)]
    return FiniteMdp(n, trans, labels, 0)


def brute_force_mecs(prod):
    """Exponential enumeration of end components; feasible for tiny models."""
    n = prod.n_states
    ecs = []
    for r in range(1, n + 1):
        for subset in itertools.combinations(range(n), r):
            sset = set(subset)
            allowed = {}
            ok = True
            for x in subset:
                stay = [
                    u
                    for u in range(prod.n_actions(x))
                    if all(t in sset for t, _ in prod.transitions[x][u])
                ]
                if not stay:
                    ok = False
                    break
                allowed[x] = stay
            if not ok:
                continue
            succ = {
                x: {t for u in allowed[x] for t, _ in prod.transitions[x][u]}
                for x in subset
            }
            if not _strongly_connected(sset, succ):
                continue
            has_cycle = len(sset) > 1 or any(x in succ[x] for x in sset)
            if has_cycle:
                ecs.append(frozenset(sset))
    return {e for e in ecs if not any(e < other for other in ecs)}


def _strongly_connected(nodes, succ):
    for start in nodes:
        seen = {start}
        stack = [start]
        while stack:
            v = stack.pop()
            for w in succ[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if seen != nodes:
            return False
    return True


# ---------------------------------------------------------------------------
# Product construction


def test_single_state_product_size():
    surveillance3 = data.load_automaton("surveillance3")
    prod = build_product(single_state_mdp(), surveillance3)
    assert prod.n_states <= 3 * 4
    # labels never hit a region: stays in the q0 slice
    assert all(prod.automaton.states[qi] == "q0" for _, qi, _ in prod.states)


def test_product_reaches_unsafe_sink():
    a = data.load_automaton("surveillance3_safe")
    mdp = chain_mdp(3, label_last=("unsafe",))
    prod = build_product(mdp, a)
    assert any(a.states[qi] == "qbad" for _, qi, _ in prod.states)
    assert prod.unsafe.any()


def test_probabilities_validated():
    with pytest.raises(OracleError):
        FiniteMdp(1, [[[(0, 0.5)]]], [frozenset()], 0)


# ---------------------------------------------------------------------------
# Value iteration


def test_accepting_selfloop_value():
    gfa = data.load_automaton("gfa")
    prod = build_product(single_state_mdp(label=("a",)), gfa)
    values, _ = value_iteration(prod, r_f=0.9, gamma_f=0.99)
    # at the accepting self-loop state the geometric series gives
    # (1 - r_f)/(1 - r_f) = 1 exactly; the initial state is one step earlier
    acc_idx = [i for i in range(prod.n_states) if prod.acc_mask[i]]
    assert len(acc_idx) == 1
    assert values[acc_idx[0]] == pytest.approx(1.0, abs=1e-9)
    assert values[prod.initial] == pytest.approx(0.99, abs=1e-9)


def test_no_path_to_accepting_zero_value():
    gfa = data.load_automaton("gfa")
    prod = build_product(single_state_mdp(label=()), gfa)
    values, _ = value_iteration(prod, r_f=0.9, gamma_f=0.99)
    assert values[prod.initial] == pytest.approx(0.0, abs=1e-12)


def test_two_state_chain_closed_form():
    # Chain: start -> goal(absorbing, labeled a).  The automaton sees the
    # goal label one step after arrival, so V(initial) = gamma_f^2 * 1.
    gfa = data.load_automaton("gfa")
    prod = build_product(chain_mdp(2, label_last=("a",)), gfa)
    values, _ = value_iteration(prod, r_f=0.9, gamma_f=0.99)
    assert values[prod.initial] == pytest.approx(0.99**2, abs=1e-9)


# ---------------------------------------------------------------------------
# MEC machinery


def test_fully_connected_single_mec():
    # A fully communicating grid yields one MEC: everything except the
    # transient full-frontier entry states (the frontier never resets to the
    # full set when no state sits in both accepting sets).
    surveillance3 = data.load_automaton("surveillance3")
    mdp = gridworld(2, 2, {(0, 0): ["green"], (1, 1): ["yellow"]}, slip=0.2)
    prod = build_product(mdp, surveillance3)
    mecs = mec_decomposition(prod)
    assert len(mecs) == 1
    recurrent = frozenset(
        i for i, (_, _, entry) in enumerate(prod.states) if entry != prod.full_mask
    )
    assert mecs[0][0] == recurrent


def test_absorbing_states_are_singleton_mecs():
    auntilb = data.load_automaton("auntilb")
    mdp = chain_mdp(3, label_last=("b",))
    prod = build_product(mdp, auntilb)
    mecs = mec_decomposition(prod)
    assert all(len(m[0]) == 1 for m in mecs)


def test_mec_matches_brute_force_on_random_models():
    rng = np.random.default_rng(0)
    gfa = data.load_automaton("gfa")
    for _ in range(10):
        n = int(rng.integers(2, 5))
        trans = []
        labels = []
        for s in range(n):
            acts = []
            for _ in range(int(rng.integers(1, 3))):
                targets = rng.choice(n, size=int(rng.integers(1, 3)), replace=False)
                probs = rng.dirichlet(np.ones(len(targets)))
                acts.append([(int(t), float(p)) for t, p in zip(targets, probs)])
            trans.append(acts)
            labels.append(frozenset(["a"]) if rng.random() < 0.4 else frozenset())
        mdp = FiniteMdp(n, trans, labels, 0)
        prod = build_product(mdp, gfa)
        if prod.n_states > 10:
            continue
        ours = {m[0] for m in mec_decomposition(prod)}
        brute = brute_force_mecs(prod)
        assert ours == brute


def test_amec_filter():
    surveillance3 = data.load_automaton("surveillance3")
    both = gridworld(2, 1, {(0, 0): ["green"], (1, 0): ["yellow"]}, slip=0.0)
    prod = build_product(both, surveillance3)
    mecs = mec_decomposition(prod)
    amecs = amec_filter(mecs, prod)
    assert len(amecs) >= 1
    # remove yellow: the MEC misses F2 and is dropped
    green_only = gridworld(2, 1, {(0, 0): ["green"]}, slip=0.0)
    prod2 = build_product(green_only, surveillance3)
    assert amec_filter(mec_decomposition(prod2), prod2) == []
    assert max_sat_probability(prod2)[prod2.initial] == 0.0


# ---------------------------------------------------------------------------
# Satisfaction probabilities


def test_corridor_reaches_amec_with_probability_one():
    gfa = data.load_automaton("gfa")
    prod = build_product(chain_mdp(4, label_last=("a",)), gfa)
    assert max_sat_probability(prod)[prod.initial] == pytest.approx(1.0, abs=1e-10)


def test_slippery_grid_matches_dense_solve():
    # Single action per state (drift east with slip): reach probability of the
    # accepting column solves a linear system we can write directly.
    gfa = data.load_automaton("gfa")
    mdp = gridworld(4, 3, {(3, y): ["a"] for y in range(3)}, slip=0.2)
    # keep only the E action to make the chain independent of optimization
    trans = [[acts[1]] for acts in mdp.transitions]
    chain = FiniteMdp(mdp.n_states, [[rows] for rows in (t[0] for t in trans)], mdp.labels, mdp.initial)
    prod = build_product(chain, gfa)
    probs = max_sat_probability(prod)
    # dense solve on the product chain
    n = prod.n_states
    p_mat = np.zeros((n, n))
    for x in range(n):
        for t, p in prod.transitions[x][0]:
            p_mat[x, t] += p
    target = np.array([bool(prod.acc_mask[x]) for x in range(n)])
    # states reaching 'a' column eventually do so with probability 1 here
    expected = np.zeros(n)
    expected[target] = 1.0
    free = ~target
    expected[free] = np.linalg.solve(
        np.eye(free.sum()) - p_mat[np.ix_(free, free)],
        p_mat[np.ix_(free, target)].sum(axis=1),
    )
    assert np.allclose(probs, expected, atol=1e-9)


def test_policy_trapped_in_sink_has_zero_probability():
    a = data.load_automaton("surveillance3_safe")
    mdp = chain_mdp(2, label_last=("unsafe",))
    prod = build_product(mdp, a)
    policy = np.zeros(prod.n_states, dtype=np.int64)
    assert policy_sat_probability(prod, policy) == pytest.approx(0.0)


def test_policy_probability_matches_monte_carlo():
    rng = np.random.default_rng(4)
    surveillance3 = data.load_automaton("surveillance3")
    mdp = gridworld(3, 3, {(0, 0): ["green"], (2, 2): ["yellow"]}, slip=0.3)
    prod = build_product(mdp, surveillance3)
    policy = np.array([rng.integers(prod.n_actions(x)) for x in range(prod.n_states)])
    exact = policy_sat_probability(prod, policy)

    # Monte Carlo over the induced chain: estimate absorption into good
    # recurrent classes.
    good = set()
    for cls in recurrent_classes(prod, policy):
        mask = 0
        for x in cls:
            mask |= int(prod.acc_mask[x])
        if mask == prod.full_mask:
            good |= cls
    all_rec = set().union(*recurrent_classes(prod, policy)) if recurrent_classes(prod, policy) else set()
    hits = 0
    n_runs = 4000
    for _ in range(n_runs):
        x = prod.initial
        while x not in all_rec:
            rows = prod.transitions[x][int(policy[x])]
            targets, probs = zip(*rows)
            x = int(rng.choice(targets, p=probs))
        # absorbed: classify by which class x belongs to
        hits += int(x in good)
    se = np.sqrt(max(exact * (1 - exact), 1e-4) / n_runs)
    assert abs(hits / n_runs - exact) < 4 * se + 0.01


def test_recurrent_class_dichotomy_on_random_policies():
    rng = np.random.default_rng(5)
    surveillance3 = data.load_automaton("surveillance3")
    mdp = gridworld(3, 3, {(0, 0): ["green"], (2, 0): ["yellow"]}, slip=0.25)
    prod = build_product(mdp, surveillance3)
    for _ in range(10):
        policy = np.array([rng.integers(prod.n_actions(x)) for x in range(prod.n_states)])
        for cls in recurrent_classes(prod, policy):
            mask = 0
            for x in cls:
                mask |= int(prod.acc_mask[x])
            assert mask in (0, prod.full_mask)


# ---------------------------------------------------------------------------
# Theorem suite on the packaged fixtures


def test_gridworld_parse_roundtrip():
    mdp = parse_gridworld(data.fixture_path("grid5.gw").read_text())
    assert mdp.n_states == 25
    assert mdp.labels[0] == {"green"}
    assert mdp.labels[24] == {"yellow"}
    assert mdp.initial == 12


def test_theorem_suite_passes():
    results = run_theorem_suite(data.fixture_dir() / "oracle")
    assert len(results) >= 10
    failing = [r for r in results if not r.passed]
    assert not failing, failing


def test_shaping_potential_excludes_initial_and_sinks():
    a = data.load_automaton("surveillance3_safe")
    mdp = chain_mdp(3, label_last=("green",))
    prod = build_product(mdp, a)
    phi = shaping_potential(prod, r_f=0.9, eta_phi=1000.0)
    for i, (_, qi, _) in enumerate(prod.states):
        q = a.states[qi]
        if q in ("q0", "qbad"):
            assert phi[i] == 0.0
        else:
            assert phi[i] == pytest.approx(100.0)
