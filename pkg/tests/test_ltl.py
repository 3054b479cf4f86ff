import random

import pytest
from hypothesis import given, settings, strategies as st

from tlshield import ltl
from tlshield.ltl import (
    Always,
    And,
    Atom,
    Eventually,
    FalseF,
    Implies,
    LassoWord,
    LtlError,
    Next,
    Not,
    Or,
    TrueF,
    Until,
    atomic_props,
    eval_lasso,
    format_formula,
    parse_ltl,
)

APS = ("a", "b", "c")


# ---------------------------------------------------------------------------
# Independent oracle: unroll the lasso explicitly and decide temporal
# operators by forward scans.  A scan from position i is exact once it has
# covered every distinct future position, i.e. the rest of the prefix plus
# one full cycle, so each scan runs over the window [i, max(p, i) + c).
# F/U stop at the first position where the goal holds (whose existence or
# absence within the window settles the infinite word); G checks the whole
# window.


def _letter_at(w: LassoWord, i):
    p = len(w.prefix)
    return w.prefix[i] if i < p else w.cycle[(i - p) % len(w.cycle)]


def _unrolled_eval(f, w, i):
    window = range(i, max(len(w.prefix), i) + len(w.cycle))
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Atom):
        return f.name in _letter_at(w, i)
    if isinstance(f, Not):
        return not _unrolled_eval(f.operand, w, i)
    if isinstance(f, And):
        return _unrolled_eval(f.left, w, i) and _unrolled_eval(f.right, w, i)
    if isinstance(f, Or):
        return _unrolled_eval(f.left, w, i) or _unrolled_eval(f.right, w, i)
    if isinstance(f, Implies):
        return (not _unrolled_eval(f.left, w, i)) or _unrolled_eval(f.right, w, i)
    if isinstance(f, Next):
        return _unrolled_eval(f.operand, w, i + 1)
    if isinstance(f, Eventually):
        return any(_unrolled_eval(f.operand, w, t) for t in window)
    if isinstance(f, Always):
        return all(_unrolled_eval(f.operand, w, t) for t in window)
    if isinstance(f, Until):
        for t in window:
            if _unrolled_eval(f.right, w, t):
                return True
            if not _unrolled_eval(f.left, w, t):
                return False
        return False
    raise TypeError(f)


def oracle_eval(f, w: LassoWord) -> bool:
    return _unrolled_eval(f, w, 0)


def random_formula(rng, depth):
    if depth == 0:
        return rng.choice([TrueF(), FalseF()] + [Atom(a) for a in APS])
    kind = rng.randrange(9)
    if kind == 0:
        return Not(random_formula(rng, depth - 1))
    if kind == 1:
        return Next(random_formula(rng, depth - 1))
    if kind == 2:
        return Eventually(random_formula(rng, depth - 1))
    if kind == 3:
        return Always(random_formula(rng, depth - 1))
    left = random_formula(rng, depth - 1)
    right = random_formula(rng, depth - 1)
    return {4: And, 5: Or, 6: Implies, 7: Until, 8: Until}[kind](left, right)


def random_word(rng, max_prefix=3, max_cycle=4):
    def letters(k):
        return [frozenset(a for a in APS if rng.random() < 0.4) for _ in range(k)]

    return LassoWord(tuple(letters(rng.randrange(max_prefix + 1))), tuple(letters(rng.randrange(1, max_cycle + 1))))


# ---------------------------------------------------------------------------
# Parser


def test_parse_surveillance():
    f = parse_ltl("G F green & G F yellow", {"green", "yellow"})
    assert f == And(Always(Eventually(Atom("green"))), Always(Eventually(Atom("yellow"))))


def test_parse_true_literal():
    assert parse_ltl("true") == TrueF()


def test_parse_until_tree():
    f = parse_ltl("a U (b & !c)", APS)
    assert f == Until(Atom("a"), And(Atom("b"), Not(Atom("c"))))


def test_parse_missing_operand():
    with pytest.raises(LtlError):
        parse_ltl("a U", APS)


def test_parse_unknown_atom():
    with pytest.raises(LtlError):
        parse_ltl("a & zz", {"a"})


def test_parse_empty():
    with pytest.raises(LtlError):
        parse_ltl("   ")


def test_precedence_and_associativity():
    # -> loosest, then |, &, U; U right-associative.
    f = parse_ltl("a U b U c", APS)
    assert f == Until(Atom("a"), Until(Atom("b"), Atom("c")))
    f = parse_ltl("a & b | c -> a", APS)
    assert f == Implies(Or(And(Atom("a"), Atom("b")), Atom("c")), Atom("a"))
    f = parse_ltl("!a U b", APS)
    assert f == Until(Not(Atom("a")), Atom("b"))


def test_format_roundtrip_random():
    rng = random.Random(0)
    for _ in range(200):
        f = random_formula(rng, rng.randrange(5))
        assert parse_ltl(format_formula(f)) == f


# ---------------------------------------------------------------------------
# atomic_props


def test_atomic_props():
    assert atomic_props(parse_ltl("G F a & G F b")) == {"a", "b"}
    assert atomic_props(TrueF()) == frozenset()
    assert atomic_props(parse_ltl("a U (b & !a)")) == {"a", "b"}


# ---------------------------------------------------------------------------
# eval_lasso examples


def test_gfa_on_alternating_cycle():
    f = parse_ltl("G F a")
    w = LassoWord.make([], [{"a"}, {}])
    assert eval_lasso(f, w) is True


def test_gfa_and_gfb_missing_b():
    f = parse_ltl("G F a & G F b")
    w = LassoWord.make([], [{"a"}])
    assert eval_lasso(f, w) is False


def test_nested_eventually():
    f = parse_ltl("F (a & F b)")
    w = LassoWord.make([{}, {"a"}], [{"b"}])
    assert eval_lasso(f, w) is True


def test_random_agreement_with_unrolling_oracle():
    rng = random.Random(7)
    for _ in range(600):
        f = random_formula(rng, rng.randrange(4))
        w = random_word(rng)
        assert eval_lasso(f, w) == oracle_eval(f, w), (format_formula(f), w)


# ---------------------------------------------------------------------------
# Properties


@st.composite
def formula_and_word(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = random.Random(seed)
    return random_formula(rng, rng.randrange(4)), random_word(rng)


@settings(max_examples=200, deadline=None)
@given(formula_and_word())
def test_cycle_doubling_invariance(fw):
    f, w = fw
    doubled = LassoWord(w.prefix, w.cycle + w.cycle)
    assert eval_lasso(f, w) == eval_lasso(f, doubled)


@settings(max_examples=200, deadline=None)
@given(formula_and_word())
def test_compositionality(fw):
    f, w = fw
    g = Always(Eventually(Atom("a")))
    assert eval_lasso(Not(f), w) == (not eval_lasso(f, w))
    assert eval_lasso(And(f, g), w) == (eval_lasso(f, w) and eval_lasso(g, w))


def _next_free(f) -> bool:
    return not any(isinstance(s, Next) for s in ltl.subformulas(f))


@settings(max_examples=200, deadline=None)
@given(formula_and_word())
def test_stutter_invariance_of_next_free(fw):
    f, w = fw
    if not _next_free(f):
        return
    if not w.prefix:
        return
    stuttered = LassoWord((w.prefix[0],) + w.prefix, w.cycle)
    assert eval_lasso(f, w) == eval_lasso(f, stuttered)
