import random

import numpy as np
import pytest

from tlshield import data
from tlshield.automaton import lasso_accepts, lasso_accepts_embedded, parse_automaton, plain_tables
from tlshield.equiv import accepts_batch, check_equivalence, eval_formula_batch, iter_word_blocks
from tlshield.ltl import LassoWord, eval_lasso, parse_ltl


def _decode(a, row):
    return [a.letter_of_index(int(v)) for v in row]


def test_batch_matches_single_word_functions():
    rng = random.Random(5)
    for name in ("surveillance3", "auntilb", "response"):
        a = data.load_automaton(name)
        f = parse_ltl(data.formula_for(name), a.aps)
        tables = plain_tables(a)
        for p, c, letters in iter_word_blocks(a.n_letters, 2, 2, chunk=1 << 12):
            idx = rng.sample(range(letters.shape[0]), min(20, letters.shape[0]))
            sub = letters[idx]
            prefix, cycle = sub[:, :p], sub[:, p:]
            batch = accepts_batch(tables, prefix, cycle)
            ltl_batch = eval_formula_batch(f, a.aps, prefix, cycle)
            for k in range(sub.shape[0]):
                w = LassoWord(tuple(_decode(a, prefix[k])), tuple(_decode(a, cycle[k])))
                assert bool(batch[k]) == lasso_accepts(a, w)
                assert bool(ltl_batch[k]) == eval_lasso(f, w)


def test_equivalence_clean_on_fixture():
    a = data.load_automaton("surveillance3")
    f = parse_ltl(data.formula_for("surveillance3"), a.aps)
    report = check_equivalence(a, f, max_prefix=2, max_cycle=3)
    assert report.ok
    # all (p, c) pairs with p <= 2, c in 1..3 over a 4-letter alphabet
    assert report.words_checked == sum(4**p * 4**c for p in range(3) for c in range(1, 4))


def test_equivalence_finds_wrong_accepting_set():
    # surveillance3 with F2 moved to q0 accepts a different language than the formula.
    text = data.fixture_path("surveillance3.aut").read_text().replace("F2 = q2", "F2 = q0")
    broken = parse_automaton(text)
    f = parse_ltl(data.formula_for("surveillance3"), broken.aps)
    report = check_equivalence(broken, f, max_prefix=2, max_cycle=3)
    assert not report.ok
    ce = report.counterexample
    w = ce.word
    assert lasso_accepts(broken, w) == ce.ldgba
    assert lasso_accepts_embedded(broken, w) == ce.embedded
    assert eval_lasso(f, w) == ce.ltl_verdict
    assert ce.ldgba != ce.ltl_verdict or ce.ldgba != ce.embedded


def test_word_blocks_cover_everything():
    total = 0
    seen = set()
    for p, c, letters in iter_word_blocks(2, 1, 2, chunk=3):
        total += letters.shape[0]
        for row in letters:
            seen.add((p, c, tuple(int(v) for v in row)))
    expected = sum(2 ** (p + c) for p in range(2) for c in range(1, 3))
    assert total == expected == len(seen)
