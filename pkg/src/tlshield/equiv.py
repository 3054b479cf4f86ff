"""Exhaustive lasso-word agreement checks between LTL and automata.

Enumerates every lasso word up to a prefix/cycle length bound over an
automaton's alphabet and compares three verdicts word by word: plain
generalized-Buchi acceptance, frontier-embedded acceptance, and (optionally)
the LTL evaluator's verdict on the paired formula.  All three run
vectorized over blocks of words so the full default enumeration
(prefix <= 3, cycle <= 4) stays in seconds even for 3-AP machines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from . import ltl
from .automaton import Ldgba, MachineTables, embedded_tables, plain_tables
from .ltl import Always, And, Atom, Eventually, FalseF, Formula, Implies, LassoWord, Next, Not, Or, TrueF, Until

_CHUNK = 1 << 19


@dataclass
class Counterexample:
    word: LassoWord
    ldgba: bool
    embedded: bool
    ltl_verdict: Optional[bool]

    def __str__(self):
        def fmt(letters):
            return "[" + " ".join("{" + ",".join(sorted(l)) + "}" for l in letters) + "]"

        parts = [
            f"prefix={fmt(self.word.prefix)}",
            f"cycle={fmt(self.word.cycle)}",
            f"ldgba={self.ldgba}",
            f"embedded={self.embedded}",
        ]
        if self.ltl_verdict is not None:
            parts.append(f"ltl={self.ltl_verdict}")
        return " ".join(parts)


@dataclass
class EquivalenceReport:
    words_checked: int
    counterexample: Optional[Counterexample]

    @property
    def ok(self) -> bool:
        return self.counterexample is None


def _letter_columns(ids: np.ndarray, n_positions: int, n_letters: int) -> np.ndarray:
    """Decode word ids into an (N, n_positions) array of letter indices."""
    cols = np.empty((ids.shape[0], n_positions), dtype=np.int64)
    for j in range(n_positions):
        cols[:, j] = (ids // (n_letters ** (n_positions - 1 - j))) % n_letters
    return cols


def iter_word_blocks(
    n_letters: int, max_prefix: int, max_cycle: int, chunk: int = _CHUNK
) -> Iterator[Tuple[int, int, np.ndarray]]:
    """Yield (prefix_len, cycle_len, letter_matrix) blocks covering all words."""
    for p in range(max_prefix + 1):
        for c in range(1, max_cycle + 1):
            total = n_letters ** (p + c)
            for start in range(0, total, chunk):
                ids = np.arange(start, min(start + chunk, total), dtype=np.int64)
                yield p, c, _letter_columns(ids, p + c, n_letters)


def eval_formula_batch(
    f: Formula, aps: Tuple[str, ...], prefix: np.ndarray, cycle: np.ndarray
) -> np.ndarray:
    """Vectorized lasso evaluation: verdict per row of (prefix, cycle) letters.

    Letters are indices into the powerset of ``aps`` (bit b set means
    ``aps[b]`` holds).  Mirrors :func:`tlshield.ltl.eval_lasso` exactly.
    """
    n_rows = prefix.shape[0]
    p, c = prefix.shape[1], cycle.shape[1]
    n = p + c
    word = np.concatenate([prefix, cycle], axis=1) if p else cycle
    ap_bit = {name: b for b, name in enumerate(aps)}

    def succ(i: int) -> int:
        return i + 1 if i + 1 < n else p

    table: Dict[Formula, np.ndarray] = {}
    for sub in ltl.subformulas(f):
        if isinstance(sub, TrueF):
            vals = np.ones((n_rows, n), dtype=bool)
        elif isinstance(sub, FalseF):
            vals = np.zeros((n_rows, n), dtype=bool)
        elif isinstance(sub, Atom):
            if sub.name not in ap_bit:
                vals = np.zeros((n_rows, n), dtype=bool)
            else:
                vals = (word >> ap_bit[sub.name] & 1).astype(bool)
        elif isinstance(sub, Not):
            vals = ~table[sub.operand]
        elif isinstance(sub, And):
            vals = table[sub.left] & table[sub.right]
        elif isinstance(sub, Or):
            vals = table[sub.left] | table[sub.right]
        elif isinstance(sub, Implies):
            vals = ~table[sub.left] | table[sub.right]
        elif isinstance(sub, Next):
            inner = table[sub.operand]
            vals = np.empty_like(inner)
            for i in range(n):
                vals[:, i] = inner[:, succ(i)]
        elif isinstance(sub, (Until, Eventually)):
            if isinstance(sub, Until):
                hold, goal = table[sub.left], table[sub.right]
            else:
                hold, goal = np.ones((n_rows, n), dtype=bool), table[sub.operand]
            vals = np.zeros((n_rows, n), dtype=bool)
            for _ in range(c + 1):
                for i in range(n - 1, p - 1, -1):
                    vals[:, i] = goal[:, i] | (hold[:, i] & vals[:, succ(i)])
            for i in range(p - 1, -1, -1):
                vals[:, i] = goal[:, i] | (hold[:, i] & vals[:, i + 1])
        elif isinstance(sub, Always):
            inner = table[sub.operand]
            vals = np.ones((n_rows, n), dtype=bool)
            for _ in range(c + 1):
                for i in range(n - 1, p - 1, -1):
                    vals[:, i] = inner[:, i] & vals[:, succ(i)]
            for i in range(p - 1, -1, -1):
                vals[:, i] = inner[:, i] & vals[:, i + 1]
        else:
            raise TypeError(f"not a formula: {sub!r}")
        table[sub] = vals
    return table[f][:, 0].copy()


def accepts_batch(tables: MachineTables, prefix: np.ndarray, cycle: np.ndarray) -> np.ndarray:
    """Vectorized lasso acceptance for one block of words.

    Runs the prefix, burns in ``n_states + 1`` cycle repetitions so every
    word's cycle-start state reaches its periodic orbit (period at most
    ``n_states``), then accumulates accepting-set hit masks over another
    ``n_states + 1`` repetitions, which covers at least one full period and
    only ever re-adds the orbit's own masks.
    """
    n_rows = prefix.shape[0]
    c = cycle.shape[1]
    q = np.full(n_rows, tables.initial, dtype=np.int64)
    for j in range(prefix.shape[1]):
        q = tables.trans[q, prefix[:, j]]
    reps = tables.n_states + 1
    for _ in range(reps):
        for j in range(c):
            q = tables.trans[q, cycle[:, j]]
    masks = np.zeros(n_rows, dtype=np.int64)
    for _ in range(reps):
        for j in range(c):
            q = tables.trans[q, cycle[:, j]]
            masks |= tables.acc[q]
    return masks == tables.full_mask


def check_equivalence(
    a: Ldgba,
    formula: Optional[Formula] = None,
    max_prefix: int = 3,
    max_cycle: int = 4,
) -> EquivalenceReport:
    """Compare plain LDGBA, embedded, and optional LTL verdicts exhaustively.

    Returns the first disagreement found (decoded back into a lasso word)
    or a clean report with the number of words checked.
    """
    plain = plain_tables(a)
    embedded = embedded_tables(a)
    checked = 0
    for p, c, letters in iter_word_blocks(a.n_letters, max_prefix, max_cycle):
        prefix, cycle = letters[:, :p], letters[:, p:]
        acc_plain = accepts_batch(plain, prefix, cycle)
        acc_emb = accepts_batch(embedded, prefix, cycle)
        bad = acc_plain != acc_emb
        acc_ltl = None
        if formula is not None:
            acc_ltl = eval_formula_batch(formula, a.aps, prefix, cycle)
            bad |= acc_plain != acc_ltl
        checked += letters.shape[0]
        if bad.any():
            k = int(np.argmax(bad))
            word = LassoWord(
                tuple(a.letter_of_index(int(v)) for v in prefix[k]),
                tuple(a.letter_of_index(int(v)) for v in cycle[k]),
            )
            return EquivalenceReport(
                checked,
                Counterexample(
                    word,
                    bool(acc_plain[k]),
                    bool(acc_emb[k]),
                    None if acc_ltl is None else bool(acc_ltl[k]),
                ),
            )
    return EquivalenceReport(checked, None)
