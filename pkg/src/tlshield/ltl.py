"""LTL formulas, ASCII parser, and exact semantics on lasso words.

The surface syntax is ASCII: ``true false ident ! & | -> X F G U`` with
parentheses.  Precedence from tightest to loosest: unary operators, ``U``
(right-associative), ``&``, ``|``, ``->`` (right-associative).

A lasso word ``(prefix, cycle)`` finitely represents the eventually
periodic infinite word ``prefix . cycle . cycle ...``; every letter is a
set of atomic propositions.  ``eval_lasso`` decides satisfaction exactly
by a bounded fixpoint computation over the ``len(prefix) + len(cycle)``
distinct positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, Iterable, Tuple


class LtlError(ValueError):
    """Syntax or scoping error; ``pos`` is a character offset into the input."""

    def __init__(self, message: str, pos: int | None = None):
        super().__init__(message if pos is None else f"{message} (at position {pos})")
        self.pos = pos


@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula


@dataclass(frozen=True)
class Next(Formula):
    operand: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    operand: Formula


@dataclass(frozen=True)
class Always(Formula):
    operand: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


Letter = FrozenSet[str]


@dataclass(frozen=True)
class LassoWord:
    """Finite representation of an eventually periodic infinite word."""

    prefix: Tuple[Letter, ...]
    cycle: Tuple[Letter, ...]

    def __post_init__(self):
        if len(self.cycle) == 0:
            raise ValueError("lasso cycle must be non-empty")

    @staticmethod
    def make(prefix: Iterable[Iterable[str]], cycle: Iterable[Iterable[str]]) -> "LassoWord":
        return LassoWord(
            tuple(frozenset(p) for p in prefix),
            tuple(frozenset(c) for c in cycle),
        )

    def letters(self) -> Tuple[Letter, ...]:
        return self.prefix + self.cycle

    def unrolled(self, n: int) -> Tuple[Letter, ...]:
        """First ``n`` letters of the represented infinite word."""
        out = list(self.prefix)
        while len(out) < n:
            out.extend(self.cycle)
        return tuple(out[:n])


# ---------------------------------------------------------------------------
# Parsing


_UNARY = {"!": Not, "X": Next, "F": Eventually, "G": Always}


class _Tokens:
    SYMBOLS = ("->", "(", ")", "!", "&", "|")

    def __init__(self, text: str):
        self.text = text
        self.items: list[tuple[str, str, int]] = []  # (kind, value, pos)
        i = 0
        while i < len(text):
            ch = text[i]
            if ch.isspace():
                i += 1
                continue
            if text.startswith("->", i):
                self.items.append(("op", "->", i))
                i += 2
                continue
            if ch in "()!&|":
                self.items.append(("op", ch, i))
                i += 1
                continue
            if ch.isalpha() or ch == "_":
                j = i
                while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                self.items.append(("word", text[i:j], i))
                i = j
                continue
            raise LtlError(f"unexpected character {ch!r}", i)
        self.k = 0

    def peek(self) -> tuple[str, str, int] | None:
        return self.items[self.k] if self.k < len(self.items) else None

    def next(self) -> tuple[str, str, int]:
        item = self.peek()
        if item is None:
            raise LtlError("unexpected end of input", len(self.text))
        self.k += 1
        return item


def parse_ltl(text: str, aps: Iterable[str] | None = None) -> Formula:
    """Parse ``text`` into a Formula.

    If ``aps`` is given, every atom must come from it; otherwise any
    identifier is accepted.  Raises :class:`LtlError` on bad syntax or an
    unknown atom, with the offending position.
    """
    if not text or not text.strip():
        raise LtlError("empty formula", 0)
    allowed = None if aps is None else frozenset(aps)
    toks = _Tokens(text)

    def parse_impl() -> Formula:
        left = parse_or()
        item = toks.peek()
        if item is not None and item[1] == "->":
            toks.next()
            return Implies(left, parse_impl())
        return left

    def parse_or() -> Formula:
        node = parse_and()
        while True:
            item = toks.peek()
            if item is None or item[1] != "|":
                return node
            toks.next()
            node = Or(node, parse_and())

    def parse_and() -> Formula:
        node = parse_until()
        while True:
            item = toks.peek()
            if item is None or item[1] != "&":
                return node
            toks.next()
            node = And(node, parse_until())

    def parse_until() -> Formula:
        left = parse_unary()
        item = toks.peek()
        if item is not None and item[0] == "word" and item[1] == "U":
            toks.next()
            return Until(left, parse_until())
        return left

    def parse_unary() -> Formula:
        kind, value, pos = toks.next()
        if value == "(":
            inner = parse_impl()
            closing = toks.next()
            if closing[1] != ")":
                raise LtlError("expected ')'", closing[2])
            return inner
        if value == "!":
            return Not(parse_unary())
        if kind == "word" and value in ("X", "F", "G"):
            return _UNARY[value](parse_unary())
        if kind == "word":
            if value == "true":
                return TrueF()
            if value == "false":
                return FalseF()
            if value == "U":
                raise LtlError("'U' is an operator, not an atom", pos)
            if allowed is not None and value not in allowed:
                raise LtlError(f"unknown atom {value!r}", pos)
            return Atom(value)
        raise LtlError(f"unexpected token {value!r}", pos)

    result = parse_impl()
    trailing = toks.peek()
    if trailing is not None:
        raise LtlError(f"trailing input {trailing[1]!r}", trailing[2])
    return result


def format_formula(f: Formula) -> str:
    """Canonical fully parenthesized ASCII rendering; reparses to the same AST."""
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        return f"!({format_formula(f.operand)})"
    if isinstance(f, Next):
        return f"X ({format_formula(f.operand)})"
    if isinstance(f, Eventually):
        return f"F ({format_formula(f.operand)})"
    if isinstance(f, Always):
        return f"G ({format_formula(f.operand)})"
    if isinstance(f, And):
        return f"({format_formula(f.left)} & {format_formula(f.right)})"
    if isinstance(f, Or):
        return f"({format_formula(f.left)} | {format_formula(f.right)})"
    if isinstance(f, Implies):
        return f"({format_formula(f.left)} -> {format_formula(f.right)})"
    if isinstance(f, Until):
        return f"({format_formula(f.left)} U {format_formula(f.right)})"
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Semantics


def atomic_props(f: Formula) -> FrozenSet[str]:
    """Exact set of atom names occurring in ``f``."""
    if isinstance(f, Atom):
        return frozenset((f.name,))
    if isinstance(f, (TrueF, FalseF)):
        return frozenset()
    if isinstance(f, (Not, Next, Eventually, Always)):
        return atomic_props(f.operand)
    if isinstance(f, (And, Or, Implies, Until)):
        return atomic_props(f.left) | atomic_props(f.right)
    raise TypeError(f"not a formula: {f!r}")


def subformulas(f: Formula) -> list[Formula]:
    """Children-first enumeration; each distinct subformula appears once."""
    seen: dict[Formula, None] = {}

    def walk(node: Formula):
        if node in seen:
            return
        if isinstance(node, (Not, Next, Eventually, Always)):
            walk(node.operand)
        elif isinstance(node, (And, Or, Implies, Until)):
            walk(node.left)
            walk(node.right)
        seen[node] = None

    walk(f)
    return list(seen)


def is_boolean(f: Formula) -> bool:
    """True when ``f`` contains no temporal operators."""
    if isinstance(f, (Next, Eventually, Always, Until)):
        return False
    if isinstance(f, (TrueF, FalseF, Atom)):
        return True
    if isinstance(f, Not):
        return is_boolean(f.operand)
    return is_boolean(f.left) and is_boolean(f.right)


def eval_boolean(f: Formula, letter: Iterable[str]) -> bool:
    """Evaluate a temporal-operator-free formula on one letter."""
    members = letter if isinstance(letter, frozenset) else frozenset(letter)
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Atom):
        return f.name in members
    if isinstance(f, Not):
        return not eval_boolean(f.operand, members)
    if isinstance(f, And):
        return eval_boolean(f.left, members) and eval_boolean(f.right, members)
    if isinstance(f, Or):
        return eval_boolean(f.left, members) or eval_boolean(f.right, members)
    if isinstance(f, Implies):
        return (not eval_boolean(f.left, members)) or eval_boolean(f.right, members)
    raise LtlError(f"temporal operator in boolean context: {f!r}")


def eval_lasso(f: Formula, w: LassoWord) -> bool:
    """Decide whether the infinite word represented by ``w`` satisfies ``f``.

    Works bottom-up over subformulas, storing a truth value per position
    ``0 .. p+c-1`` where position ``p+c-1`` succeeds to ``p``.  Until and
    Eventually are least fixpoints swept at most ``c+1`` times over the
    cycle (monotone from false, so ``c`` sweeps converge); Always is the
    dual greatest fixpoint.
    """
    missing = atomic_props(f) - frozenset().union(*w.letters()) if w.letters() else atomic_props(f)
    # Atoms absent from every letter are simply false everywhere; no error.
    del missing
    p, c = len(w.prefix), len(w.cycle)
    n = p + c
    letters = w.letters()

    def succ(i: int) -> int:
        return i + 1 if i + 1 < n else p

    table: dict[Formula, list[bool]] = {}
    for sub in subformulas(f):
        if isinstance(sub, TrueF):
            vals = [True] * n
        elif isinstance(sub, FalseF):
            vals = [False] * n
        elif isinstance(sub, Atom):
            vals = [sub.name in letters[i] for i in range(n)]
        elif isinstance(sub, Not):
            inner = table[sub.operand]
            vals = [not v for v in inner]
        elif isinstance(sub, And):
            a, b = table[sub.left], table[sub.right]
            vals = [x and y for x, y in zip(a, b)]
        elif isinstance(sub, Or):
            a, b = table[sub.left], table[sub.right]
            vals = [x or y for x, y in zip(a, b)]
        elif isinstance(sub, Implies):
            a, b = table[sub.left], table[sub.right]
            vals = [(not x) or y for x, y in zip(a, b)]
        elif isinstance(sub, Next):
            inner = table[sub.operand]
            vals = [inner[succ(i)] for i in range(n)]
        elif isinstance(sub, (Until, Eventually)):
            if isinstance(sub, Until):
                hold, goal = table[sub.left], table[sub.right]
            else:
                hold, goal = [True] * n, table[sub.operand]
            vals = [False] * n
            for _ in range(c + 1):  # least fixpoint on the cycle
                changed = False
                for i in range(n - 1, p - 1, -1):
                    v = goal[i] or (hold[i] and vals[succ(i)])
                    if v != vals[i]:
                        vals[i] = v
                        changed = True
                if not changed:
                    break
            for i in range(p - 1, -1, -1):  # prefix: single backward pass
                vals[i] = goal[i] or (hold[i] and vals[i + 1])
        elif isinstance(sub, Always):
            inner = table[sub.operand]
            vals = [True] * n
            for _ in range(c + 1):  # greatest fixpoint on the cycle
                changed = False
                for i in range(n - 1, p - 1, -1):
                    v = inner[i] and vals[succ(i)]
                    if v != vals[i]:
                        vals[i] = v
                        changed = True
                if not changed:
                    break
            for i in range(p - 1, -1, -1):
                vals[i] = inner[i] and vals[i + 1]
        else:
            raise TypeError(f"not a formula: {sub!r}")
        table[sub] = vals
    return table[f][0]
