"""Access to packaged fixture files: automata, formulas, grids, configs."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .automaton import Ldgba, parse_automaton

# Exact LTL language of each shipped automaton, used by the equivalence
# suite and as the `task.formula` oracle in configs.
FIXTURE_FORMULAS = {
    "surveillance3": "G F green & G F (yellow & !green)",
    "reach_both": "F green & F yellow",
    "surveillance4": "G F green & G F yellow",
    "surveillance3_safe": "G !unsafe & G F green & G F (yellow & !green)",
    "reach_both_safe": "F green & F yellow & G !unsafe",
    "seq2_safe": "F (t1 & F t2) & G !u",
    "gfa": "G F a",
    "auntilb": "a U b",
    "response": "G (a -> F b)",
}


def fixture_dir() -> Path:
    return Path(resources.files("tlshield").joinpath("fixtures"))


def fixture_path(name: str) -> Path:
    path = fixture_dir() / name
    if not path.exists():
        raise FileNotFoundError(f"no packaged fixture {name!r}")
    return path


def load_automaton(name: str) -> Ldgba:
    """Load a packaged automaton by short name ('surveillance3') or filename."""
    if not name.endswith(".aut"):
        name = name + ".aut"
    return parse_automaton(fixture_path(name).read_text())


def formula_for(name: str) -> str:
    key = name.removesuffix(".aut")
    if key not in FIXTURE_FORMULAS:
        raise KeyError(f"no paired formula for fixture {name!r}")
    return FIXTURE_FORMULAS[key]
