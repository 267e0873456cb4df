"""Curriculum-ordered rule learning from block-assembly demonstrations."""

from .logic import Atom, Clause, Program, Var, format_program, parse_program
from .inference import QueryBudget, entails
from .learner import Example, SearchLimits, learn_target
from .curriculum import run_curriculum
from .planner import plan

__all__ = [
    "Atom",
    "Clause",
    "Example",
    "Program",
    "QueryBudget",
    "SearchLimits",
    "Var",
    "entails",
    "format_program",
    "learn_target",
    "parse_program",
    "plan",
    "run_curriculum",
]
__version__ = "0.1.0"
