"""Logical-form planning and retrieval-augmented multi-hop question answering."""

from .config import RunConfig, load_config
from .engine import Deps, SolveTrace, solve, solve_batch
from .evaluation import exact_match, f1_score, normalize_answer, stability_score
from .lf import Plan, parse_action, parse_plan, render_action
from .llm import ScriptedClient
from .retriever import BM25Retriever

__all__ = [
    "BM25Retriever",
    "Deps",
    "Plan",
    "RunConfig",
    "ScriptedClient",
    "SolveTrace",
    "exact_match",
    "f1_score",
    "load_config",
    "normalize_answer",
    "parse_action",
    "parse_plan",
    "render_action",
    "solve",
    "solve_batch",
    "stability_score",
]

__version__ = "0.1.0"
