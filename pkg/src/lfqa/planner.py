"""Breadth decomposition: prompt, plan parsing and static validation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from . import prompts
from .errors import (
    DecompositionError,
    DuplicateAlias,
    ForwardReference,
    LogicalFormError,
    MisplacedOutput,
    PlanValidationError,
    ProtocolError,
    UnboundReference,
)
from .lf import DeduceExpr, MathExpr, OutputExpr, Plan, Ref, defined_aliases, extract_refs, parse_plan, placeholders
from .llm import ChatClient, ChatMessage, GenParams, system, user

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValidatedPlan:
    plan: Plan
    topo_order: tuple[int, ...]
    # step -> steps it depends on
    ref_graph: dict[int, tuple[int, ...]]
    # alias -> defining step
    alias_owner: dict[str, int]

    @property
    def steps(self):
        return self.plan.steps


def build_decomposition_prompt(question: str) -> list[ChatMessage]:
    if not question:
        raise ValueError("question must be non-empty")
    return [system(prompts.SYSTEM_THINK), user(prompts.decomposition(question))]


def _resolve(ref: str, step: int, owner: dict[str, int]) -> int:
    if ref.startswith("#"):
        target = int(ref[1:])
        if target < 1:
            raise UnboundReference(step, ref)
        if target >= step:
            raise ForwardReference(step, ref)
        return target
    if ref not in owner:
        raise UnboundReference(step, ref)
    if owner[ref] >= step:
        raise ForwardReference(step, ref)
    return owner[ref]


def _reads(a) -> list[str]:
    # content refs including any that name the step's own output
    if isinstance(a, (DeduceExpr, MathExpr)):
        return [i.alias for i in a.content if isinstance(i, Ref)]
    return []


def validate(plan: Plan) -> ValidatedPlan:
    """Check aliases, backward-only references and Output placement."""
    n = len(plan.steps)
    owner: dict[str, int] = {}
    for step in plan.steps:
        for alias in defined_aliases(step.action):
            if alias in owner:
                raise DuplicateAlias(alias, step.index)
            owner[alias] = step.index

    outputs = [s.index for s in plan.steps if isinstance(s.action, OutputExpr)]
    for idx in outputs:
        if idx != n:
            raise MisplacedOutput(idx)

    graph: dict[int, tuple[int, ...]] = {}
    for step in plan.steps:
        deps: set[int] = set()
        own = set(defined_aliases(step.action))
        for ref in _reads(step.action):
            if ref in own:
                raise ForwardReference(step.index, ref)
        for ref in extract_refs(step.action):
            deps.add(_resolve(ref, step.index, owner))
        for k in placeholders(step.nl_text):
            deps.add(_resolve(f"#{k}", step.index, owner))
        graph[step.index] = tuple(sorted(deps))

    # only backward edges exist, so plan order is already topological
    return ValidatedPlan(plan, tuple(range(1, n + 1)), graph, owner)


def decompose(question: str, llm: ChatClient, params: GenParams | None = None,
              retries: int = 2) -> tuple[ValidatedPlan, list[ChatMessage]]:
    """One decomposition pass, re-asked up to ``retries`` times on bad output.

    Returns the validated plan and the exchange (prompt + assistant reply)
    so that later turns can continue the same conversation.
    """
    params = params or GenParams()
    messages = build_decomposition_prompt(question)
    last: Exception | None = None
    for attempt in range(retries + 1):
        comp = llm.complete(messages, params)
        try:
            vp = validate(parse_plan(comp.text))
        except (ProtocolError, LogicalFormError, PlanValidationError) as exc:
            log.info("decomposition attempt %d rejected: %s", attempt + 1, exc)
            last = exc
            continue
        return vp, [*messages, ChatMessage("assistant", comp.text)]
    assert last is not None
    raise DecompositionError(last, retries + 1)


def edges(vp: ValidatedPlan) -> set[tuple[int, int]]:
    return {(s, d) for s, deps in vp.ref_graph.items() for d in deps}


def plan_summary(vp: ValidatedPlan) -> Sequence[str]:
    return [f"{s.index}. {s.nl_text} :: {s.action_text}" for s in vp.steps]
