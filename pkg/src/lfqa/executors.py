"""The four logical-form executors and step dispatch."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Any

from . import prompts
from .boundary import DirectAnswer, boxed_answer, decide, find_boxed
from .config import RunConfig
from .depth import Search, detect_directive, solve_depth, synthetic_search
from .errors import ChoiceViolation, ProtocolError, UnboundReference
from .lf import (
    DeduceExpr,
    MathExpr,
    OutputExpr,
    Ref,
    RetrievalExpr,
    Step,
    bind_step,
    defined_aliases,
)
from .llm import ChatClient, ChatMessage, GenParams, assistant, system, user
from .mathexpr import evaluate, format_result
from .retriever import Retriever

log = logging.getLogger(__name__)

SOURCES = ("direct_answer", "depth_solve", "deduce", "math", "output")
OUTPUT_SEPARATOR = "; "


@dataclass(frozen=True)
class Binding:
    alias: str
    hash_form: str
    value: str
    source: str
    exhausted: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {"alias": self.alias, "hash_form": self.hash_form, "value": self.value,
                "source": self.source, "exhausted": self.exhausted}


@dataclass
class ExecContext:
    question: str
    config: RunConfig
    llm: ChatClient
    retriever: Retriever
    bindings: dict[str, Binding] = field(default_factory=dict)
    # alias / #n -> the string a reference resolves to
    values: dict[str, str] = field(default_factory=dict)
    # running conversation shared by Retrieval steps
    conversation: list[ChatMessage] = field(default_factory=list)
    # (index, bound step text, value) of finished steps
    solved: list[tuple[int, str, str]] = field(default_factory=list)
    details: dict[int, dict[str, Any]] = field(default_factory=dict)

    def params(self, temperature: float | None = None) -> GenParams:
        c = self.config
        return GenParams(c.temperature if temperature is None else temperature, c.seed, c.max_tokens)

    def resolve(self, ref: str, step: int | None = None) -> str:
        if ref not in self.values:
            raise UnboundReference(step, ref)
        return self.values[ref]

    def bind(self, step: Step, binding: Binding, nl_text: str) -> None:
        a = step.action
        names = {}
        if isinstance(a, RetrievalExpr):
            for term in (a.s, a.p):
                if not term.is_ref and term.name:
                    names[term.alias] = term.name
        for alias in defined_aliases(a):
            self.bindings[alias] = binding
            self.values[alias] = names.get(alias, binding.value)
        self.bindings[binding.hash_form] = binding
        self.values[binding.hash_form] = binding.value
        self.solved.append((step.index, nl_text, binding.value))


def _hash(step: Step) -> str:
    return f"#{step.index}"


def _boxed_or_fail(text: str, what: str) -> str:
    found = boxed_answer(text) or find_boxed(text)
    if found is None or not found[0]:
        raise ProtocolError(f"{what} reply has no \\boxed{{...}} answer", raw_text=text)
    return found[0]


def exec_retrieval(step: Step, ctx: ExecContext) -> Binding:
    a = step.action
    assert isinstance(a, RetrievalExpr)
    cfg = ctx.config
    nl_text, action_text = bind_step(step, ctx.values)
    block = prompts.step_block(step.index, nl_text, action_text)
    params = ctx.params()
    history = list(ctx.conversation)
    decision = decide(block, ctx.llm, cfg.tau, params, history=history, assess_question=nl_text)
    attempt = decision.attempt
    detail: dict[str, Any] = {
        "query": nl_text,
        "attempt": attempt.to_dict() if attempt else None,
        "verdict": decision.verdict.to_dict() if decision.verdict else None,
    }
    ctx.details[step.index] = detail
    alias = a.o.alias if not a.o.is_ref else (defined_aliases(a) or [_hash(step)])[0]

    if isinstance(decision, DirectAnswer):
        detail["decision"] = "direct_answer"
        ctx.conversation = [*decision.attempt.messages, assistant(decision.attempt.raw_text)]
        binding = Binding(alias, _hash(step), decision.answer, "direct_answer")
        ctx.bind(step, binding, nl_text)
        return binding

    detail["decision"] = "retrieve"
    detail["reason"] = decision.reason
    depth_history = list(attempt.messages) if attempt else [*history, user(prompts.direct_attempt(block))]
    if attempt is not None and isinstance(detect_directive(attempt.raw_text), Search):
        opening, synthetic = attempt.raw_text, False
    else:
        opening, synthetic = synthetic_search(step, nl_text, action_text), True
    result = solve_depth(step, ctx.values, ctx.retriever, ctx.llm, cfg.max_turns, cfg.top_k,
                         history=depth_history, opening=opening, opening_synthetic=synthetic,
                         focus_mode=cfg.focus_mode, params=params)
    detail["depth"] = result.to_dict()
    ctx.conversation = list(result.messages)
    binding = Binding(alias, _hash(step), result.answer, "depth_solve", result.exhausted)
    ctx.bind(step, binding, nl_text)
    return binding


def _content_values(items, ctx: ExecContext, step: Step) -> list[str]:
    return [ctx.resolve(i.alias, step.index) if isinstance(i, Ref) else i.text for i in items]


def _sub_question_history(ctx: ExecContext) -> str:
    return "".join(f"{nl}\n#{i}: {v}\n" for i, nl, v in ctx.solved)


def _squash(s: str) -> str:
    return " ".join(s.split())


def check_choice(answer: str, candidates: list[str], multi: bool = False) -> None:
    """Each chosen part must appear verbatim (modulo whitespace) in some candidate."""
    pool = [_squash(c) for c in candidates]
    parts = [p for p in re.split(r"\s*;\s*", answer) if p] if multi else [answer]
    for part in parts:
        p = _squash(part)
        if not p or not any(p in c for c in pool):
            raise ChoiceViolation(answer, candidates)


def exec_deduce(step: Step, ctx: ExecContext) -> Binding:
    a = step.action
    assert isinstance(a, DeduceExpr)
    nl_text, _ = bind_step(step, ctx.values)
    values = _content_values(a.content, ctx, step)
    prompt = prompts.DEDUCE.format(
        question=ctx.question,
        history=_sub_question_history(ctx),
        step=nl_text,
        op=f"{a.op} ({prompts.DEDUCE_OP_HINTS[a.op]})",
        content=prompts.bullet_list(values),
        target=a.target,
    )
    comp = ctx.llm.complete([system(prompts.SYSTEM_THINK), user(prompt)], ctx.params())
    answer = _boxed_or_fail(comp.text, "Deduce")
    ctx.details[step.index] = {"raw_text": comp.text}
    if a.op in ("choice", "multiChoice"):
        check_choice(answer, [*values, a.target, ctx.question], multi=a.op == "multiChoice")
    binding = Binding(a.out_alias, _hash(step), answer, "deduce")
    ctx.bind(step, binding, nl_text)
    return binding


def exec_math(step: Step, ctx: ExecContext) -> Binding:
    a = step.action
    assert isinstance(a, MathExpr)
    nl_text, _ = bind_step(step, ctx.values)
    values = _content_values(a.content, ctx, step)
    prompt = prompts.MATH.format(question=ctx.question, content=prompts.bullet_list(values),
                                 target=a.target)
    comp = ctx.llm.complete([system(prompts.SYSTEM_THINK), user(prompt)], ctx.params(0.0))
    expression = _boxed_or_fail(comp.text, "Math")
    value, unit = evaluate(expression)
    text = format_result(value, unit)
    ctx.details[step.index] = {"expression": expression, "raw_text": comp.text}
    binding = Binding(a.out_alias, _hash(step), text, "math")
    ctx.bind(step, binding, nl_text)
    return binding


def exec_output(step: Step, ctx: ExecContext) -> Binding:
    a = step.action
    assert isinstance(a, OutputExpr)
    values = [ctx.resolve(r, step.index) for r in a.refs]
    value = values[0] if len(values) == 1 else OUTPUT_SEPARATOR.join(values)
    nl_text, _ = bind_step(step, ctx.values)
    binding = Binding(_hash(step), _hash(step), value, "output")
    ctx.bind(step, binding, nl_text)
    return binding


def exec_step(step: Step, ctx: ExecContext) -> Binding:
    a = step.action
    if isinstance(a, RetrievalExpr):
        return exec_retrieval(step, ctx)
    if isinstance(a, DeduceExpr):
        return exec_deduce(step, ctx)
    if isinstance(a, MathExpr):
        return exec_math(step, ctx)
    if isinstance(a, OutputExpr):
        return exec_output(step, ctx)
    raise TypeError(f"no executor for {type(a).__name__}")
