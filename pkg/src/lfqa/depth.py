"""Depth solving of a single Retrieval sub-question.

The model either emits ``<search>StepN: ...\\nActionN: ...</search>`` to ask
for references or ``<answer>...\\boxed{...}...</answer>`` to finish. Each
search consumes one turn of the budget; after ``max_turns`` the model gets
one last "answer now" instruction.

Budget per call: at most ``max_turns`` retrievals and ``2 * max_turns + 2``
LLM calls (one solve call per turn plus the post-budget reply, one focus
call per retrieval in explicit mode, and the final fallback).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from . import prompts
from .boundary import answer_span, find_boxed
from .errors import LogicalFormError, ProtocolError
from .lf import Action, Step, bind_step, parse_action, parse_step_lines, render_action
from .llm import ChatClient, ChatMessage, GenParams, assistant, user
from .retriever import Chunk, Retriever, ScoredChunk

log = logging.getLogger(__name__)

FOCUS_MODES = ("inline", "explicit")


@dataclass(frozen=True)
class Search:
    step_text: str
    action_text: str


@dataclass(frozen=True)
class Answer:
    boxed: str


@dataclass(frozen=True)
class Neither:
    pass


Directive = Search | Answer | Neither


def _block(text: str, open_: str, close: str) -> str | None:
    i = text.find(open_)
    if i < 0:
        return None
    body = i + len(open_)
    j = text.find(close, body)
    return text[body:] if j < 0 else text[body:j]


def detect_directive(completion: str) -> Directive:
    """``<answer>`` wins over ``<search>``; only the first occurrence counts."""
    span = answer_span(completion)
    if span is not None:
        boxed = find_boxed(completion, *span)
        if boxed is not None and boxed[0]:
            return Answer(boxed[0])
        plain = completion[span[0]:span[1]].strip()
        if plain:
            return Answer(plain)
    payload = _block(completion, prompts.SEARCH_OPEN, prompts.SEARCH_CLOSE)
    if payload is None:
        return Neither()
    try:
        pairs = parse_step_lines(payload)
    except ProtocolError:
        pairs = []
    if pairs:
        _, step_text, action_text = pairs[0]
        return Search(step_text, action_text)
    return Search(payload.strip(), "")


def think_of(completion: str) -> str:
    block = _block(completion, prompts.THINK_OPEN, prompts.THINK_CLOSE)
    return block.strip() if block is not None else ""


def format_references(chunks: Sequence[Chunk]) -> str:
    body = "\n".join(f'[{i}]"{c.title}"\n{c.contents}' for i, c in enumerate(chunks))
    return f"{prompts.REFS_OPEN}{body}{prompts.REFS_CLOSE}"


def _focus_references(chunks: Sequence[Chunk]) -> str:
    return "\n".join(f'{i}. "{c.title}" {c.contents}' for i, c in enumerate(chunks))


_FOCUS_ANSWER = re.compile(r"</?answer>\s*(yes|no)\b", re.IGNORECASE)
_FOCUS_REASON = re.compile(r"<reason>(.*?)(?:</reason>|$)", re.IGNORECASE | re.DOTALL)


@dataclass(frozen=True)
class FocusVerdict:
    answerable: bool
    reason: str

    def to_dict(self) -> dict[str, Any]:
        return {"answerable": self.answerable, "reason": self.reason}


def focus_and_reason(subq: str, chunks: Sequence[Chunk], llm: ChatClient,
                     params: GenParams | None = None) -> FocusVerdict:
    if not chunks:
        raise ValueError("focus_and_reason needs at least one chunk")
    msg = prompts.FOCUS.format(references=_focus_references(chunks), question=subq)
    comp = llm.complete([user(msg)], params or GenParams())
    m = _FOCUS_ANSWER.search(comp.text)
    if m is None:
        raise ProtocolError("focus reply has no <answer>Yes/No</answer>", raw_text=comp.text)
    r = _FOCUS_REASON.search(comp.text)
    return FocusVerdict(m.group(1).lower() == "yes", r.group(1).strip() if r else "")


@dataclass(frozen=True)
class SolveTurn:
    turn_index: int
    think_text: str
    directive: Search | None = None
    directive_action: Action | None = None
    retrieved: tuple[ScoredChunk, ...] = ()
    focus_verdict: FocusVerdict | None = None
    answer: str | None = None
    synthetic: bool = False
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "turn_index": self.turn_index,
            "think_text": self.think_text,
            "directive": None if self.directive is None else {
                "step_text": self.directive.step_text,
                "action_text": self.directive.action_text,
                "action": None if self.directive_action is None else render_action(self.directive_action),
            },
            "retrieved": [{"id": c.id, "title": c.title, "score": s} for c, s in self.retrieved],
            "focus_verdict": None if self.focus_verdict is None else self.focus_verdict.to_dict(),
            "answer": self.answer,
            "synthetic": self.synthetic,
            "error": self.error,
        }


@dataclass(frozen=True)
class DepthResult:
    answer: str
    turns: tuple[SolveTurn, ...]
    exhausted: bool
    llm_calls: int = 0
    messages: tuple[ChatMessage, ...] = field(default=(), compare=False, repr=False)

    @property
    def retrievals(self) -> int:
        return sum(1 for t in self.turns if t.directive is not None and t.error is None)

    def to_dict(self) -> dict[str, Any]:
        return {"answer": self.answer, "exhausted": self.exhausted, "llm_calls": self.llm_calls,
                "turns": [t.to_dict() for t in self.turns]}


def synthetic_search(step: Step, nl_text: str, action_text: str) -> str:
    """A search directive echoing the sub-question itself."""
    return (f"{prompts.THINK_OPEN}{prompts.SYNTHETIC_SEARCH_THINK}{prompts.THINK_CLOSE}\n"
            f"{prompts.SEARCH_OPEN}{prompts.step_block(step.index, nl_text, action_text)}{prompts.SEARCH_CLOSE}")


def solve_depth(
    step: Step,
    bindings: Mapping[str, str],
    retriever: Retriever,
    llm: ChatClient,
    max_turns: int = 3,
    top_k: int = 3,
    *,
    history: Sequence[ChatMessage] = (),
    opening: str | None = None,
    opening_synthetic: bool = False,
    focus_mode: str = "inline",
    params: GenParams | None = None,
) -> DepthResult:
    """Run the retrieve/focus/reason loop for one sub-question.

    ``bindings`` maps aliases and ``#n`` to values already solved. With ``opening``
    the caller has already obtained the first assistant reply (e.g. the
    refusal from the direct attempt) and ``history`` must end with the
    user message it answers; otherwise the loop starts by asking.
    """
    if max_turns < 1 or top_k < 1:
        raise ValueError("max_turns and top_k must be >= 1")
    if focus_mode not in FOCUS_MODES:
        raise ValueError(f"focus_mode must be one of {FOCUS_MODES}")
    params = params or GenParams()
    nl_text, action_text = bind_step(step, bindings)
    messages = list(history)
    if opening is None:
        messages.append(user(prompts.direct_attempt(prompts.step_block(step.index, nl_text, action_text))))
    turns: list[SolveTurn] = []
    calls = 0
    consumed = 0
    pending, pending_synth = opening, opening_synthetic

    def ask() -> str:
        nonlocal calls
        calls += 1
        return llm.complete(messages, params).text

    while True:
        if pending is not None:
            text, synth = pending, pending_synth
            pending = None
        else:
            text, synth = ask(), False
        d = detect_directive(text)
        messages.append(assistant(text))
        if isinstance(d, Answer):
            turns.append(SolveTurn(len(turns) + 1, think_of(text), answer=d.boxed, synthetic=synth))
            return DepthResult(d.boxed, tuple(turns), False, calls, tuple(messages))
        if consumed >= max_turns:
            break
        consumed += 1
        idx = len(turns) + 1
        if isinstance(d, Neither):
            turns.append(SolveTurn(idx, think_of(text), synthetic=synth, error="no directive"))
            messages.append(user(prompts.REASK))
            continue
        action = None
        if d.action_text:
            try:
                action = parse_action(d.action_text)
            except LogicalFormError as exc:
                turns.append(SolveTurn(idx, think_of(text), directive=d, synthetic=synth,
                                       error=f"directive: {exc}"))
                messages.append(user(prompts.REASK))
                continue
        if not d.step_text:
            turns.append(SolveTurn(idx, think_of(text), directive=d, synthetic=synth,
                                   error="empty search"))
            messages.append(user(prompts.REASK))
            continue
        hits = tuple(retriever.search(d.step_text, top_k, action))[:top_k]
        refs = format_references([c for c, _ in hits])
        verdict = None
        if focus_mode == "explicit" and hits:
            calls += 1
            try:
                verdict = focus_and_reason(d.step_text, [c for c, _ in hits], llm,
                                           GenParams(0.0, params.seed, params.max_tokens))
            except ProtocolError:
                verdict = FocusVerdict(False, "")
            refs += prompts.FOCUS_NOTE.format(verdict="Yes" if verdict.answerable else "No",
                                              reason=verdict.reason).rstrip()
        turns.append(SolveTurn(idx, think_of(text), directive=d, directive_action=action,
                               retrieved=hits, focus_verdict=verdict, synthetic=synth))
        messages.append(user(refs))

    # budget exhausted: one synthetic instruction, take a boxed answer if offered
    messages.append(user(prompts.ANSWER_NOW))
    text = ask()
    messages.append(assistant(text))
    d = detect_directive(text)
    if isinstance(d, Answer):
        turns.append(SolveTurn(len(turns) + 1, think_of(text), answer=d.boxed, synthetic=True))
        return DepthResult(d.boxed, tuple(turns), False, calls, tuple(messages))
    log.info("depth solve exhausted after %d turns", consumed)
    return DepthResult("", tuple(turns), True, calls, tuple(messages))
