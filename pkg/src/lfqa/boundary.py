"""Knowledge boundary determination for Retrieval sub-questions.

The model first tries to answer from internal knowledge. The attempt is
trusted only if a self-assessment says True *and* the lowest token
probability inside the boxed answer reaches the threshold ``tau``.
Anything ambiguous fails closed to retrieval.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Sequence

from . import prompts
from .errors import CapabilityError, EmptySequence, ProtocolError
from .llm import ChatClient, ChatMessage, Completion, GenParams, user

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.8

_REFUSAL = re.compile(
    r"(?:can(?:'|’)?t|cannot|can not)\s+answer\s+this\s+question|need\s+to\s+retrieve\s+external\s+knowledge",
    re.IGNORECASE,
)
_BOXED_TF = re.compile(r"\\boxed\{\s*(true|false)\s*\}", re.IGNORECASE)


def find_boxed(text: str, start: int = 0, end: int | None = None) -> tuple[str, int, int] | None:
    """Innermost ``\\boxed{...}`` in ``text[start:end]``.

    Returns (content, char_start, char_end) with surrounding whitespace
    trimmed from the content. Braces inside the box must balance.
    """
    end = len(text) if end is None else end
    i = text.find(prompts.BOXED + "{", start, end)
    while i >= 0:
        body = i + len(prompts.BOXED) + 1
        depth = 1
        j = body
        while j < end and depth:
            if text[j] == "{":
                depth += 1
            elif text[j] == "}":
                depth -= 1
            j += 1
        if depth == 0:
            inner = find_boxed(text, body, j - 1)
            if inner is not None:
                return inner
            a, b = body, j - 1
            while a < b and text[a].isspace():
                a += 1
            while b > a and text[b - 1].isspace():
                b -= 1
            return text[a:b], a, b
        i = text.find(prompts.BOXED + "{", i + 1, end)
    return None


def answer_span(text: str) -> tuple[int, int] | None:
    """Char range inside the first ``<answer>`` block (unclosed runs to the end)."""
    i = text.find(prompts.ANSWER_OPEN)
    if i < 0:
        return None
    body = i + len(prompts.ANSWER_OPEN)
    j = text.find(prompts.ANSWER_CLOSE, body)
    return body, (len(text) if j < 0 else j)


def boxed_answer(text: str) -> tuple[str, int, int] | None:
    span = answer_span(text)
    if span is None:
        return None
    return find_boxed(text, *span)


def span_probs(comp: Completion, start: int, end: int) -> list[float]:
    """Probabilities of every token overlapping ``[start, end)``."""
    if comp.token_spans is None:
        raise CapabilityError("completion carries no token logprobs")
    probs = [math.exp(lp) for a, b, lp in comp.token_spans if a < end and b > start]
    if not probs:
        raise ProtocolError("boxed span maps onto zero tokens", raw_text=comp.text)
    return probs


@dataclass(frozen=True)
class DirectAttempt:
    raw_text: str
    boxed_answer: str | None
    boxed_token_probs: tuple[float, ...] | None
    refused: bool
    messages: tuple[ChatMessage, ...] = field(default=(), compare=False, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "raw_text": self.raw_text,
            "boxed_answer": self.boxed_answer,
            "boxed_token_probs": list(self.boxed_token_probs) if self.boxed_token_probs is not None else None,
            "refused": self.refused,
        }


@dataclass(frozen=True)
class BoundaryVerdict:
    prompt_ok: bool
    likelihood_ok: bool
    score_c: float | None
    threshold_tau: float
    final_ok: bool
    notes: tuple[str, ...] = ()

    @classmethod
    def combine(cls, prompt_ok: bool, score_c: float | None, tau: float,
                notes: Sequence[str] = ()) -> "BoundaryVerdict":
        likelihood_ok = score_c is not None and score_c >= tau
        return cls(prompt_ok, likelihood_ok, score_c, tau, prompt_ok and likelihood_ok, tuple(notes))

    def to_dict(self) -> dict[str, Any]:
        return {"prompt_ok": self.prompt_ok, "likelihood_ok": self.likelihood_ok,
                "score_c": self.score_c, "threshold_tau": self.threshold_tau,
                "final_ok": self.final_ok, "notes": list(self.notes)}


@dataclass(frozen=True)
class DirectAnswer:
    answer: str
    verdict: BoundaryVerdict
    attempt: DirectAttempt


@dataclass(frozen=True)
class NeedsRetrieval:
    verdict: BoundaryVerdict | None
    attempt: DirectAttempt | None
    reason: str = ""


Decision = DirectAnswer | NeedsRetrieval


def attempt_messages(question_block: str, history: Sequence[ChatMessage] = ()) -> list[ChatMessage]:
    return [*history, user(prompts.direct_attempt(question_block))]


def attempt_direct_answer(subq: str, llm: ChatClient, params: GenParams | None = None,
                          history: Sequence[ChatMessage] = ()) -> DirectAttempt:
    """Ask for a direct answer with token logprobs and pull out the boxed span."""
    params = params or GenParams()
    messages = attempt_messages(subq, history)
    lp_params = GenParams(params.temperature, params.seed, params.max_tokens, want_logprobs=True)
    comp = llm.complete(messages, lp_params)
    text = comp.text
    boxed = boxed_answer(text)
    if boxed is not None and boxed[0]:
        probs = tuple(span_probs(comp, boxed[1], boxed[2]))
        return DirectAttempt(text, boxed[0], probs, False, tuple(messages))
    if _REFUSAL.search(text) or prompts.SEARCH_OPEN in text:
        return DirectAttempt(text, None, None, True, tuple(messages))
    raise ProtocolError("direct attempt neither boxed an answer nor refused", raw_text=text)


def assess_prompt(subq: str, answer: str, llm: ChatClient, params: GenParams | None = None) -> bool:
    if not answer:
        raise ValueError("answer must be non-empty")
    seed = params.seed if params else None
    comp = llm.complete([user(prompts.assess(subq, answer))], GenParams(0.0, seed))
    span = answer_span(comp.text)
    region = comp.text[span[0]:span[1]] if span else comp.text
    m = _BOXED_TF.search(region)
    if m is None:
        raise ProtocolError("assessment verdict is not \\boxed{True} or \\boxed{False}", raw_text=comp.text)
    return m.group(1).lower() == "true"


def likelihood_confidence(token_probs: Sequence[float]) -> float:
    """Confidence C: the smallest token probability of the answer span."""
    if len(token_probs) == 0:
        raise EmptySequence("no token probabilities")
    for p in token_probs:
        if not 0.0 < p <= 1.0:
            raise ValueError(f"probability {p} outside (0, 1]")
    return min(token_probs)


def decide(subq: str, llm: ChatClient, tau: float = DEFAULT_TAU, params: GenParams | None = None,
           history: Sequence[ChatMessage] = (), assess_question: str | None = None) -> Decision:
    """Direct answer if both checks pass, otherwise hand over to retrieval.

    ``subq`` is the block shown to the answering model; ``assess_question``
    (defaults to ``subq``) is the plain question used for self-assessment.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must be in [0, 1]")
    try:
        attempt = attempt_direct_answer(subq, llm, params, history)
    except CapabilityError as exc:
        return NeedsRetrieval(None, None, f"no logprobs: {exc}")
    except ProtocolError as exc:
        messages = tuple(attempt_messages(subq, history))
        return NeedsRetrieval(None, DirectAttempt(exc.raw_text or "", None, None, False, messages),
                              f"protocol: {exc}")
    if attempt.refused:
        return NeedsRetrieval(None, attempt, "refused")
    assert attempt.boxed_answer is not None and attempt.boxed_token_probs is not None

    notes = []
    try:
        prompt_ok = assess_prompt(assess_question or subq, attempt.boxed_answer, llm, params)
    except ProtocolError as exc:
        notes.append(f"assessment unparsable: {exc}")
        prompt_ok = False
    score = likelihood_confidence(attempt.boxed_token_probs)
    verdict = BoundaryVerdict.combine(prompt_ok, score, tau, notes)
    log.debug("boundary: prompt_ok=%s C=%.4f tau=%.3f", prompt_ok, score, tau)
    if verdict.final_ok:
        return DirectAnswer(attempt.boxed_answer, verdict, attempt)
    return NeedsRetrieval(verdict, attempt, "not confident")
