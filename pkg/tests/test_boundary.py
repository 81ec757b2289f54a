import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lfqa import prompts
from lfqa.boundary import (
    BoundaryVerdict,
    DirectAnswer,
    NeedsRetrieval,
    attempt_direct_answer,
    boxed_answer,
    decide,
    find_boxed,
    likelihood_confidence,
    span_probs,
)
from lfqa.errors import CapabilityError, EmptySequence, ProtocolError, TransportError
from lfqa.llm import Completion, FunctionClient, GenParams, ScriptedClient

BLOCK = "Step1: who\nAction1: Retrieval(s=s1:a[`b'], p=p1:c, o=o1:d)"


def comp(text, box_probs=(), default=0.99):
    """Character-level tokens so the boxed span maps onto exactly its characters."""
    b = find_boxed(text)
    spans = []
    k = 0
    for i in range(len(text)):
        p = default
        if b and b[1] <= i < b[2] and box_probs:
            p = box_probs[min(k, len(box_probs) - 1)]
            k += 1
        spans.append((i, i + 1, math.log(p)))
    return Completion(text, tuple(spans))


class Model:
    """Answers the direct attempt and the self-assessment; counts calls."""

    def __init__(self, attempt, verdict="True"):
        self.attempt = attempt
        self.verdict = verdict
        self.calls = []

    def __call__(self, messages, params):
        last = messages[-1].content
        if last.startswith("Analyze whether"):
            self.calls.append(("assess", params))
            if isinstance(self.verdict, Exception):
                raise self.verdict
            return Completion(f"<think>ok</think><answer>\\boxed{{{self.verdict}}}</answer>")
        self.calls.append(("attempt", params))
        return self.attempt if isinstance(self.attempt, Completion) else self.attempt(params)


def test_find_boxed():
    assert find_boxed("x \\boxed{ Houston Texans } y")[0] == "Houston Texans"
    text = "\\[ \\boxed{a{b}c} \\]"
    content, a, b = find_boxed(text)
    assert content == "a{b}c" and text[a:b] == "a{b}c"
    assert find_boxed("no box") is None
    assert find_boxed("\\boxed{unbalanced") is None


def test_boxed_answer_prefers_answer_block():
    text = "<think>\\boxed{draft}</think><answer>\\boxed{final}</answer>"
    assert boxed_answer(text)[0] == "final"


def test_span_probs_include_partial_overlap():
    text = "ab\\boxed{cd}"
    c = Completion(text, ((0, 9, math.log(0.5)), (9, 10, math.log(0.9)), (10, 12, math.log(0.8))))
    a, b = find_boxed(text)[1:]
    assert span_probs(c, a, b) == pytest.approx([0.9, 0.8])
    with pytest.raises(CapabilityError):
        span_probs(Completion(text), a, b)


def test_refusal_recognised():
    fn = Model(Completion("<think>based on my internal knowledge, I can't answer this question, I need to retrieve "
                          "external knowledge.</think>\n<search>" + BLOCK + "</search>"))
    attempt = attempt_direct_answer(BLOCK, FunctionClient(fn))
    assert attempt.refused and attempt.boxed_answer is None and attempt.boxed_token_probs is None
    assert fn.calls[0][1].want_logprobs


def test_attempt_prompt_wording():
    seen = []

    def capture(messages, params):
        seen.append(messages[-1].content)
        return comp("<answer>\\boxed{x}</answer>", (0.9,))
    attempt_direct_answer(BLOCK, FunctionClient(capture))
    assert seen[0] == prompts.direct_attempt(BLOCK)
    assert seen[0].endswith("\nQuestion: \n" + BLOCK)


def test_neither_boxed_nor_refused_is_protocol_error():
    with pytest.raises(ProtocolError):
        attempt_direct_answer(BLOCK, FunctionClient(Model(comp("I think it is Paris."))))


@pytest.mark.parametrize("probs,verdict,expect", [
    ((0.95, 0.9), "True", DirectAnswer),
    ((0.95, 0.3), "True", NeedsRetrieval),
    ((0.95, 0.9), "False", NeedsRetrieval),
    ((0.5,), "False", NeedsRetrieval),
])
def test_decide_dual_validation(probs, verdict, expect):
    fn = Model(comp("<think>t</think><answer>\\boxed{Paris}</answer>", probs), verdict)
    d = decide(BLOCK, FunctionClient(fn), 0.8)
    assert isinstance(d, expect)
    assert d.verdict.score_c == pytest.approx(min(probs))
    assert d.verdict.final_ok == (verdict == "True" and min(probs) >= 0.8)


def test_threshold_is_inclusive():
    fn = Model(comp("<answer>\\boxed{Paris}</answer>", (1.0,)))
    assert isinstance(decide(BLOCK, FunctionClient(fn), 1.0), DirectAnswer)


def test_refusal_skips_assessment():
    fn = Model(Completion("I can't answer this question, I need to retrieve external knowledge."))
    d = decide(BLOCK, FunctionClient(fn))
    assert isinstance(d, NeedsRetrieval) and d.verdict is None and d.reason == "refused"
    assert [k for k, _ in fn.calls] == ["attempt"]


def test_assessment_runs_at_temperature_zero():
    fn = Model(comp("<answer>\\boxed{Paris}</answer>", (0.99,)))
    decide(BLOCK, FunctionClient(fn), params=GenParams(temperature=0.7, seed=3))
    kinds = dict(fn.calls)
    assert kinds["attempt"].temperature == 0.7
    assert kinds["assess"].temperature == 0.0 and kinds["assess"].seed == 3


def test_fail_closed_on_unparsable_assessment():
    fn = Model(comp("<answer>\\boxed{Paris}</answer>", (0.99,)), verdict="maybe")
    d = decide(BLOCK, FunctionClient(fn))
    assert isinstance(d, NeedsRetrieval)
    assert d.verdict.prompt_ok is False and d.verdict.notes


def test_fail_closed_on_missing_logprobs():
    client = ScriptedClient([])  # never reached
    fn = Model(Completion("<answer>\\boxed{Paris}</answer>"))
    d = decide(BLOCK, FunctionClient(fn))
    assert isinstance(d, NeedsRetrieval) and "logprobs" in d.reason
    assert len(client) == 0


def test_fail_closed_on_garbled_attempt():
    d = decide(BLOCK, FunctionClient(Model(comp("no idea"))))
    assert isinstance(d, NeedsRetrieval) and d.attempt.raw_text == "no idea"


def test_transport_error_propagates():
    def boom(params):
        raise TransportError("down")
    with pytest.raises(TransportError):
        decide(BLOCK, FunctionClient(Model(boom)))


def test_likelihood_confidence_examples():
    assert likelihood_confidence([0.95, 0.3]) == 0.3
    with pytest.raises(EmptySequence):
        likelihood_confidence([])
    with pytest.raises(ValueError):
        likelihood_confidence([1.2])


@given(st.lists(st.floats(min_value=1e-9, max_value=1.0), min_size=1, max_size=50))
def test_likelihood_confidence_is_min(probs):
    assert likelihood_confidence(probs) == min(probs)


@given(st.booleans(), st.none() | st.floats(0, 1), st.floats(0, 1))
def test_verdict_combine(prompt_ok, score, tau):
    v = BoundaryVerdict.combine(prompt_ok, score, tau)
    assert v.final_ok == (prompt_ok and score is not None and score >= tau)
