"""Acceptance suite: one test per criterion, each at its stated size and tolerance.

A summary line per criterion is printed at the end of the pytest run.
"""

import json
import math
import random
import time
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import load_script
from lfqa.boundary import DirectAnswer, decide, likelihood_confidence
from lfqa.cli import main
from lfqa.depth import solve_depth
from lfqa.engine import Deps, solve
from lfqa.errors import DivisionByZero, LogicalFormError
from lfqa.evaluation import exact_match, f1_score
from lfqa.lf import Step, parse_action, render_action
from lfqa.llm import Completion, FunctionClient
from lfqa.mathexpr import evaluate, format_result, round_cents
from lfqa.planner import decompose
from lfqa.retriever import BM25Retriever, Chunk, build_index
from oracles import bm25_rank, f1_oracle, round_half_up
from strategies import actions, expressions

criterion = pytest.mark.criterion

FILM_QUESTION = "Which film has the director who died first, Hit Parade Of 1947 or Khiladi 420?"
FILM_ACTIONS = [
    "Retrieval(s=s1:film[`Hit Parade Of 1947'], p=p1:director, o=o1:director)",
    "Retrieval(s=o1, p=p2:deathtime, o=o2:deathtime)",
    "Retrieval(s=s3:film[`Khiladi 420'], p=p3:director, o=o3:director)",
    "Retrieval(s=o3, p=p4:deathtime, o=o4:deathtime)",
    "Deduce(op=choice, content=[`o2',`o4'], target=`which film was directed by the director "
    "who died first according to o2 and o4')->o5",
]
HONEY_QUESTION = "who does the honey badger play for in the nfl"


@criterion(1, "five-step film plan replays with the expected dependency edges")
def test_film_plan_replay(scripted):
    t0 = time.perf_counter()
    vp, _ = decompose(FILM_QUESTION, scripted("film_directors"), retries=0)
    elapsed = time.perf_counter() - t0
    assert len(vp.steps) == 5
    assert [render_action(s.action) for s in vp.steps] == [render_action(parse_action(a)) for a in FILM_ACTIONS]
    assert [s.action_text for s in vp.steps] == FILM_ACTIONS
    edges = {(i, j) for i, deps in vp.ref_graph.items() for j in deps}
    assert edges == {(2, 1), (4, 3), (5, 2), (5, 4)}
    assert elapsed < 1.0


@criterion(2, "honey badger question solves end to end via two search turns, byte-stable")
def test_honey_badger_end_to_end(scripted, retriever):
    t0 = time.perf_counter()
    dumps = []
    for _ in range(3):
        trace = solve(HONEY_QUESTION, Deps(scripted("honey_badger"), retriever))
        dumps.append(trace.to_json())
    elapsed = time.perf_counter() - t0
    assert trace.final_answer == "Houston Texans"
    step1 = trace.step_records[0]
    assert step1.binding["source"] == "depth_solve"
    assert sum(t["directive"] is not None for t in step1.depth["turns"]) == 2
    assert len(set(dumps)) == 1
    assert elapsed / 3 < 1.0


def _attempt_model(probs, verdict):
    """Direct attempt boxing "Paris" split into len(probs) tokens, then a fixed verdict."""
    text = "<think>known</think>\n<answer>\\boxed{Paris}</answer>"
    start = text.index("Paris")
    cuts = [start + round(len("Paris") * k / len(probs)) for k in range(1, len(probs))]
    bounds = [start, *cuts, start + len("Paris")]
    spans = [(0, start, 0.0)]
    spans += [(a, b, math.log(p)) for a, b, p in zip(bounds, bounds[1:], probs)]
    spans.append((bounds[-1], len(text), 0.0))

    def fn(messages, params):
        if params.want_logprobs:
            return Completion(text, tuple(spans))
        return Completion(f"<answer>\\boxed{{{verdict}}}</answer>")
    return FunctionClient(fn)


@criterion(3, "confidence is the span minimum; dual validation is a conjunction")
def test_confidence_math():
    rng = random.Random(3)
    for _ in range(10_000):
        n = rng.randint(1, 40)
        seq = [rng.choice([1.0, rng.random() or 1.0, 1e-300, 0.8, rng.uniform(0.79, 0.81)]) for _ in range(n)]
        seq = [p if p > 0 else 1.0 for p in seq]
        oracle = seq[0]
        for p in seq[1:]:
            if p < oracle:
                oracle = p
        assert likelihood_confidence(seq) == oracle
    for prompt_ok in (True, False):
        for likelihood_ok in (True, False):
            probs = [0.95, 0.9] if likelihood_ok else [0.95, 0.5]
            d = decide("Step1: capital of France?", _attempt_model(probs, prompt_ok), tau=0.8)
            assert d.verdict.prompt_ok == prompt_ok
            assert d.verdict.likelihood_ok == likelihood_ok
            assert d.verdict.final_ok == (prompt_ok and likelihood_ok)
            assert isinstance(d, DirectAnswer) == (prompt_ok and likelihood_ok)


def _fuzz_strings(n, seed=4):
    rng = random.Random(seed)
    alphabet = list("RetrievalDeduceMathOutput()[]{}=,:.-> `'\"“”#_0123456789sopx\n\t\\") + ["\x00", "é", "😀"]
    samples = [render_action(parse_action(a)) for a in FILM_ACTIONS] + [
        "Math(content=[o1, #2], target=`sum')->o3", "Output(o1, #2)",
        "Retrieval(s=s1:burn, p=p1:treatment, o=o1:drug, s.Degree=`II')"]
    out = []
    for i in range(n):
        mode = i % 3
        if mode == 0:
            out.append("".join(rng.choice(alphabet) for _ in range(rng.randint(0, 60))))
        else:
            s = list(rng.choice(samples))
            for _ in range(rng.randint(1, 4)):
                op = rng.randrange(3)
                at = rng.randrange(len(s) + 1)
                if op == 0 and s:
                    del s[min(at, len(s) - 1)]
                elif op == 1:
                    s.insert(at, rng.choice(alphabet))
                else:
                    s = s[:at]
            out.append("".join(s))
    return out


def _run_examples(strategy, n, check):
    """Run ``check`` on at least ``n`` generated examples; returns how many ran."""
    seen = []

    @settings(max_examples=n, deadline=None, database=None, derandomize=True,
              suppress_health_check=list(HealthCheck))
    @given(strategy)
    def run(x):
        seen.append(1)
        check(x)
    run()
    return len(seen)


@criterion(4, "1,000 actions round-trip and 10,000 fuzz strings raise only typed errors")
def test_parser_round_trip_and_fuzz():
    # generating the inputs is setup; the time limit applies to parsing and rendering
    generated = []
    assert _run_examples(actions, 1_000, generated.append) >= 1_000
    fuzz = _fuzz_strings(10_000)
    t0 = time.perf_counter()
    for a in generated[:1_000]:
        assert parse_action(render_action(a)) == a
    for text in fuzz:
        try:
            parse_action(text)
        except LogicalFormError as exc:
            assert exc.offset is not None and 0 <= exc.offset <= len(text)
    assert time.perf_counter() - t0 < 10.0


@criterion(5, "decimal math matches a rational oracle; fraud amounts total 4894.30")
def test_math_oracle():
    counts = {"value": 0, "zero_div": 0}

    def check(case):
        text, exact = case
        if exact is None:
            with pytest.raises(DivisionByZero):
                evaluate(text)
            counts["zero_div"] += 1
            return
        value, _ = evaluate(text)
        assert abs(Fraction(round_cents(value)) - round_half_up(exact)) <= Fraction(5, 1000), text
        counts["value"] += 1
    assert _run_examples(expressions(depth=4), 500, check) >= 500
    assert counts["value"] >= 400
    value, unit = evaluate("sum([210.4, 569.2, 1035.2, 2044.5, 1035])")
    assert format_result(value, unit) == "4894.30"
    flags = dict(load_script("fraud_total_check").report())
    assert flags == {"4989.40": False, "4894.40": False, "4894.30": True}


@criterion(6, "BM25 top-k equals a brute-force ranking on 50 random corpora")
def test_retriever_oracle():
    rng = random.Random(6)
    vocab = [f"w{i}" for i in range(30)] + ["honey", "badger", "texans", "film", "1947"]
    for _ in range(50):
        n_docs = rng.randint(1, 100)
        # a few duplicated documents so that score ties actually occur
        bodies = [" ".join(rng.choices(vocab[: rng.randint(3, len(vocab))], k=rng.randint(1, 25)))
                  for _ in range(n_docs)]
        for i in range(0, n_docs, 7):
            bodies[i] = bodies[0]
        ids = rng.sample(range(10_000), n_docs)
        docs = [(f"doc{ids[i]:05d}", rng.choice(["", "honey badger", "w1 w2"]) if i else "", b)
                for i, b in enumerate(bodies)]
        r = BM25Retriever(build_index([Chunk(*d) for d in docs]))
        for _ in range(20):
            q = " ".join(rng.choices(vocab + ["absent"], k=rng.randint(1, 6)))
            k = rng.randint(1, 15)
            assert [c.id for c, _ in r.search(q, k)] == [i for i, _ in bm25_rank(docs, q)[:k]]


@criterion(7, "F1 matches a multiset-overlap oracle; EM implies F1; Houston vs Houston Texans")
def test_metrics():
    rng = random.Random(7)
    words = ["the", "a", "an", "Houston", "texans", "Texans.", "Paris", "paris!", "1947", "of", "x-y", ""]
    for _ in range(10_000):
        pred = " ".join(rng.choices(words, k=rng.randint(0, 6)))
        golds = [" ".join(rng.choices(words, k=rng.randint(0, 6))) for _ in range(rng.randint(1, 3))]
        f1 = f1_score(pred, golds)
        assert abs(f1 - max(f1_oracle(pred, g) for g in golds)) <= 1e-9
        if exact_match(pred, golds) == 1:
            assert f1 == 1.0
    assert abs(f1_score("Houston", ["Houston Texans"]) - 0.6667) <= 1e-4


@criterion(8, "stability is 1.000 on identical runs and 0.750 on the seed-divergent set")
def test_stability(fixtures_dir, capsys):
    corpus = str(fixtures_dir / "corpus.jsonl")
    for name, expected in (("eval10", "stability=1.000"), ("stability4", "stability=0.750")):
        rc = main(["stability", "--dataset", str(fixtures_dir / f"{name}.dataset.jsonl"), "--corpus", corpus,
                   "--scripted-fixtures", str(fixtures_dir / f"{name}.fixtures.jsonl")])
        assert rc == 0
        assert capsys.readouterr().out.splitlines()[-1] == expected


_STEP_TEXT = "Retrieval(s=s1:player[`Honey Badger`], p=p1:playsFor, o=o1:team)"
_STEP = Step(1, "who does the honey badger play for", parse_action(_STEP_TEXT), _STEP_TEXT)
_CORPUS = BM25Retriever(build_index([Chunk("a", "Tyrann Mathieu", "The Honey Badger plays for Houston."),
                                     Chunk("b", "Honey badger", "A mammal."), Chunk("c", "Other", "text")]))
_replies = st.one_of(
    st.sampled_from([
        "<search>Step1: who is the honey badger\nAction1: " + _STEP_TEXT + "</search>",
        "<search>honey badger team</search>",
        "<search>Step1: x\nAction1: Retrieval(s=</search>",
        "<search></search>",
        "<answer>\\boxed{Houston Texans}</answer>",
        "<answer></answer>",
        "<think>still thinking</think>",
    ]),
    st.text(max_size=40),
)


class Instrumented:
    def __init__(self, replies):
        self.replies = replies
        self.calls = 0

    def complete(self, messages, params):
        self.calls += 1
        i = self.calls - 1
        return Completion(self.replies[i % len(self.replies)] if self.replies else "")


@criterion(9, "depth solving stays within max_turns retrievals and 2*max_turns+2 calls")
@settings(max_examples=500, deadline=None, database=None, derandomize=True)
@given(st.lists(_replies, max_size=15), st.integers(1, 6), st.integers(1, 3),
       st.sampled_from(["inline", "explicit"]), st.one_of(st.none(), _replies))
def test_budget(replies, max_turns, top_k, focus_mode, opening):
    llm = Instrumented(replies)
    r = solve_depth(_STEP, {}, _CORPUS, llm, max_turns, top_k, opening=opening, focus_mode=focus_mode)
    assert r.retrievals <= max_turns
    assert llm.calls <= 2 * max_turns + 2


@criterion(10, "eval reports are byte-identical at parallelism 1 and 4")
def test_eval_determinism(fixtures_dir, tmp_path, capsys):
    outputs = {}
    for p in (1, 4):
        report = tmp_path / f"p{p}" / "report.json"
        rc = main(["eval", "--dataset", str(fixtures_dir / "eval10.dataset.jsonl"),
                   "--corpus", str(fixtures_dir / "corpus.jsonl"),
                   "--scripted-fixtures", str(fixtures_dir / "eval10.fixtures.jsonl"),
                   "--parallelism", str(p), "--report-out", str(report)])
        assert rc == 0
        outputs[p] = (report.read_bytes(), report.with_suffix(".txt").read_bytes(), capsys.readouterr().out)
    assert json.loads(outputs[1][0])["n"] == 10
    assert outputs[1] == outputs[4]
