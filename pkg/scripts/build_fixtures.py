"""Regenerate the scripted replay fixtures under tests/fixtures/.

A rule-based stand-in model answers every prompt the engine sends. The
engine runs each scenario against it through a RecordingClient, and the
recorded exchanges become the fixture files that ScriptedClient replays.

    python3 scripts/build_fixtures.py            # write tests/fixtures/
    python3 scripts/build_fixtures.py --check    # exit 1 if files would change
"""

from __future__ import annotations

import argparse
import filecmp
import json
import math
import re
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from lfqa import prompts
from lfqa.config import RunConfig
from lfqa.engine import Deps, solve
from lfqa.llm import ChatMessage, Completion, FunctionClient, GenParams, RecordingClient
from lfqa.retriever import BM25Retriever, Chunk, build_index

DEFAULT_OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
HIGH = 0.99

REFUSAL_THINK = "based on my internal knowledge, I can't answer this question, I need to retrieve external knowledge."


def search(think: str, step: str, action: str) -> str:
    return f"<think>{think}</think>\n<search>Step1: {step}\nAction1: {action}</search>"


def boxed(think: str, answer: str) -> str:
    return f"<think>{think}</think>\n<answer>\\boxed{{{answer}}}</answer>"


@dataclass
class SubQuestion:
    """How the stand-in model treats one Retrieval sub-question.

    ``direct`` maps a seed (or None for any seed) to the direct answer; no
    entry means the model refuses. ``replies`` are the depth-solving turns
    after the opening search, ``answer_now`` the reply to the budget
    instruction.
    """

    key: str
    direct: dict[int | None, str] = field(default_factory=dict)
    probs: tuple[float, ...] = (HIGH,)
    assess: bool = True
    replies: list[str] = field(default_factory=list)
    answer_now: str = "<think>I cannot find it.</think>\nI do not know."

    def direct_for(self, seed: int | None) -> str | None:
        return self.direct.get(seed, self.direct.get(None))


@dataclass
class Scenario:
    id: str
    question: str
    think: str
    plan: str
    golds: tuple[str, ...]
    subqs: list[SubQuestion]
    deduce: dict[str, str] = field(default_factory=dict)
    math: dict[str, str] = field(default_factory=dict)


def two_step(nl: str, action: str) -> str:
    return f"Step1: {nl}\nAction1: {action}\nStep2: Output #1\nAction2: Output(o1)"


CORPUS = [
    Chunk("mathieu-1", "Tyrann Mathieu",
          "Tyrann Mathieu Tyrann Devine Mathieu (; born May 13, 1992) is an American football safety for the "
          "Houston Texans of the National Football League (NFL). Known as the Honey Badger in college."),
    Chunk("mathieu-2", "Tyrann Mathieu",
          "the game on a Phil Dawson field goal. On November 26, Mathieu recorded his second Interception of the "
          "season in a 27-24 overtime win against the Jacksonville Jaguars. He plays for the Houston Texans."),
    Chunk("badger-1", "Honey badger",
          "The honey badger is a mammal widely distributed in Africa and Asia. It is known for its toughness."),
    Chunk("hitparade-1", "Hit Parade Of 1947",
          "Hit Parade Of 1947 is an American musical film directed by Director A."),
    Chunk("khiladi-1", "Khiladi 420", "Khiladi 420 is an Indian action film directed by Director B."),
    Chunk("directorb-1", "Director B", "Director B was a film director. Director B died in 1965."),
    Chunk("directora-1", "Director A", "Director A was a film director who died in 1980."),
    Chunk("fraud-1", "Credit card fraud",
          "The offense of credit card fraud includes using a credit card that was picked up, using a forged or "
          "invalid card, and using another person's card without authorization to obtain property."),
    Chunk("mobydick-1", "Moby-Dick", "Moby-Dick is an 1851 novel by American writer Herman Melville."),
    Chunk("berlin-1", "Berlin Wall", "The Berlin Wall fell on 9 November 1989, opening the border."),
    Chunk("mozart-1", "Wolfgang Amadeus Mozart", "Wolfgang Amadeus Mozart was born in Salzburg in 1756."),
    Chunk("monalisa-1", "Mona Lisa", "The Mona Lisa is a portrait painting attributed to Leonardo."),
    Chunk("monalisa-2", "Leonardo", "Leonardo worked in Florence and Milan; his portrait paintings are famous."),
    Chunk("lighthouse-1", "Lighthouse", "A lighthouse is a tower that emits light to guide ships at sea."),
    Chunk("eiffel-1", "Eiffel Tower", "The Eiffel Tower in Paris is 330 metres tall."),
    Chunk("paris-1", "Paris", "Paris is the capital and largest city of France."),
]

FILM_PLAN = (
    "Step1: Who is the director of Hit Parade Of 1947?\n"
    "Action1: Retrieval(s=s1:film[`Hit Parade Of 1947'], p=p1:director, o=o1:director)\n"
    "Step2: When did #1 die?\n"
    "Action2: Retrieval(s=o1, p=p2:deathtime, o=o2:deathtime)\n"
    "Step3: Who is the director of Khiladi 420?\n"
    "Action3: Retrieval(s=s3:film[`Khiladi 420'], p=p3:director, o=o3:director)\n"
    "Step4: When did #3 die?\n"
    "Action4: Retrieval(s=o3, p=p4:deathtime, o=o4:deathtime)\n"
    "Step5: Which film was directed by the director who died first according to #2 and #4?\n"
    "Action5: Deduce(op=choice, content=[`o2',`o4'], target=`which film was directed by the director who died "
    "first according to o2 and o4')->o5 "
)

FRAUD_QUESTION = (
    "Zhang found a wallet on the street with a credit card inside and used the card for purchases of "
    "210.4 yuan, 569.2 yuan, 1035.2 yuan, 2044.5 yuan and 1035 yuan. "
    "What's the total amount involved in Zhang’s credit card fraud?"
)
FRAUD_PLAN = (
    "Step1: What's the elements of the offense credit card fraud?\n"
    "Action1: Retrieval(s=s1:offense[credit card fraud], p=p1: found, o=o1:elements)\n"
    "Step2: Which amounts are considered part of the credit card fraud amount?\n"
    "Action2: Deduce(op=extract, content=[o1, Zhang found a wallet on the street…], target=Which amounts are "
    "considered part of the credit card fraud amount?)->o2\n"
    "Step3: What's the total amount involved in Zhang’s credit card fraud?\n"
    "Action3: Math(content=[o1, o2], target=What's the total amount involved in Zhang’s credit card fraud.)->o3\n"
    "Step4: Output #3.\n"
    "Action4: Output(o3)"
)

HONEY_BADGER = Scenario(
    "honey-badger",
    "who does the honey badger play for in the nfl",
    "This is a sports inquiry problem. Our investigation ...",
    two_step("who does the honey badger play for in the nfl",
             "Retrieval(s=s1:player[`Honey Badger`], p=p1:playsFor, o=o1:team)"),
    ("Houston Texans",),
    [SubQuestion("honey badger play for", replies=[
        "<think> Based on the search results, the nickname \"Honey Badger\" is associated with Tyrann Mathieu, an "
        "American football player. I will now search for the team he plays for.</think>\n"
        "<search>Step1:  Who does Tyrann Mathieu play for in the NFL? \n"
        "Action1:Retrieval(s=s1:human[`Tyrann Mathieu`], p=p1:playsFor, o=o1:sportsTeam)</search>",
        "<think> The search results indicate that Tyrann Mathieu is currently playing for the Houston Texans in the "
        "NFL.</think>\n<answer> The Honey Badger plays for \\[ \\boxed{Houston Texans} \\] in the NFL. </answer>.",
    ])],
)

FILMS = Scenario(
    "film-directors",
    "Which film has the director who died first, Hit Parade Of 1947 or Khiladi 420?",
    "This is a comparison problem. We first identify both directors, then compare when they died.",
    FILM_PLAN,
    ("Khiladi 420",),
    [
        # refuses, one search
        SubQuestion("director of Hit Parade Of 1947", replies=[
            boxed("The reference says the film was directed by Director A.", "Director A")]),
        # confident direct answer
        SubQuestion("When did Director A die", direct={None: "1980"}, probs=(0.97, 0.95)),
        # likelihood check fails
        SubQuestion("director of Khiladi 420", direct={None: "Director B"}, probs=(0.9, 0.42), replies=[
            boxed("The reference names Director B as the director.", "Director B")]),
        # self-assessment says False
        SubQuestion("When did Director B die", direct={None: "1970"}, probs=(0.96,), assess=False, replies=[
            boxed("The reference says Director B died in 1965.", "1965")]),
    ],
    deduce={"died first": "Khiladi 420"},
)

FRAUD = Scenario(
    "card-fraud",
    FRAUD_QUESTION,
    "This is a legal calculation problem. We need the elements of the offense, the amounts, and their total.",
    FRAUD_PLAN,
    ("4894.30 yuan",),
    [SubQuestion("elements of the offense credit card fraud", replies=[
        boxed("The reference lists the ways the offense is committed.",
              "using a credit card that was picked up, a forged or invalid card, or another person's card "
              "without authorization")])],
    deduce={"Which amounts": "210.4 yuan, 569.2 yuan, 1035.2 yuan, 2044.5 yuan, 1035 yuan"},
    math={"total amount": "sum([210.4, 569.2, 1035.2, 2044.5, 1035]) yuan"},
)

CAPITAL = Scenario(
    "q-capital", "What is the capital of France?", "A single lookup.",
    two_step("What is the capital of France?", "Retrieval(s=s1:country[`France'], p=p1:capital, o=o1:city)"),
    ("Paris",),
    [SubQuestion("capital of France", direct={None: "Paris"}, probs=(0.98,))],
)

MOBY = Scenario(
    "q-moby", "Who wrote Moby-Dick?", "A single lookup.",
    two_step("Who wrote Moby-Dick?", "Retrieval(s=s1:book[`Moby-Dick'], p=p1:author, o=o1:person)"),
    ("Herman Melville",),
    [SubQuestion("Who wrote Moby-Dick", direct={None: "Nathaniel Hawthorne"}, probs=(0.93, 0.9), assess=False,
                 replies=[boxed("The reference says the novel is by Herman Melville.", "Herman Melville")])],
)

BERLIN = Scenario(
    "q-berlin", "In what year did the Berlin Wall fall?", "A single lookup.",
    two_step("In what year did the Berlin Wall fall?",
             "Retrieval(s=s1:structure[`Berlin Wall'], p=p1:fallYear, o=o1:year)"),
    ("1989",),
    [SubQuestion("Berlin Wall fall", direct={None: "1991"}, probs=(0.55,),
                 replies=[boxed("The reference dates the fall to 9 November 1989.", "1989")])],
)

MOZART = Scenario(
    "q-mozart", "Where was the composer of The Magic Flute born?", "Find the composer, then the birthplace.",
    "Step1: Who composed The Magic Flute?\n"
    "Action1: Retrieval(s=s1:opera[`The Magic Flute'], p=p1:composer, o=o1:person)\n"
    "Step2: Where was #1 born?\n"
    "Action2: Retrieval(s=o1, p=p2:birthplace, o=o2:place)\n"
    "Step3: Output #2\n"
    "Action3: Output(o2)",
    ("Salzburg",),
    [
        SubQuestion("composed The Magic Flute", direct={None: "Wolfgang Amadeus Mozart"}, probs=(0.99, 0.97, 0.98)),
        SubQuestion("Where was Wolfgang Amadeus Mozart born", replies=[
            boxed("The reference says Mozart was born in Salzburg.", "Salzburg")]),
    ],
)

MONA = Scenario(
    "q-mona", "Who painted the Mona Lisa?", "A single lookup.",
    two_step("Who painted the Mona Lisa?", "Retrieval(s=s1:painting[`Mona Lisa'], p=p1:painter, o=o1:person)"),
    ("Leonardo da Vinci",),
    # keeps searching until the budget runs out
    [SubQuestion("painted the Mona Lisa", replies=[
        search("Not conclusive yet.", "Mona Lisa painter", "Retrieval(s=s1:painting[`Mona Lisa'], p=p1:painter, o=o1:person)"),
        search("Still checking.", "Leonardo portrait painter", "Retrieval(s=s1:person[`Leonardo'], p=p1:occupation, o=o1:occupation)"),
        search("One more check.", "Mona Lisa attribution", "Retrieval(s=s1:painting[`Mona Lisa'], p=p1:attributedTo, o=o1:person)"),
    ], answer_now=boxed("The references attribute the painting to Leonardo.", "Leonardo"))],
)

LIGHTHOUSE = Scenario(
    "q-lighthouse", "What was the name of the lighthouse keeper's cat in the 1901 almanac?", "A single lookup.",
    two_step("What was the name of the lighthouse keeper's cat in the 1901 almanac?",
             "Retrieval(s=s1:almanac[`1901 almanac'], p=p1:keeperCat, o=o1:name)"),
    ("Whiskers",),
    # one malformed reply, two searches, then no answer at all
    [SubQuestion("lighthouse keeper's cat", replies=[
        "<think>Let me think about lighthouses.</think>\nLighthouses guide ships.",
        search("Searching again.", "lighthouse keeper cat 1901", "Retrieval(s=s1:almanac[`1901 almanac'], p=p1:keeperCat, o=o1:name)"),
        search("Searching once more.", "almanac 1901 cat", "Retrieval(s=s1:almanac[`1901 almanac'], p=p1:keeperCat, o=o1:name)"),
    ], answer_now="<think>The references do not mention the cat.</think>\nI still cannot answer this.")],
)

EIFFEL = Scenario(
    "q-eiffel", "Is the Eiffel Tower taller than the Statue of Liberty?", "Compare two heights.",
    "Step1: How tall is the Eiffel Tower?\n"
    "Action1: Retrieval(s=s1:structure[`Eiffel Tower'], p=p1:height, o=o1:height)\n"
    "Step2: How tall is the Statue of Liberty?\n"
    "Action2: Retrieval(s=s2:structure[`Statue of Liberty'], p=p2:height, o=o2:height)\n"
    "Step3: Is #1 greater than #2?\n"
    "Action3: Deduce(op=judgement, content=[`o1',`o2'], target=`whether the Eiffel Tower is taller than the "
    "Statue of Liberty')->o3\n"
    "Step4: Output #3\n"
    "Action4: Output(o3)",
    ("True", "yes"),
    [
        SubQuestion("How tall is the Eiffel Tower", direct={None: "330 metres"}, probs=(0.95, 0.99)),
        SubQuestion("How tall is the Statue of Liberty", direct={None: "93 metres"}, probs=(0.9, 0.99)),
    ],
    deduce={"taller than": "True"},
)

KILIMANJARO = Scenario(
    "q-africa", "What is the highest mountain in Africa?", "A single lookup.",
    two_step("What is the highest mountain in Africa?",
             "Retrieval(s=s1:continent[`Africa'], p=p1:highestMountain, o=o1:mountain)"),
    ("Mount Kilimanjaro", "Kilimanjaro"),
    # the answer depends on the sampling seed
    [SubQuestion("highest mountain in Africa", direct={0: "Mount Kilimanjaro", 1: "Kibo", None: "Mount Kilimanjaro"},
                 probs=(0.97, 0.96))],
)

EVAL10 = [HONEY_BADGER, FILMS, FRAUD, CAPITAL, MOBY, BERLIN, MOZART, MONA, LIGHTHOUSE, EIFFEL]
STABILITY4 = [CAPITAL, MOBY, BERLIN, KILIMANJARO]
ALL = {s.id: s for s in [*EVAL10, KILIMANJARO]}


# -- the stand-in model -----------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:\w+|[^\w\s])|\s+$")


def completion(text: str, box_probs: Sequence[float] = ()) -> Completion:
    """Tokenize roughly by words and attach logprobs; tokens inside the boxed answer take ``box_probs``."""
    m = re.search(r"\\boxed\{([^{}]*)\}", text)
    lo, hi = (m.start(1), m.end(1)) if m else (-1, -1)
    spans, pos, k = [], 0, 0
    for tok in _TOKEN.findall(text):
        a, b = pos, pos + len(tok)
        p = HIGH
        if box_probs and a < hi and b > lo:
            p = box_probs[min(k, len(box_probs) - 1)]
            k += 1
        spans.append((a, b, math.log(p)))
        pos = b
    assert pos == len(text), "tokenizer must tile the text"
    return Completion(text, tuple(spans))


def _after(text: str, marker: str) -> str:
    return text.split(marker, 1)[1] if marker in text else ""


class StandIn:
    """Answers engine prompts from the scenario tables above."""

    def __init__(self, scenarios: Sequence[Scenario]):
        self.by_question = {s.question: s for s in scenarios}
        self.subqs = [q for s in scenarios for q in s.subqs]
        self.deduce = {k: v for s in scenarios for k, v in s.deduce.items()}
        self.math = {k: v for s in scenarios for k, v in s.math.items()}

    def subq(self, text: str) -> SubQuestion:
        for q in self.subqs:
            if q.key in text:
                return q
        raise KeyError(f"no sub-question rule matches {text[:80]!r}")

    def __call__(self, messages: list[ChatMessage], params: GenParams) -> Completion:
        last = messages[-1].content
        if last.startswith("You are an expert in function calls"):
            q = last.split("Question:\n", 1)[1].rsplit("\nOutput:\n", 1)[0]
            s = self.by_question[q]
            return completion(f"<think>{s.think}</think>\n\n<answer>{s.plan}</answer>")
        if last.startswith("Can you answer the following questions"):
            block = _after(last, "Question: \n")
            q = self.subq(block.split("\n", 1)[0])
            answer = q.direct_for(params.seed)
            if answer is None:
                return completion(f"<think>{REFUSAL_THINK}</think>\n<search>{block}</search>")
            return completion(boxed("I know this.", answer), q.probs)
        if last.startswith("Analyze whether the answer"):
            q = self.subq(_after(last, "Question: ").split("\nAnswer:", 1)[0])
            return completion(boxed("Checking the answer against what I know.", str(q.assess)))
        if last.startswith("According to the question and references"):
            return completion("<answer>Yes</answer>\n<reason>The first reference states it directly.</reason>")
        if last.startswith("Answer the last question based on"):
            step = _after(last, "last-question:\n")
            for key, value in self.deduce.items():
                if key in step:
                    return completion(boxed("Combining the sub-question answers.", value))
            raise KeyError(f"no deduce rule for {step[:80]!r}")
        if last.startswith("Convert the calculation below"):
            target = _after(last, "target: ")
            for key, value in self.math.items():
                if key in target:
                    return completion(boxed("Adding up the amounts.", value))
            raise KeyError(f"no math rule for {target[:80]!r}")
        return self.depth_turn(messages)

    def depth_turn(self, messages: list[ChatMessage]) -> Completion:
        start = max(i for i, m in enumerate(messages)
                    if m.role == "user" and m.content.startswith("Can you answer the following questions"))
        q = self.subq(_after(messages[start].content, "Question: \n").split("\n", 1)[0])
        if messages[-1].content == prompts.ANSWER_NOW:
            return completion(q.answer_now)
        turn = sum(1 for m in messages[start + 1:] if m.role == "user")
        return completion(q.replies[min(turn, len(q.replies)) - 1])


# -- recording --------------------------------------------------------------------------


def corpus_retriever() -> BM25Retriever:
    return BM25Retriever(build_index(CORPUS))


def record(scenarios: Sequence[Scenario], seeds: Sequence[int], keep_seed: bool,
           model: StandIn | None = None) -> RecordingClient:
    rec = RecordingClient(FunctionClient(model or StandIn(ALL.values())), keep_seed=keep_seed)
    retriever = corpus_retriever()
    for seed in seeds:
        deps = Deps(rec, retriever, RunConfig(seed=seed))
        for s in scenarios:
            solve(s.question, deps, id=s.id)
    return rec


def write_jsonl(rows: Sequence[dict], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def dataset_rows(scenarios: Sequence[Scenario]) -> list[dict]:
    return [{"id": s.id, "question": s.question, "golden_answers": list(s.golds)} for s in scenarios]


def build(out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name: str) -> Path:
        p = out / name
        written.append(p)
        return p

    write_jsonl([c.to_dict() for c in CORPUS], emit("corpus.jsonl"))
    record([HONEY_BADGER], [0], False).dump(emit("honey_badger.fixtures.jsonl"))
    record([FILMS], [0], False).dump(emit("film_directors.fixtures.jsonl"))
    record([FRAUD], [0], False).dump(emit("card_fraud.fixtures.jsonl"))
    record(EVAL10, [0], False).dump(emit("eval10.fixtures.jsonl"))
    write_jsonl(dataset_rows(EVAL10), emit("eval10.dataset.jsonl"))
    record(STABILITY4, [0, 1], True).dump(emit("stability4.fixtures.jsonl"))
    write_jsonl(dataset_rows(STABILITY4), emit("stability4.dataset.jsonl"))
    return written


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    ap.add_argument("--check", action="store_true", help="compare against --out instead of writing")
    args = ap.parse_args(argv)
    if not args.check:
        for p in build(args.out):
            print(p)
        return 0
    with tempfile.TemporaryDirectory() as tmp:
        stale = [p.name for p in build(Path(tmp))
                 if not (args.out / p.name).exists() or not filecmp.cmp(p, args.out / p.name, shallow=False)]
    for name in stale:
        print(f"stale: {name}")
    return 1 if stale else 0


if __name__ == "__main__":
    sys.exit(main())
