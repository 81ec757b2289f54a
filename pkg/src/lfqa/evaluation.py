"""EM / F1 metrics, dataset loading, reports and the stability score."""

from __future__ import annotations

import json
import re
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Sequence

from . import prompts
from .errors import FormatError, IdMismatch, LengthMismatch
from .llm import ChatClient, GenParams, system, user

if TYPE_CHECKING:
    from .engine import SolveTrace

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def normalize_answer(s: str) -> str:
    """Lowercase, drop punctuation, drop articles, collapse whitespace."""
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def exact_match(pred: str, golds: Sequence[str]) -> int:
    if not golds:
        raise ValueError("golds must be non-empty")
    p = normalize_answer(pred)
    return int(any(p == normalize_answer(g) for g in golds))


def _f1(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if common == 0:
        return 0.0
    precision = common / len(pred_tokens)
    recall = common / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def f1_score(pred: str, golds: Sequence[str]) -> float:
    if not golds:
        raise ValueError("golds must be non-empty")
    p = normalize_answer(pred).split()
    return max(_f1(p, normalize_answer(g).split()) for g in golds)


# -- datasets ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetItem:
    id: str
    question: str
    golden_answers: tuple[str, ...] = ()


def load_dataset(path: str | Path) -> list[DatasetItem]:
    """JSONL of {"id", "question", "golden_answers"}; other keys are ignored."""
    items: list[DatasetItem] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(lineno, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(row, dict):
                raise FormatError(lineno, "expected a JSON object")
            qid, question, golds = row.get("id"), row.get("question"), row.get("golden_answers", [])
            if not isinstance(qid, (str, int)) or isinstance(qid, bool):
                raise FormatError(lineno, "missing or invalid 'id'")
            if not isinstance(question, str) or not question.strip():
                raise FormatError(lineno, "missing or empty 'question'")
            if not isinstance(golds, list) or not all(isinstance(g, str) for g in golds):
                raise FormatError(lineno, "'golden_answers' must be a list of strings")
            qid = str(qid)
            if qid in seen:
                raise FormatError(lineno, f"duplicate id {qid!r}")
            seen.add(qid)
            items.append(DatasetItem(qid, question, tuple(golds)))
    if not items:
        raise FormatError(0, "dataset is empty")
    return items


# -- reports ----------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalRecord:
    id: str
    question: str
    golden_answers: tuple[str, ...]
    predicted: str
    em: int
    f1: float
    failed: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "question": self.question, "golden_answers": list(self.golden_answers),
                "predicted": self.predicted, "em": self.em, "f1": round(self.f1, 4), "failed": self.failed}


@dataclass(frozen=True)
class EvalReport:
    records: tuple[EvalRecord, ...]
    mean_em: float
    mean_f1: float

    def to_dict(self) -> dict[str, Any]:
        return {"n": len(self.records), "em": round(self.mean_em, 4), "f1": round(self.mean_f1, 4),
                "records": [r.to_dict() for r in self.records]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n"

    def summary_line(self) -> str:
        return f"EM={self.mean_em:.4f} F1={self.mean_f1:.4f}"

    def table(self) -> str:
        rows = [("id", "em", "f1", "predicted", "gold")]
        for r in self.records:
            rows.append((r.id, str(r.em), f"{r.f1:.4f}", r.predicted, " | ".join(r.golden_answers)))
        rows.append(("mean", f"{self.mean_em:.4f}", f"{self.mean_f1:.4f}", "", ""))
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
        return "\n".join(lines) + "\n"


def evaluate(traces: Sequence["SolveTrace"], dataset: Sequence[DatasetItem]) -> EvalReport:
    """Score traces against the dataset, in dataset order.

    Every dataset id needs a trace; traces for unknown ids are an error too.
    """
    by_id = {t.id: t for t in traces}
    ids = {d.id for d in dataset}
    if not ids & set(by_id) or set(by_id) ^ ids:
        missing = sorted(ids - set(by_id))
        extra = sorted(str(i) for i in set(by_id) - ids)
        raise IdMismatch(f"trace/dataset ids differ: missing={missing[:5]} extra={extra[:5]}")
    records = []
    for item in dataset:
        t = by_id[item.id]
        golds = item.golden_answers or ("",)
        pred = t.final_answer
        records.append(EvalRecord(item.id, item.question, item.golden_answers, pred,
                                  exact_match(pred, golds), f1_score(pred, golds), t.failed))
    n = len(records)
    return EvalReport(tuple(records), sum(r.em for r in records) / n, sum(r.f1 for r in records) / n)


# -- stability --------------------------------------------------------------------------

Judge = Callable[[str, str, str], bool]


def string_judge(question: str, a: str, b: str) -> bool:
    return normalize_answer(a) == normalize_answer(b)


class LLMJudge:
    """Consistency judged by a model. Arguments are ordered first so (a, b) and (b, a) agree."""

    def __init__(self, llm: ChatClient, params: GenParams | None = None):
        self.llm = llm
        self.params = params or GenParams(0.0, None)

    def __call__(self, question: str, a: str, b: str) -> bool:
        if string_judge(question, a, b):
            return True
        x, y = sorted((a, b))
        comp = self.llm.complete([system(prompts.SYSTEM_THINK), user(prompts.JUDGE.format(question=question, a=x, b=y))],
                                 self.params)
        m = re.search(r"\\boxed\{\s*(true|false|yes|no)\s*\}", comp.text, re.IGNORECASE)
        return bool(m) and m.group(1).lower() in ("true", "yes")


@dataclass(frozen=True)
class StabilityRecord:
    id: str
    answer_a: str
    answer_b: str
    consistent: bool

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "answer_a": self.answer_a, "answer_b": self.answer_b,
                "consistent": self.consistent}


def stability_records(ids: Sequence[str], questions: Sequence[str], runs_a: Sequence[str],
                      runs_b: Sequence[str], judge: Judge = string_judge) -> list[StabilityRecord]:
    if not (len(ids) == len(questions) == len(runs_a) == len(runs_b)):
        raise LengthMismatch(f"run lengths differ: {len(runs_a)} vs {len(runs_b)}")
    return [StabilityRecord(i, a, b, judge(q, a, b)) for i, q, a, b in zip(ids, questions, runs_a, runs_b)]


def stability_score(runs_a: Sequence[str], runs_b: Sequence[str], judge: Judge = string_judge,
                    questions: Sequence[str] | None = None) -> float:
    """Fraction of aligned answer pairs judged consistent."""
    if len(runs_a) != len(runs_b):
        raise LengthMismatch(f"run lengths differ: {len(runs_a)} vs {len(runs_b)}")
    if not runs_a:
        raise LengthMismatch("no answers to compare")
    qs = questions if questions is not None else [""] * len(runs_a)
    hits = sum(judge(q, a, b) for q, a, b in zip(qs, runs_a, runs_b))
    return hits / len(runs_a)
