"""End-to-end solving of one question, and of question batches.

A trace records everything that happened: the plan, each step's boundary
decision and depth-solving turns, the bindings, and the final answer. With
the scripted client a trace is a pure function of (question, config), so
its JSON is byte-stable across runs and parallelism settings.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .config import RunConfig
from .errors import DecompositionError, TransportError
from .evaluation import DatasetItem
from .executors import ExecContext, exec_step
from .lf import OutputExpr, Plan, plan_from_dict, plan_to_dict
from .llm import ChatClient, GenParams
from .planner import decompose
from .retriever import Retriever

log = logging.getLogger(__name__)

TRACE_VERSION = "trace_v1"


@dataclass(frozen=True)
class Deps:
    llm: ChatClient
    retriever: Retriever
    config: RunConfig = field(default_factory=RunConfig)


@dataclass
class StepRecord:
    index: int
    kind: str
    status: str  # ok | failed | skipped
    binding: dict[str, Any] | None = None
    boundary: dict[str, Any] | None = None
    depth: dict[str, Any] | None = None
    detail: dict[str, Any] | None = None
    error: dict[str, str] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"index": self.index, "kind": self.kind, "status": self.status, "binding": self.binding,
                "boundary": self.boundary, "depth": self.depth, "detail": self.detail, "error": self.error}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StepRecord":
        return cls(**d)


@dataclass
class SolveTrace:
    question: str
    id: str | None = None
    plan: Plan | None = None
    topo_order: list[int] = field(default_factory=list)
    ref_graph: dict[str, list[int]] = field(default_factory=dict)
    step_records: list[StepRecord] = field(default_factory=list)
    final_answer: str = ""
    failed: bool = False
    error: dict[str, str] | None = None
    config_snapshot: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, Any] = field(default_factory=dict)
    version: str = TRACE_VERSION

    @property
    def retrievals(self) -> int:
        n = 0
        for r in self.step_records:
            for t in (r.depth or {}).get("turns", []):
                if t["directive"] is not None and t["error"] is None:
                    n += 1
        return n

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "id": self.id,
            "question": self.question,
            "plan": plan_to_dict(self.plan) if self.plan is not None else None,
            "topo_order": list(self.topo_order),
            "ref_graph": {k: list(v) for k, v in self.ref_graph.items()},
            "step_records": [r.to_dict() for r in self.step_records],
            "final_answer": self.final_answer,
            "failed": self.failed,
            "error": self.error,
            "config_snapshot": self.config_snapshot,
            "timings": self.timings,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SolveTrace":
        if d.get("version") != TRACE_VERSION:
            raise ValueError(f"unsupported trace version {d.get('version')!r}")
        return cls(
            question=d["question"],
            id=d["id"],
            plan=plan_from_dict(d["plan"]) if d["plan"] is not None else None,
            topo_order=list(d["topo_order"]),
            ref_graph={k: list(v) for k, v in d["ref_graph"].items()},
            step_records=[StepRecord.from_dict(r) for r in d["step_records"]],
            final_answer=d["final_answer"],
            failed=d["failed"],
            error=d["error"],
            config_snapshot=d["config_snapshot"],
            timings=d["timings"],
            version=d["version"],
        )

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "SolveTrace":
        return cls.from_dict(json.loads(text))


def _category(exc: BaseException) -> str:
    if isinstance(exc, TransportError):
        return "transport"
    if isinstance(exc, DecompositionError):
        return "planning"
    return "step"


def _err(exc: BaseException) -> dict[str, str]:
    return {"type": type(exc).__name__, "category": _category(exc), "message": str(exc)}


def solve(question: str, deps: Deps, id: str | None = None,
          clock: Callable[[], float] = time.perf_counter) -> SolveTrace:
    """Decompose, run every step in topological order, collect the answer.

    Decomposition failures raise. A failing step aborts the run and the
    partial trace comes back with ``failed`` set.
    """
    if not question:
        raise ValueError("question must be non-empty")
    cfg = deps.config
    timed = cfg.record_timings
    t0 = clock()
    params = GenParams(cfg.temperature, cfg.seed, cfg.max_tokens)
    vp, exchange = decompose(question, deps.llm, params, retries=cfg.decompose_retries)
    timings: dict[str, Any] = {}
    if timed:
        timings["decompose"] = clock() - t0

    trace = SolveTrace(
        question=question,
        id=id,
        plan=vp.plan,
        topo_order=list(vp.topo_order),
        ref_graph={str(k): list(v) for k, v in vp.ref_graph.items()},
        config_snapshot=cfg.snapshot(),
    )
    ctx = ExecContext(question, cfg, deps.llm, deps.retriever, conversation=list(exchange))
    steps = {s.index: s for s in vp.steps}
    last_value = ""
    output_value: str | None = None
    aborted = False
    step_times = {}
    for index in vp.topo_order:
        step = steps[index]
        kind = type(step.action).__name__.replace("Expr", "")
        if aborted:
            trace.step_records.append(StepRecord(index, kind, "skipped"))
            continue
        ts = clock()
        try:
            binding = exec_step(step, ctx)
        except Exception as exc:  # recorded, then the run stops
            log.warning("step %d (%s) failed: %s", index, kind, exc)
            detail = ctx.details.get(index) or {}
            trace.step_records.append(StepRecord(
                index, kind, "failed", boundary=_boundary_of(detail), depth=detail.get("depth"),
                detail=_extra_of(detail), error=_err(exc)))
            trace.failed = True
            trace.error = {"step": str(index), **_err(exc)}
            aborted = True
            continue
        finally:
            if timed:
                step_times[str(index)] = clock() - ts
        detail = ctx.details.get(index) or {}
        trace.step_records.append(StepRecord(
            index, kind, "ok", binding=binding.to_dict(), boundary=_boundary_of(detail),
            depth=detail.get("depth"), detail=_extra_of(detail)))
        last_value = binding.value
        if isinstance(step.action, OutputExpr):
            output_value = binding.value

    trace.final_answer = output_value if output_value is not None else last_value
    if timed:
        timings["steps"] = step_times
        timings["total"] = clock() - t0
        trace.timings = timings
    return trace


_BOUNDARY_KEYS = ("query", "attempt", "verdict", "decision", "reason")


def _boundary_of(detail: dict[str, Any]) -> dict[str, Any] | None:
    if "decision" not in detail and "attempt" not in detail:
        return None
    return {k: detail.get(k) for k in _BOUNDARY_KEYS}


def _extra_of(detail: dict[str, Any]) -> dict[str, Any] | None:
    extra = {k: v for k, v in detail.items() if k not in _BOUNDARY_KEYS and k != "depth"}
    return extra or None


def _failed_trace(item: DatasetItem, deps: Deps, exc: BaseException) -> SolveTrace:
    t = SolveTrace(question=item.question, id=item.id, failed=True, error=_err(exc),
                   config_snapshot=deps.config.snapshot())
    if isinstance(exc, DecompositionError):
        t.error["cause"] = type(exc.cause).__name__
    return t


def solve_item(item: DatasetItem, deps: Deps) -> SolveTrace:
    try:
        return solve(item.question, deps, id=item.id)
    except Exception as exc:  # one bad question must not sink the batch
        log.warning("question %s failed: %s", item.id, exc)
        return _failed_trace(item, deps, exc)


def solve_batch(dataset: Sequence[DatasetItem], deps: Deps, parallelism: int | None = None) -> list[SolveTrace]:
    """Solve independent questions concurrently; results keep input order."""
    workers = deps.config.parallelism if parallelism is None else parallelism
    if workers < 1:
        raise ValueError("parallelism must be >= 1")
    if workers == 1 or len(dataset) <= 1:
        return [solve_item(item, deps) for item in dataset]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda item: solve_item(item, deps), dataset))


def write_traces_jsonl(traces: Sequence[SolveTrace], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in traces:
            fh.write(t.to_json(indent=None) + "\n")


def read_traces_jsonl(path: str) -> list[SolveTrace]:
    with open(path, encoding="utf-8") as fh:
        return [SolveTrace.from_json(line) for line in fh if line.strip()]
