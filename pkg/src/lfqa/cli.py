"""Command-line entry point.

Exit codes: 0 ok, 1 bad input, 2 planning or step failure, 3 transport failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from .config import RunConfig, load_config
from .engine import Deps, SolveTrace, read_traces_jsonl, solve, solve_batch, write_traces_jsonl
from .errors import (
    ConfigError,
    DecompositionError,
    DuplicateId,
    EmptyCorpus,
    FormatError,
    IdMismatch,
    IndexFormatError,
    LengthMismatch,
    TransportError,
)
from .evaluation import LLMJudge, evaluate, load_dataset, stability_records, string_judge
from .lf import plan_to_dict
from .llm import ChatClient, GenParams, HttpChatClient, ScriptedClient
from .planner import decompose
from .retriever import BM25Retriever, Retriever, build_index, ingest, load_index, save_index

log = logging.getLogger("lfqa")

EXIT_OK, EXIT_INPUT, EXIT_PLAN, EXIT_TRANSPORT = 0, 1, 2, 3
INPUT_ERRORS = (FormatError, DuplicateId, EmptyCorpus, IndexFormatError, ConfigError, IdMismatch,
                LengthMismatch, OSError)


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--corpus", help="JSONL corpus (indexed in memory when --index is absent)")
    p.add_argument("--index", help="persisted index file")
    p.add_argument("--scripted-fixtures", help="replay completions from a fixture JSONL")
    p.add_argument("--tau", type=float)
    p.add_argument("--max-turns", type=int)
    p.add_argument("--top-k", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--parallelism", type=int)
    p.add_argument("--focus-mode", choices=("inline", "explicit"))
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lfqa", description="Logical-form multi-hop question answering")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build a BM25 index from a JSONL corpus")
    _add_common(p)
    p.add_argument("--force", action="store_true", help="overwrite an existing index")

    p = sub.add_parser("solve", help="answer one question")
    _add_common(p)
    p.add_argument("--question", required=True)
    p.add_argument("--trace-out")

    p = sub.add_parser("decompose", help="print the plan for one question")
    _add_common(p)
    p.add_argument("--question", required=True)
    p.add_argument("--trace-out")

    for name, helptext in (("eval", "solve a dataset and report EM/F1"),
                           ("stability", "solve a dataset under two seeds and compare")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        p.add_argument("--dataset")
        p.add_argument("--report-out")
        p.add_argument("--traces", help="score these pre-computed traces instead of solving" if name == "eval"
                       else argparse.SUPPRESS)
        p.add_argument("--traces-out", help="write solved traces as JSONL")
        if name == "stability":
            p.add_argument("--judge", choices=("string", "llm"))
    return ap


def _config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "tau": args.tau,
        "max_turns": args.max_turns,
        "top_k": args.top_k,
        "temperature": args.temperature,
        "seed": args.seed,
        "parallelism": args.parallelism,
        "focus_mode": args.focus_mode,
        "judge_mode": getattr(args, "judge", None),
        "paths": {
            "corpus": args.corpus,
            "index": args.index,
            "fixtures": args.scripted_fixtures,
            "dataset": getattr(args, "dataset", None),
        },
    }
    return load_config(args.config, overrides)


def _client(cfg: RunConfig) -> ChatClient:
    if cfg.paths.fixtures:
        return ScriptedClient.from_file(cfg.paths.fixtures)
    if cfg.llm_url:
        return HttpChatClient(cfg.llm_url, cfg.llm_model, cfg.api_key(), max_in_flight=cfg.parallelism)
    raise UsageError("no LLM configured: pass --scripted-fixtures or set THINKER_LLM_URL")


def _retriever(cfg: RunConfig) -> Retriever:
    if cfg.paths.index:
        return BM25Retriever(load_index(cfg.paths.index))
    if cfg.paths.corpus:
        return BM25Retriever.from_corpus(cfg.paths.corpus)
    raise UsageError("no retriever configured: pass --index or --corpus")


def _write(path: str, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _trace_exit(trace: SolveTrace) -> int:
    if not trace.failed:
        return EXIT_OK
    return EXIT_TRANSPORT if (trace.error or {}).get("category") == "transport" else EXIT_PLAN


def cmd_index(args: argparse.Namespace, cfg: RunConfig) -> int:
    if not cfg.paths.corpus or not cfg.paths.index:
        raise UsageError("index needs --corpus and --index")
    if os.path.exists(cfg.paths.index) and not args.force:
        print(f"error: {cfg.paths.index} exists; pass --force to overwrite", file=sys.stderr)
        return EXIT_INPUT
    index = build_index(ingest(cfg.paths.corpus))
    save_index(index, cfg.paths.index)
    print(f"indexed {index.doc_count} docs avg_doc_len={index.avg_doc_len:.2f}")
    return EXIT_OK


def cmd_decompose(args: argparse.Namespace, cfg: RunConfig) -> int:
    llm = _client(cfg)
    vp, _ = decompose(args.question, llm, GenParams(cfg.temperature, cfg.seed, cfg.max_tokens),
                      retries=cfg.decompose_retries)
    doc = {"plan": plan_to_dict(vp.plan), "topo_order": list(vp.topo_order),
           "ref_graph": {str(k): list(v) for k, v in vp.ref_graph.items()}}
    text = json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n"
    if args.trace_out:
        _write(args.trace_out, text)
    print(text, end="")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace, cfg: RunConfig) -> int:
    deps = Deps(_client(cfg), _retriever(cfg), cfg)
    trace = solve(args.question, deps)
    if args.trace_out:
        _write(args.trace_out, trace.to_json() + "\n")
    if trace.failed:
        print(f"error: step {trace.error['step']} failed: {trace.error['message']}", file=sys.stderr)
    print(trace.final_answer)
    return _trace_exit(trace)


def _batch_exit(traces: Sequence[SolveTrace]) -> int:
    if any((t.error or {}).get("category") == "transport" for t in traces):
        return EXIT_TRANSPORT
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    if not cfg.paths.dataset:
        raise UsageError("eval needs --dataset")
    dataset = load_dataset(cfg.paths.dataset)
    if args.traces:
        traces = read_traces_jsonl(args.traces)
    else:
        traces = solve_batch(dataset, Deps(_client(cfg), _retriever(cfg), cfg), cfg.parallelism)
    if args.traces_out:
        write_traces_jsonl(traces, args.traces_out)
    report = evaluate(traces, dataset)
    if args.report_out:
        _write(args.report_out, report.to_json())
        _write(str(Path(args.report_out).with_suffix(".txt")), report.table())
    print(report.table(), end="")
    print(report.summary_line())
    return _batch_exit(traces)


def cmd_stability(args: argparse.Namespace, cfg: RunConfig) -> int:
    if not cfg.paths.dataset:
        raise UsageError("stability needs --dataset")
    dataset = load_dataset(cfg.paths.dataset)
    llm, retriever = _client(cfg), _retriever(cfg)
    base = cfg.seed if cfg.seed is not None else 0
    runs = []
    for seed in (base, base + 1):
        runs.append(solve_batch(dataset, Deps(llm, retriever, cfg.replace(seed=seed)), cfg.parallelism))
    if args.traces_out:
        write_traces_jsonl([*runs[0], *runs[1]], args.traces_out)
    judge = LLMJudge(llm) if cfg.judge_mode == "llm" else string_judge
    records = stability_records([d.id for d in dataset], [d.question for d in dataset],
                                [t.final_answer for t in runs[0]], [t.final_answer for t in runs[1]], judge)
    score = sum(r.consistent for r in records) / len(records)
    if args.report_out:
        doc = {"seeds": [base, base + 1], "judge": cfg.judge_mode, "stability": round(score, 4),
               "records": [r.to_dict() for r in records]}
        _write(args.report_out, json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
    print(f"stability={score:.3f}")
    return _batch_exit([*runs[0], *runs[1]])


COMMANDS = {"index": cmd_index, "solve": cmd_solve, "decompose": cmd_decompose, "eval": cmd_eval,
            "stability": cmd_stability}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DecompositionError as exc:
        if isinstance(exc.cause, TransportError):
            print(f"transport error: {exc.cause}", file=sys.stderr)
            return EXIT_TRANSPORT
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PLAN
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
