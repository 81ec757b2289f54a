"""Logical-form DSL: AST, parser, renderer and the variable model.

Four functions make up the language::

    Retrieval(s=s1:film[`Hit Parade Of 1947'], p=p1:director, o=o1:director)
    Deduce(op=choice, content=[`o2',`o4'], target=`which film ...')->o5
    Math(content=[o1, o2], target=`total amount')->o3
    Output(o1)

Aliases are letters followed by digits (``s1``, ``o12``). A step result can
also be addressed positionally as ``#n``. Quoted text may use backtick-
apostrophe, backtick-backtick, single, double or curly quotes; the renderer
always emits backtick-apostrophe.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Union

from .errors import (
    LFSyntaxError,
    LogicalFormError,
    MismatchError,
    ProtocolError,
    UnboundPlaceholder,
    UnknownFunction,
    UnknownOp,
)

FUNCTIONS = ("Retrieval", "Deduce", "Math", "Output")
DEDUCE_OPS = ("extract", "judgement", "entailment", "choice", "multiChoice")

ALIAS_RE = re.compile(r"[A-Za-z_]+[0-9]+")
HASH_RE = re.compile(r"#([0-9]+)")
_REF_FULL = re.compile(r"(?:[A-Za-z_]+[0-9]+|#[0-9]+)")

# opener -> accepted closers
_QUOTES = {
    "`": "'`",
    "'": "'",
    '"': '"',
    "‘": "’'",
    "“": "”\"",
}


def is_alias(text: str) -> bool:
    return ALIAS_RE.fullmatch(text) is not None


def is_ref(text: str) -> bool:
    """True for anything usable as a reference: an alias or ``#n``."""
    return _REF_FULL.fullmatch(text) is not None


# -- AST -------------------------------------------------------------------------


@dataclass(frozen=True)
class SpoTerm:
    alias: str
    entity_type: str | None = None
    name: str | None = None

    @property
    def is_ref(self) -> bool:
        return self.entity_type is None and self.name is None


@dataclass(frozen=True)
class PropertyConstraint:
    # as written: a role letter (s/p/o) or one of the expression's aliases
    subject_alias: str
    key: str
    value: str


@dataclass(frozen=True)
class Ref:
    alias: str


@dataclass(frozen=True)
class Literal:
    text: str


ContentItem = Union[Ref, Literal]


@dataclass(frozen=True)
class RetrievalExpr:
    s: SpoTerm
    p: SpoTerm
    o: SpoTerm
    constraints: tuple[PropertyConstraint, ...] = ()


@dataclass(frozen=True)
class DeduceExpr:
    op: str
    content: tuple[ContentItem, ...]
    target: str
    out_alias: str


@dataclass(frozen=True)
class MathExpr:
    content: tuple[ContentItem, ...]
    target: str
    out_alias: str


@dataclass(frozen=True)
class OutputExpr:
    refs: tuple[str, ...]


Action = Union[RetrievalExpr, DeduceExpr, MathExpr, OutputExpr]


@dataclass(frozen=True)
class Step:
    index: int
    nl_text: str
    action: Action
    # the Action line exactly as the model wrote it
    action_text: str = field(default="", compare=False)


@dataclass(frozen=True)
class Plan:
    think_text: str
    steps: tuple[Step, ...]
    raw_text: str = field(default="", compare=False)

    def __len__(self) -> int:
        return len(self.steps)


# -- parser ----------------------------------------------------------------------


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, expected: str, at: int | None = None) -> LFSyntaxError:
        pos = self.pos if at is None else at
        found = self.text[pos:pos + 12] or "end of input"
        return LFSyntaxError(f"expected {expected}, found {found!r}", offset=pos, expected=expected)

    def ws(self) -> None:
        n = len(self.text)
        while self.pos < n and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def expect(self, ch: str, what: str | None = None) -> None:
        self.ws()
        if self.peek() != ch:
            raise self.error(what or repr(ch))
        self.pos += 1

    def match(self, regex: re.Pattern[str]) -> str | None:
        m = regex.match(self.text, self.pos)
        if m is None:
            return None
        self.pos = m.end()
        return m.group(0)

    def quoted(self, delims: str) -> str:
        """Read a quoted string. The closer must be followed by a delimiter."""
        start = self.pos
        closers = _QUOTES[self.text[start]]
        i = start + 1
        n = len(self.text)
        while i < n:
            if self.text[i] in closers:
                j = i + 1
                while j < n and self.text[j].isspace():
                    j += 1
                if j >= n or self.text[j] in delims:
                    self.pos = i + 1
                    return self.text[start + 1:i]
            i += 1
        raise LFSyntaxError("unterminated string", offset=start, expected="closing quote")

    def bare(self, stops: str) -> str:
        """Read unquoted text up to a top-level stop character."""
        depth = 0
        i = self.pos
        n = len(self.text)
        while i < n:
            ch = self.text[i]
            if ch in "([":
                depth += 1
            elif ch in ")]":
                if depth == 0:
                    if ch in stops:
                        break
                else:
                    depth -= 1
            elif ch in stops and depth == 0:
                break
            i += 1
        raw = self.text[self.pos:i]
        self.pos = i
        return raw.strip()

    def value(self, stops: str) -> tuple[str, bool]:
        """Quoted or bare value. Returns (text, was_quoted)."""
        self.ws()
        if self.peek() in _QUOTES:
            return self.quoted(stops), True
        return self.bare(stops), False


_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_ALIAS_AT = re.compile(r"[A-Za-z_]+[0-9]+(?![A-Za-z_0-9])")
_REF_AT = re.compile(r"(?:[A-Za-z_]+[0-9]+|#[0-9]+)(?![A-Za-z_0-9])")


def parse_action(text: str) -> Action:
    """Parse one logical-form expression, optionally suffixed ``->alias``."""
    sc = _Scanner(text)
    sc.ws()
    start = sc.pos
    name = sc.match(_IDENT)
    if name is None:
        raise sc.error("function name")
    if name not in FUNCTIONS:
        raise UnknownFunction(f"unknown function {name!r}", offset=start)
    sc.expect("(")
    if name == "Retrieval":
        action: Action = _parse_retrieval(sc)
    elif name == "Output":
        action = _parse_output(sc)
    else:
        action = _parse_deduce_math(sc, name)
    sc.ws()
    if not sc.at_end():
        raise sc.error("end of input")
    return action


def _arrow_alias(sc: _Scanner) -> str:
    sc.ws()
    if not sc.text.startswith("->", sc.pos):
        raise sc.error("'->alias'")
    sc.pos += 2
    sc.ws()
    alias = sc.match(_ALIAS_AT)
    if alias is None:
        raise sc.error("alias")
    return alias


def _parse_term(sc: _Scanner) -> SpoTerm:
    sc.ws()
    alias = sc.match(_ALIAS_AT)
    if alias is None:
        raise sc.error("alias")
    sc.ws()
    etype = None
    name = None
    if sc.peek() == ":":
        sc.pos += 1
        sc.ws()
        tstart = sc.pos
        while not sc.at_end() and sc.peek() not in "[,)":
            sc.pos += 1
        etype = sc.text[tstart:sc.pos].strip()
        if not etype:
            raise sc.error("entity type", at=tstart)
    if sc.peek() == "[":
        sc.pos += 1
        sc.ws()
        if sc.peek() in _QUOTES:
            name = sc.quoted("]")
        else:
            nstart = sc.pos
            close = sc.text.find("]", sc.pos)
            if close < 0:
                raise sc.error("']'", at=len(sc.text))
            name = sc.text[nstart:close].strip()
            sc.pos = close
        sc.expect("]")
    return SpoTerm(alias, etype, name)


def _parse_retrieval(sc: _Scanner) -> RetrievalExpr:
    terms: dict[str, SpoTerm] = {}
    constraints: list[tuple[PropertyConstraint, int]] = []
    sc.ws()
    if sc.peek() == ")":
        raise sc.error("argument")
    while True:
        sc.ws()
        kstart = sc.pos
        while not sc.at_end() and sc.peek() not in "=,()":
            sc.pos += 1
        key = sc.text[kstart:sc.pos].strip()
        if sc.peek() != "=":
            raise sc.error("'='")
        sc.pos += 1
        if key in ("s", "p", "o"):
            if key in terms:
                raise LFSyntaxError(f"duplicate argument {key}", offset=kstart, expected="new argument")
            terms[key] = _parse_term(sc)
        elif "." in key:
            subject, _, prop = key.partition(".")
            subject, prop = subject.strip(), prop.strip()
            if not subject or not prop:
                raise sc.error("<role>.<property>", at=kstart)
            value, _ = sc.value(",)")
            constraints.append((PropertyConstraint(subject, prop, value), kstart))
        else:
            raise sc.error("s, p, o or <role>.<property>", at=kstart)
        sc.ws()
        if sc.peek() == ",":
            sc.pos += 1
            continue
        if sc.peek() == ")":
            close = sc.pos
            sc.pos += 1
            break
        raise sc.error("',' or ')'")
    for role in ("s", "p", "o"):
        if role not in terms:
            raise LFSyntaxError(f"missing argument {role}", offset=close, expected=f"{role}=")
    aliases = {t.alias for t in terms.values()}
    for c, off in constraints:
        if c.subject_alias not in ("s", "p", "o") and c.subject_alias not in aliases:
            raise LFSyntaxError(f"constraint subject {c.subject_alias!r} is not s, p, o or one of their aliases",
                                offset=off, expected="constraint subject")
    return RetrievalExpr(terms["s"], terms["p"], terms["o"], tuple(c for c, _ in constraints))


def _parse_content(sc: _Scanner) -> tuple[ContentItem, ...]:
    sc.expect("[", "'['")
    items: list[ContentItem] = []
    sc.ws()
    if sc.peek() == "]":
        sc.pos += 1
        return ()
    while True:
        istart = sc.pos
        text, quoted = sc.value(",]")
        if not quoted and not text:
            raise sc.error("content item", at=istart)
        stripped = text.strip()
        items.append(Ref(stripped) if is_ref(stripped) else Literal(text))
        sc.ws()
        if sc.peek() == ",":
            sc.pos += 1
            continue
        if sc.peek() == "]":
            sc.pos += 1
            return tuple(items)
        raise sc.error("',' or ']'")


def _parse_target(sc: _Scanner) -> str:
    sc.ws()
    if sc.peek() == "[":
        sc.pos += 1
        text, _ = sc.value("]")
        sc.expect("]")
        return text
    text, quoted = sc.value(",)")
    if not quoted and not text:
        raise sc.error("target")
    return text


def _parse_deduce_math(sc: _Scanner, name: str) -> DeduceExpr | MathExpr:
    allowed = ("op", "content", "target") if name == "Deduce" else ("content", "target")
    args: dict[str, Any] = {}
    sc.ws()
    if sc.peek() == ")":
        raise sc.error("argument")
    while True:
        sc.ws()
        kstart = sc.pos
        key = sc.match(_IDENT)
        if key is None or key not in allowed:
            raise sc.error(" or ".join(allowed), at=kstart)
        if key in args:
            raise LFSyntaxError(f"duplicate argument {key}", offset=kstart, expected="new argument")
        sc.expect("=")
        sc.ws()
        if key == "op":
            ostart = sc.pos
            op = sc.match(_IDENT)
            if op is None:
                raise sc.error("deduce op")
            if op not in DEDUCE_OPS:
                raise UnknownOp(f"unknown Deduce op {op!r}", offset=ostart)
            args["op"] = op
        elif key == "content":
            args["content"] = _parse_content(sc)
        else:
            args["target"] = _parse_target(sc)
        sc.ws()
        if sc.peek() == ",":
            sc.pos += 1
            continue
        if sc.peek() == ")":
            close = sc.pos
            sc.pos += 1
            break
        raise sc.error("',' or ')'")
    for key in allowed:
        if key not in args:
            raise LFSyntaxError(f"missing argument {key}", offset=close, expected=f"{key}=")
    out = _arrow_alias(sc)
    if name == "Deduce":
        return DeduceExpr(args["op"], args["content"], args["target"], out)
    return MathExpr(args["content"], args["target"], out)


def _parse_output(sc: _Scanner) -> OutputExpr:
    refs: list[str] = []
    while True:
        sc.ws()
        ref = sc.match(_REF_AT)
        if ref is None:
            raise sc.error("alias or #n")
        refs.append(ref)
        sc.ws()
        if sc.peek() == ",":
            sc.pos += 1
            continue
        if sc.peek() == ")":
            sc.pos += 1
            return OutputExpr(tuple(refs))
        raise sc.error("',' or ')'")


# -- renderer ----------------------------------------------------------------------


def _q(text: str) -> str:
    return f"`{text}'"


def _render_term(t: SpoTerm) -> str:
    out = t.alias
    if t.entity_type is not None:
        out += f":{t.entity_type}"
    if t.name is not None:
        out += f"[{_q(t.name)}]"
    return out


def _render_item(item: ContentItem) -> str:
    return _q(item.alias) if isinstance(item, Ref) else _q(item.text)


def render_action(a: Action) -> str:
    """Canonical single-line text for an Action."""
    if isinstance(a, RetrievalExpr):
        parts = [f"s={_render_term(a.s)}", f"p={_render_term(a.p)}", f"o={_render_term(a.o)}"]
        parts += [f"{c.subject_alias}.{c.key}={_q(c.value)}" for c in a.constraints]
        return f"Retrieval({', '.join(parts)})"
    if isinstance(a, DeduceExpr):
        content = ",".join(_render_item(i) for i in a.content)
        return f"Deduce(op={a.op}, content=[{content}], target={_q(a.target)})->{a.out_alias}"
    if isinstance(a, MathExpr):
        content = ",".join(_render_item(i) for i in a.content)
        return f"Math(content=[{content}], target={_q(a.target)})->{a.out_alias}"
    if isinstance(a, OutputExpr):
        return f"Output({', '.join(a.refs)})"
    raise TypeError(f"not an Action: {a!r}")


# -- variable model ------------------------------------------------------------------


def _dedupe(xs: list[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for x in xs:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def defined_aliases(a: Action) -> list[str]:
    """Aliases an Action introduces."""
    if isinstance(a, RetrievalExpr):
        return _dedupe([t.alias for t in (a.s, a.p, a.o) if not t.is_ref])
    if isinstance(a, (DeduceExpr, MathExpr)):
        return [a.out_alias]
    return []


def extract_refs(a: Action) -> list[str]:
    """Aliases (or ``#n``) an Action reads but does not define itself."""
    if isinstance(a, RetrievalExpr):
        refs = [t.alias for t in (a.s, a.p, a.o) if t.is_ref]
    elif isinstance(a, (DeduceExpr, MathExpr)):
        refs = [i.alias for i in a.content if isinstance(i, Ref)]
    elif isinstance(a, OutputExpr):
        refs = list(a.refs)
    else:
        raise TypeError(f"not an Action: {a!r}")
    own = set(defined_aliases(a))
    return _dedupe([r for r in refs if r not in own])


def placeholders(nl_text: str) -> list[int]:
    return [int(m.group(1)) for m in HASH_RE.finditer(nl_text)]


def _lookup(bindings: Mapping[Any, str], n: int) -> str | None:
    for key in (n, str(n), f"#{n}"):
        if key in bindings:
            return bindings[key]
    return None


def substitute_placeholders(nl_text: str, bindings: Mapping[Any, str]) -> str:
    """Replace each ``#n`` with its bound value. Keys may be ``n``, ``"n"`` or ``"#n"``."""

    def repl(m: re.Match[str]) -> str:
        n = int(m.group(1))
        value = _lookup(bindings, n)
        if value is None:
            raise UnboundPlaceholder(n)
        return value

    return HASH_RE.sub(repl, nl_text)


def bind_action(a: Action, values: Mapping[str, str]) -> Action:
    """Fill bare SPO references with their bound values as names.

    ``Retrieval(s=o1, ...)`` with ``o1 -> "John Smith"`` becomes
    ``Retrieval(s=o1[`John Smith'], ...)``. Other actions are returned as is.
    """
    if not isinstance(a, RetrievalExpr):
        return a

    def fill(t: SpoTerm) -> SpoTerm:
        if t.is_ref and t.alias in values:
            return SpoTerm(t.alias, None, values[t.alias])
        return t

    return RetrievalExpr(fill(a.s), fill(a.p), fill(a.o), a.constraints)


def bind_step(step: "Step", values: Mapping[str, str]) -> tuple[str, str]:
    """Step text and Action text with every reference filled from ``values``.

    ``values`` maps aliases and ``#n`` keys to strings. The Action text is
    kept exactly as written when nothing needs binding.
    """
    nl = substitute_placeholders(step.nl_text, values)
    bound = bind_action(step.action, values)
    if bound == step.action and step.action_text:
        return nl, step.action_text
    return nl, render_action(bound)


# -- plans -----------------------------------------------------------------------

_LINE_RE = re.compile(r"^\s*(Step|Action)\s*(\d+)\s*[:：]\s?(.*)$")


def _tag_block(text: str, tag: str, start: int = 0) -> tuple[str, int, int] | None:
    """First ``<tag>...</tag>`` at or after ``start``; an unclosed tag runs to the end."""
    open_ = f"<{tag}>"
    i = text.find(open_, start)
    if i < 0:
        return None
    body = i + len(open_)
    j = text.find(f"</{tag}>", body)
    end = len(text) if j < 0 else j
    return text[body:end], body, end


def parse_step_lines(block: str) -> list[tuple[int, str, str]]:
    """Pair ``StepN:``/``ActionN:`` lines. Returns (label, step_text, action_text)."""
    fields: list[list[Any]] = []  # [kind, label, text]
    for line in block.splitlines():
        m = _LINE_RE.match(line)
        if m:
            fields.append([m.group(1), int(m.group(2)), m.group(3)])
        elif fields and line.strip():
            fields[-1][2] += "\n" + line
    pairs = []
    i = 0
    while i < len(fields):
        kind, label, text = fields[i]
        if kind != "Step":
            raise MismatchError(f"Action{label} has no preceding Step{label}")
        if i + 1 >= len(fields) or fields[i + 1][0] != "Action" or fields[i + 1][1] != label:
            raise MismatchError(f"Step{label} has no Action{label}")
        pairs.append((label, text.strip(), fields[i + 1][2].strip()))
        i += 2
    return pairs


def parse_plan(llm_output: str) -> Plan:
    """Parse a decomposition completion into a Plan."""
    think = _tag_block(llm_output, "think")
    think_text = think[0] if think else ""
    answer = _tag_block(llm_output, "answer", think[2] if think else 0)
    if answer is None:
        raise ProtocolError("decomposition has no <answer> block", raw_text=llm_output)
    pairs = parse_step_lines(answer[0])
    if not pairs:
        raise ProtocolError("decomposition <answer> holds no steps", raw_text=llm_output)
    steps = []
    for index, (_, nl_text, action_text) in enumerate(pairs, start=1):
        try:
            action = parse_action(action_text)
        except LogicalFormError as exc:
            raise exc.at_step(index)
        steps.append(Step(index, nl_text, action, action_text))
    return Plan(think_text, tuple(steps), llm_output)


# -- JSON form -------------------------------------------------------------------


def _term_to_dict(t: SpoTerm) -> dict[str, Any]:
    return {"alias": t.alias, "entity_type": t.entity_type, "name": t.name}


def _item_to_dict(i: ContentItem) -> dict[str, Any]:
    return {"ref": i.alias} if isinstance(i, Ref) else {"literal": i.text}


def _item_from_dict(d: Mapping[str, Any]) -> ContentItem:
    return Ref(d["ref"]) if "ref" in d else Literal(d["literal"])


def action_to_dict(a: Action) -> dict[str, Any]:
    if isinstance(a, RetrievalExpr):
        return {
            "kind": "Retrieval",
            "s": _term_to_dict(a.s),
            "p": _term_to_dict(a.p),
            "o": _term_to_dict(a.o),
            "constraints": [{"subject": c.subject_alias, "key": c.key, "value": c.value}
                            for c in a.constraints],
        }
    if isinstance(a, DeduceExpr):
        return {"kind": "Deduce", "op": a.op, "content": [_item_to_dict(i) for i in a.content],
                "target": a.target, "out_alias": a.out_alias}
    if isinstance(a, MathExpr):
        return {"kind": "Math", "content": [_item_to_dict(i) for i in a.content],
                "target": a.target, "out_alias": a.out_alias}
    return {"kind": "Output", "refs": list(a.refs)}


def action_from_dict(d: Mapping[str, Any]) -> Action:
    kind = d["kind"]
    if kind == "Retrieval":
        return RetrievalExpr(
            SpoTerm(**d["s"]), SpoTerm(**d["p"]), SpoTerm(**d["o"]),
            tuple(PropertyConstraint(c["subject"], c["key"], c["value"]) for c in d["constraints"]),
        )
    if kind == "Deduce":
        return DeduceExpr(d["op"], tuple(_item_from_dict(i) for i in d["content"]),
                          d["target"], d["out_alias"])
    if kind == "Math":
        return MathExpr(tuple(_item_from_dict(i) for i in d["content"]), d["target"], d["out_alias"])
    if kind == "Output":
        return OutputExpr(tuple(d["refs"]))
    raise ValueError(f"unknown action kind {kind!r}")


def plan_to_dict(plan: Plan) -> dict[str, Any]:
    return {
        "think_text": plan.think_text,
        "steps": [{"index": s.index, "nl_text": s.nl_text, "action_text": s.action_text,
                   "action": action_to_dict(s.action)} for s in plan.steps],
    }


def plan_from_dict(d: Mapping[str, Any]) -> Plan:
    steps = tuple(Step(s["index"], s["nl_text"], action_from_dict(s["action"]), s["action_text"])
                  for s in d["steps"])
    return Plan(d["think_text"], steps)
