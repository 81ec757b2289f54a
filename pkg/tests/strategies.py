"""Hypothesis strategies shared by unit and acceptance tests."""

from fractions import Fraction

from hypothesis import strategies as st

from lfqa.lf import (
    DEDUCE_OPS,
    DeduceExpr,
    Literal,
    MathExpr,
    OutputExpr,
    PropertyConstraint,
    Ref,
    RetrievalExpr,
    SpoTerm,
    is_ref,
)

letters = st.sampled_from("spoabcxyz_")
aliases = st.builds(lambda a, n: a + str(n), st.text("spoxyz", min_size=1, max_size=2), st.integers(0, 99))
refs = st.one_of(aliases, st.integers(1, 20).map(lambda n: f"#{n}"))
idents = st.from_regex(r"[A-Za-z][A-Za-z0-9_]{0,8}", fullmatch=True)

# quoted text may hold anything except the closing quote characters of the renderer
_TEXT_CHARS = st.characters(blacklist_characters="'`\r\n", blacklist_categories=("Cs", "Cc"))
free_text = st.text(_TEXT_CHARS, max_size=30)
literals = free_text.filter(lambda t: not is_ref(t.strip()))


@st.composite
def spo_terms(draw):
    etype = draw(st.none() | st.from_regex(r"[A-Za-z][A-Za-z0-9_ ]{0,10}[A-Za-z0-9]", fullmatch=True) | idents)
    name = draw(st.none() | free_text)
    return SpoTerm(draw(aliases), etype, name)


@st.composite
def retrievals(draw):
    s, p, o = draw(spo_terms()), draw(spo_terms()), draw(spo_terms())
    subjects = st.sampled_from(["s", "p", "o", s.alias, p.alias, o.alias])
    cons = draw(st.lists(st.builds(PropertyConstraint, subjects, idents, free_text), max_size=3))
    return RetrievalExpr(s, p, o, tuple(cons))


content_items = st.one_of(refs.map(Ref), literals.map(Literal))

deduces = st.builds(DeduceExpr, st.sampled_from(DEDUCE_OPS), st.lists(content_items, max_size=4).map(tuple),
                    free_text, aliases)
maths = st.builds(MathExpr, st.lists(content_items, max_size=4).map(tuple), free_text, aliases)
outputs = st.lists(refs, min_size=1, max_size=4).map(lambda r: OutputExpr(tuple(r)))
actions = st.one_of(retrievals(), deduces, maths, outputs)

# raw text biased toward the DSL's own characters, for fuzzing
DSL_ALPHABET = "RetrievalDeduceMathOutput()[]=,:->#`'\"‘’“” spoc0123.op=content=target=extract choice"
fuzz_text = st.one_of(
    st.text(st.sampled_from(DSL_ALPHABET), max_size=60),
    st.text(max_size=60),
    st.builds(lambda f, s: f + "(" + s, st.sampled_from(["Retrieval", "Deduce", "Math", "Output"]),
              st.text(st.sampled_from(DSL_ALPHABET), max_size=50)),
)


# -- arithmetic expressions with an exact rational value -------------------------------

numbers = st.builds(lambda i, f: f"{i}.{f}" if f else str(i), st.integers(0, 999),
                    st.sampled_from(["", "5", "25", "125", "1", "75", "333"]))


@st.composite
def expressions(draw, depth=4, allow_div=True):
    """(text, exact value or None when some divisor is zero).

    Divisors are kept division-free and shallow so that a zero divisor is
    exactly zero under decimal arithmetic too.
    """
    if depth == 0 or draw(st.integers(0, 3)) == 0:
        t = draw(numbers)
        return t, Fraction(t)
    kind = draw(st.sampled_from(["bin", "bin", "bin", "neg", "paren", "func"]))
    if kind == "neg":
        t, v = draw(expressions(depth - 1, allow_div))
        return f"-({t})", None if v is None else -v
    if kind == "paren":
        t, v = draw(expressions(depth - 1, allow_div))
        return f"({t})", v
    if kind == "func":
        name = draw(st.sampled_from(["min", "max", "sum"]))
        args = draw(st.lists(expressions(depth - 1, allow_div), min_size=1, max_size=3))
        inner = ", ".join(t for t, _ in args)
        text = f"{name}([{inner}])" if draw(st.booleans()) else f"{name}({inner})"
        vals = [v for _, v in args]
        if any(v is None for v in vals):
            return text, None
        return text, {"min": min, "max": max, "sum": sum}[name](vals)
    op = draw(st.sampled_from("+-*/" if allow_div else "+-*"))
    lt, lv = draw(expressions(depth - 1, allow_div))
    if op == "/":
        rt, rv = draw(expressions(min(depth - 1, 2), False))
    else:
        rt, rv = draw(expressions(depth - 1, allow_div))
    # explicit parentheses keep the text's value equal to the tree's value
    text = f"({lt}) {op} ({rt})"
    if lv is None or rv is None:
        return text, None
    if op == "/":
        return text, (None if rv == 0 else lv / rv)
    return text, {"+": lv + rv, "-": lv - rv, "*": lv * rv}[op]
