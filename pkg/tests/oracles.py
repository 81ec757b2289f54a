"""Independent reference implementations the production code is checked against.

Written from the definitions, sharing no code with the package.
"""

import math
import re
import string
from fractions import Fraction


def round_half_up(x: Fraction, places: int = 2) -> Fraction:
    scale = 10 ** places
    y = abs(x) * scale
    q = math.floor(y + Fraction(1, 2))
    return Fraction(q if x >= 0 else -q, scale)


def bm25_rank(docs, query, k1=1.2, b=0.75):
    """Score every doc from scratch; return [(id, score)] with score > 0, best first, ties by id."""
    tok = lambda s: re.findall(r"[^\W_]+", s.lower())
    bodies = [tok(title) + tok(text) for _, title, text in docs]
    n = len(docs)
    avgdl = sum(len(d) for d in bodies) / n
    terms = []
    for t in tok(query):
        if t not in terms:
            terms.append(t)
    out = []
    for (doc_id, _, _), body in zip(docs, bodies):
        score = 0.0
        for t in terms:
            df = sum(1 for d in bodies if t in d)
            if df == 0:
                continue
            tf = body.count(t)
            if tf == 0:
                continue
            w = math.log(1 + (n - df + 0.5) / (df + 0.5))
            score += w * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(body) / avgdl))
        if score > 0:
            out.append((doc_id, score))
    out.sort(key=lambda p: (-p[1], p[0]))
    return out


def squad_normalize(s: str) -> str:
    s = s.lower()
    s = "".join(c for c in s if c not in set(string.punctuation))
    s = re.sub(r"\b(a|an|the)\b", " ", s)
    return " ".join(s.split())


def f1_oracle(pred: str, gold: str) -> float:
    p, g = squad_normalize(pred).split(), squad_normalize(gold).split()
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    remaining = list(g)
    common = 0
    for t in p:
        if t in remaining:
            remaining.remove(t)
            common += 1
    if common == 0:
        return 0.0
    prec, rec = common / len(p), common / len(g)
    return 2 * prec * rec / (prec + rec)
