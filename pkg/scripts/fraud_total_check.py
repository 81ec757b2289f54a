"""Sum the card-fraud amounts with the Math executor and compare candidate totals.

    python3 scripts/fraud_total_check.py
"""

from __future__ import annotations

import sys
from fractions import Fraction

from lfqa.mathexpr import evaluate, format_result

AMOUNTS = ("210.4", "569.2", "1035.2", "2044.5", "1035")
# totals that circulate with this example, and the one the amounts actually give
CANDIDATES = ("4989.40", "4894.40", "4894.30")


def report() -> list[tuple[str, bool]]:
    value, _ = evaluate(f"sum([{', '.join(AMOUNTS)}])")
    computed = format_result(value)
    exact = sum(Fraction(a) for a in AMOUNTS)
    assert Fraction(computed) == exact, (computed, exact)
    return [(c, c == computed) for c in CANDIDATES]


def main() -> int:
    value, _ = evaluate(f"sum([{', '.join(AMOUNTS)}])")
    print(f"computed {format_result(value)} from {' + '.join(AMOUNTS)}")
    for total, ok in report():
        print(f"{total}: {'matches' if ok else 'DOES NOT MATCH'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
