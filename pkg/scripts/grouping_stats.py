#!/usr/bin/env python3
"""Compare grouped-ruleset trace lengths against singleton-rule
round-robin rewriting on the fraction corpus. The grouped traces are
the ones a student sees; this prints how much shorter they are.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from stepcalc.knowledge import load_bundle
from stepcalc.rewrite import Ruleset, normalize
from stepcalc.terms import parse, pretty

CORPUS = [
    "a / b * (c / d)",
    "(x + 1) / 2 * (3 / y)",
    "a / b / (c / d)",
    "(a / b) ^ 2",
    "(a / b * (c / d)) ^ 3",
    "a / b * (c / d) * (x / y)",
    "(a / b / (c / d)) ^ 2",
    "1 / 2 * (3 / 4)",
    "(a / b) ^ 2 * (c / d)",
    "a / (b / (c / d))",
]


def singleton_rounds(rs, t, ctx):
    singles = [Ruleset(f"s_{r.name}", [r], rs.strategy, rs.cond_ruleset,
                       rs.step_bound, validate=False) for r in rs.rules]
    total, cur = 0, t
    while True:
        changed = 0
        for single in singles:
            tr = normalize(single, cur, ctx.copy())
            changed += len(tr.steps)
            cur = tr.final
        total += changed
        if changed == 0:
            return total


def main():
    store = load_bundle(Path(__file__).resolve().parent.parent / "content")
    rs = store.ruleset("norm_Rational")
    ctx = store.ctx("Rational")
    print(f"{'term':38} grouped  singleton  normal form")
    for text in CORPUS:
        t = parse(text, ctx.copy())
        grouped = normalize(rs, t, ctx.copy())
        single = singleton_rounds(rs, t, ctx)
        print(f"{text:38} {len(grouped.steps):7} {single:10}  "
              f"{pretty(grouped.final)}")


if __name__ == "__main__":
    main()
