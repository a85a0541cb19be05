"""Exact multivariate polynomial arithmetic backing the evaluator builtins.

A polynomial is a dict mapping monomials (sorted tuples of (var, exponent))
to Fraction coefficients. Conversion is partial: terms that are not
polynomial-shaped convert to None. All arithmetic is exact.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Optional

from .terms import (App, Const, Term, Var, app_spine, mk_app, mk_num,
                    num_value, REAL, arrow)

Monomial = tuple[tuple[str, int], ...]
Poly = dict[Monomial, Fraction]

ONE: Monomial = ()


def const_poly(c: Fraction) -> Poly:
    return {ONE: c} if c != 0 else {}


def var_poly(name: str) -> Poly:
    return {((name, 1),): Fraction(1)}


def add(p: Poly, q: Poly) -> Poly:
    r = dict(p)
    for m, c in q.items():
        c2 = r.get(m, Fraction(0)) + c
        if c2 == 0:
            r.pop(m, None)
        else:
            r[m] = c2
    return r


def neg(p: Poly) -> Poly:
    return {m: -c for m, c in p.items()}


def mul(p: Poly, q: Poly) -> Poly:
    r: Poly = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mul_mono(m1, m2)
            c = r.get(m, Fraction(0)) + c1 * c2
            if c == 0:
                r.pop(m, None)
            else:
                r[m] = c
    return r


def _mul_mono(m1: Monomial, m2: Monomial) -> Monomial:
    d: dict[str, int] = {}
    for v, e in m1 + m2:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items()))


def scale(p: Poly, c: Fraction) -> Poly:
    if c == 0:
        return {}
    return {m: co * c for m, co in p.items()}


def power(p: Poly, n: int) -> Poly:
    r = const_poly(Fraction(1))
    for _ in range(n):
        r = mul(r, p)
    return r


def degree_in(p: Poly, v: str) -> int:
    deg = 0
    for m in p:
        for name, e in m:
            if name == v:
                deg = max(deg, e)
    return deg


def from_term(t: Term) -> Optional[Poly]:
    """Term to polynomial; None if the term is not built from
    +, -, *, ^ (natural literal exponent), / by a nonzero literal,
    variables and literals."""
    v = num_value(t)
    if v is not None:
        return const_poly(v)
    if isinstance(t, Var):
        return var_poly(t.name)
    if isinstance(t, Const):
        # undetermined constants behave like variables algebraically
        return var_poly(t.name)
    head, args = app_spine(t)
    if not isinstance(head, Const):
        return None
    if head.name == "uminus" and len(args) == 1:
        p = from_term(args[0])
        return neg(p) if p is not None else None
    if len(args) != 2:
        return None
    a, b = args
    if head.name == "plus":
        pa, pb = from_term(a), from_term(b)
        return add(pa, pb) if pa is not None and pb is not None else None
    if head.name == "minus":
        pa, pb = from_term(a), from_term(b)
        return add(pa, neg(pb)) if pa is not None and pb is not None else None
    if head.name == "times":
        pa, pb = from_term(a), from_term(b)
        return mul(pa, pb) if pa is not None and pb is not None else None
    if head.name == "divide":
        d = num_value(b)
        if d is None or d == 0:
            return None
        pa = from_term(a)
        return scale(pa, Fraction(1) / d) if pa is not None else None
    if head.name == "power":
        e = num_value(b)
        if e is None or e.denominator != 1 or e < 0:
            return None
        pa = from_term(a)
        return power(pa, int(e)) if pa is not None else None
    return None


def integrate(p: Poly, v: str) -> Poly:
    """Antiderivative with respect to v, zero integration constant."""
    r: Poly = {}
    for m, c in p.items():
        d = dict(m)
        e = d.get(v, 0)
        d[v] = e + 1
        r[tuple(sorted(d.items()))] = c / (e + 1)
    return r


# ---------------------------------------------------------------------------
# rendering back to terms (canonical rational-polynomial form)

_TIMES = Const("times", arrow(REAL, REAL, REAL))
_PLUS = Const("plus", arrow(REAL, REAL, REAL))
_MINUS = Const("minus", arrow(REAL, REAL, REAL))
_DIV = Const("divide", arrow(REAL, REAL, REAL))
_POW = Const("power", arrow(REAL, REAL, REAL))
_UMINUS = Const("uminus", arrow(REAL, REAL))


def _mono_term(m: Monomial, main: Optional[str], atoms) -> Optional[Term]:
    factors: list[Term] = []
    # main variable rendered last so terms read "coeff * x ^ k"
    rest = [(v, e) for v, e in m if v != main]
    rest.sort()
    if main is not None:
        rest += [(v, e) for v, e in m if v == main]
    for v, e in rest:
        base: Term = atoms.get(v) or Var(v, REAL)
        factors.append(base if e == 1 else mk_app(_POW, base, mk_num(e)))
    if not factors:
        return None
    t = factors[0]
    for f in factors[1:]:
        t = mk_app(_TIMES, t, f)
    return t


def _coeff_apply(c: Fraction, body: Optional[Term]) -> Term:
    """coefficient * body with the fraction folded into numerator/denominator."""
    if body is None:
        return mk_num(c)
    num, den = c.numerator, c.denominator
    t = body
    if num != 1:
        t = mk_app(_TIMES, mk_num(num), t) if num != -1 else t
    if den != 1:
        t = mk_app(_DIV, t, mk_num(den))
    if num == -1:
        t = mk_app(_UMINUS, t)
    return t


def atom_map(t: Term, acc: Optional[dict] = None) -> dict[str, Term]:
    """Original atoms (variables and undetermined constants) by name, so
    rendering a polynomial restores them exactly."""
    acc = acc if acc is not None else {}
    match t:
        case Var(n, _):
            acc.setdefault(n, t)
        case Const(n, _):
            if num_value(t) is None:
                acc.setdefault(n, t)
        case App(f, a):
            atom_map(f, acc)
            atom_map(a, acc)
    return acc


def to_term(p: Poly, main: Optional[str] = None, atoms=None) -> Term:
    """Canonical term: monomials sorted by descending degree in the main
    variable, then lexicographically; subtraction for negative coefficients."""
    atoms = atoms or {}
    if not p:
        return mk_num(0)

    def key(item):
        m, _ = item
        deg = 0
        if main is not None:
            for v, e in m:
                if v == main:
                    deg = e
        total = sum(e for _, e in m)
        return (-deg, -total, m)

    entries = sorted(p.items(), key=key)
    t: Optional[Term] = None
    for m, c in entries:
        body = _mono_term(m, main, atoms)
        if t is None:
            t = _coeff_apply(c, body)
            continue
        piece = _coeff_apply(abs(c), body)
        t = mk_app(_PLUS if c > 0 else _MINUS, t, piece)
    return t
