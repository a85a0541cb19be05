"""Simply typed lambda terms: the single representation of formulas,
conditions and tactic programs.

Terms are immutable. Bound variables are de Bruijn indices internally;
binder names are kept for printing only and ignored by equality.
Numeric literals are exact rationals (stored as canonical constant names,
never floats).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator, Optional, Union


# ---------------------------------------------------------------------------
# types

class TermError(Exception):
    pass


class ParseFailure(TermError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class TypeMismatch(TermError):
    pass


class AmbiguousType(TermError):
    def __init__(self, tyvars):
        super().__init__(f"unresolved type variables: {sorted(tyvars)}")
        self.tyvars = tyvars


class UnknownConstant(TermError):
    pass


@dataclass(frozen=True, slots=True)
class TBase:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True, slots=True)
class TList:
    elem: "Typ"

    def __str__(self):
        e = str(self.elem)
        if isinstance(self.elem, TArrow):
            e = f"({e})"
        return f"{e} list"


@dataclass(frozen=True, slots=True)
class TArrow:
    dom: "Typ"
    cod: "Typ"

    def __str__(self):
        d = str(self.dom)
        if isinstance(self.dom, TArrow):
            d = f"({d})"
        return f"{d} => {self.cod}"


@dataclass(frozen=True, slots=True)
class TVar:
    name: str

    def __str__(self):
        return f"'{self.name}"


Typ = Union[TBase, TList, TArrow, TVar]

REAL = TBase("real")
BOOL = TBase("bool")
INT = TBase("int")


def arrow(*typs: Typ) -> Typ:
    """Right-nested function type from a flat list."""
    t = typs[-1]
    for d in reversed(typs[:-1]):
        t = TArrow(d, t)
    return t


def typ_tyvars(t: Typ) -> set[str]:
    match t:
        case TVar(n):
            return {n}
        case TList(e):
            return typ_tyvars(e)
        case TArrow(d, c):
            return typ_tyvars(d) | typ_tyvars(c)
        case _:
            return set()


# ---------------------------------------------------------------------------
# terms

@dataclass(frozen=True, slots=True)
class Const:
    name: str
    typ: Optional[Typ] = None


@dataclass(frozen=True, slots=True)
class Var:
    name: str
    typ: Optional[Typ] = None


@dataclass(frozen=True, slots=True)
class Bound:
    index: int


@dataclass(frozen=True, slots=True)
class Abs:
    binder_name: str
    binder_typ: Optional[Typ]
    body: "Term"


@dataclass(frozen=True, slots=True)
class App:
    fun: "Term"
    arg: "Term"


Term = Union[Const, Var, Bound, Abs, App]

TRUE = Const("True", BOOL)
FALSE = Const("False", BOOL)


def mk_app(head: Term, *args: Term) -> Term:
    t = head
    for a in args:
        t = App(t, a)
    return t


def app_spine(t: Term) -> tuple[Term, list[Term]]:
    """Split nested applications into (head, [arg1, arg2, ...])."""
    args: list[Term] = []
    while isinstance(t, App):
        args.append(t.arg)
        t = t.fun
    args.reverse()
    return t, args


def mk_num(value) -> Const:
    q = Fraction(value)
    return Const(str(q), REAL)


def num_value(t: Term) -> Optional[Fraction]:
    """The exact rational value of a literal constant, else None."""
    if isinstance(t, Const) and t.typ == REAL:
        try:
            return Fraction(t.name)
        except (ValueError, ZeroDivisionError):
            return None
    return None


def mk_list(items: list[Term], elem_typ: Optional[Typ] = None) -> Term:
    lt = TList(elem_typ) if elem_typ is not None else None
    t: Term = Const("nil", lt)
    ct = arrow(elem_typ, lt, lt) if elem_typ is not None else None
    for item in reversed(items):
        t = mk_app(Const("cons", ct), item, t)
    return t


def list_items(t: Term) -> Optional[list[Term]]:
    """Elements of a cons/nil spine, or None if t is not a literal list."""
    items = []
    while True:
        head, args = app_spine(t)
        if isinstance(head, Const) and head.name == "nil" and not args:
            return items
        if isinstance(head, Const) and head.name == "cons" and len(args) == 2:
            items.append(args[0])
            t = args[1]
            continue
        return None


def alpha_eq(s: Term, t: Term) -> bool:
    """Equality up to binder names (indices make this structural)."""
    match s, t:
        case Const(n1, t1), Const(n2, t2):
            return n1 == n2 and t1 == t2
        case Var(n1, t1), Var(n2, t2):
            return n1 == n2 and t1 == t2
        case Bound(i), Bound(j):
            return i == j
        case Abs(_, ty1, b1), Abs(_, ty2, b2):
            return ty1 == ty2 and alpha_eq(b1, b2)
        case App(f1, a1), App(f2, a2):
            return alpha_eq(f1, f2) and alpha_eq(a1, a2)
        case _:
            return False


def term_size(t: Term) -> int:
    match t:
        case App(f, a):
            return 1 + term_size(f) + term_size(a)
        case Abs(_, _, b):
            return 1 + term_size(b)
        case _:
            return 1


def free_vars(t: Term) -> set[str]:
    match t:
        case Var(n, _):
            return {n}
        case App(f, a):
            return free_vars(f) | free_vars(a)
        case Abs(_, _, b):
            return free_vars(b)
        case _:
            return set()


def consts_of(t: Term) -> set[str]:
    match t:
        case Const(n, _):
            return {n}
        case App(f, a):
            return consts_of(f) | consts_of(a)
        case Abs(_, _, b):
            return consts_of(b)
        case _:
            return set()


def lift(t: Term, by: int, cutoff: int = 0) -> Term:
    match t:
        case Bound(i):
            return Bound(i + by) if i >= cutoff else t
        case App(f, a):
            return App(lift(f, by, cutoff), lift(a, by, cutoff))
        case Abs(n, ty, b):
            return Abs(n, ty, lift(b, by, cutoff + 1))
        case _:
            return t


def subst_bound(t: Term, value: Term, depth: int = 0) -> Term:
    """Substitute `value` for Bound(depth), adjusting indices (beta step)."""
    match t:
        case Bound(i):
            if i == depth:
                return lift(value, depth)
            return Bound(i - 1) if i > depth else t
        case App(f, a):
            return App(subst_bound(f, value, depth), subst_bound(a, value, depth))
        case Abs(n, ty, b):
            return Abs(n, ty, subst_bound(b, value, depth + 1))
        case _:
            return t


def subst_vars(t: Term, env: dict[str, Term], depth: int = 0) -> Term:
    """Capture-avoiding substitution of free variables.

    Substituted values are lifted past binders, so a value with loose
    bound indices keeps referring to its original scope.
    """
    match t:
        case Var(n, _):
            v = env.get(n)
            return lift(v, depth) if v is not None else t
        case App(f, a):
            return App(subst_vars(f, env, depth), subst_vars(a, env, depth))
        case Abs(n, ty, b):
            return Abs(n, ty, subst_vars(b, env, depth + 1))
        case _:
            return t


def subst_consts(t: Term, env: dict[str, Term]) -> Term:
    match t:
        case Const(n, _):
            return env.get(n, t)
        case App(f, a):
            return App(subst_consts(f, env), subst_consts(a, env))
        case Abs(n, ty, b):
            return Abs(n, ty, subst_consts(b, env))
        case _:
            return t


Path = tuple[int, ...]


def subterm_at(t: Term, pos: Path) -> Term:
    for i in pos:
        match t, i:
            case App(f, _), 0:
                t = f
            case App(_, a), 1:
                t = a
            case Abs(_, _, b), 0:
                t = b
            case _:
                raise TermError(f"invalid position {pos}")
    return t


def replace_at(t: Term, pos: Path, new: Term) -> Term:
    if not pos:
        return new
    i, rest = pos[0], pos[1:]
    match t, i:
        case App(f, a), 0:
            return App(replace_at(f, rest, new), a)
        case App(f, a), 1:
            return App(f, replace_at(a, rest, new))
        case Abs(n, ty, b), 0:
            return Abs(n, ty, replace_at(b, rest, new))
        case _:
            raise TermError(f"invalid position {pos}")


def positions_innermost(t: Term) -> Iterator[Path]:
    """All positions, children before parents, left to right."""
    match t:
        case App(f, a):
            for p in positions_innermost(f):
                yield (0,) + p
            for p in positions_innermost(a):
                yield (1,) + p
        case Abs(_, _, b):
            for p in positions_innermost(b):
                yield (0,) + p
    yield ()


def positions_outermost(t: Term) -> Iterator[Path]:
    yield ()
    match t:
        case App(f, a):
            for p in positions_outermost(f):
                yield (0,) + p
            for p in positions_outermost(a):
                yield (1,) + p
        case Abs(_, _, b):
            for p in positions_outermost(b):
                yield (0,) + p


# ---------------------------------------------------------------------------
# fixity table (fixed; published in grammar.ebnf)

@dataclass(frozen=True, slots=True)
class Infix:
    symbol: str
    prec: int
    assoc: str  # left | right | none


@dataclass(frozen=True, slots=True)
class Prefix:
    symbol: str
    prec: int


INFIX = {
    "chain": Infix("@@", 40, "right"),
    "eq": Infix("=", 50, "none"),
    "less": Infix("<", 50, "none"),
    "less_eq": Infix("<=", 50, "none"),
    "plus": Infix("+", 65, "left"),
    "minus": Infix("-", 65, "left"),
    "times": Infix("*", 70, "left"),
    "divide": Infix("/", 70, "left"),
    "power": Infix("^", 80, "right"),
}

PREFIX = {"uminus": Prefix("-", 75)}

SYMBOL_TO_CONST = {f.symbol: name for name, f in INFIX.items()}

APP_PREC = 100
UMINUS_PREC = PREFIX["uminus"].prec

_A = TVar("a")
_B = TVar("b")
_C = TVar("c")

# builtin signatures available in every context
BUILTIN_SIGNATURES: dict[str, Typ] = {
    "plus": arrow(REAL, REAL, REAL),
    "minus": arrow(REAL, REAL, REAL),
    "times": arrow(REAL, REAL, REAL),
    "divide": arrow(REAL, REAL, REAL),
    "power": arrow(REAL, REAL, REAL),
    "uminus": arrow(REAL, REAL),
    "eq": arrow(_A, _A, BOOL),
    "less": arrow(REAL, REAL, BOOL),
    "less_eq": arrow(REAL, REAL, BOOL),
    "not": arrow(BOOL, BOOL),
    "True": BOOL,
    "False": BOOL,
    "cons": arrow(_A, TList(_A), TList(_A)),
    "nil": TList(_A),
    "lastI": arrow(TList(_A), _A),
    "length": arrow(TList(_A), REAL),
    "append": arrow(TList(_A), TList(_A), TList(_A)),
    "lhs": arrow(BOOL, REAL),
    "rhs": arrow(BOOL, REAL),
    "chain": arrow(TArrow(_A, _B), TArrow(_B, _C), TArrow(_A, _C)),
}


# ---------------------------------------------------------------------------
# context

@dataclass
class Context:
    """Typing context of one calculation.

    Variable typings grow monotonically while a calculation runs; the
    context is copied per calculation, never shared.
    """
    theory_name: str = "Base"
    constants: dict[str, Typ] = field(default_factory=dict)
    variables: dict[str, Typ] = field(default_factory=dict)
    assumptions: list[Term] = field(default_factory=list)
    strict: bool = False  # reject identifiers that are neither declared nor typed

    def copy(self) -> "Context":
        return Context(self.theory_name, dict(self.constants),
                       dict(self.variables), list(self.assumptions), self.strict)

    def const_typ(self, name: str) -> Optional[Typ]:
        t = self.constants.get(name)
        if t is None:
            t = BUILTIN_SIGNATURES.get(name)
        return t

    def assume(self, t: Term) -> None:
        self.assumptions.append(t)


# ---------------------------------------------------------------------------
# lexer

_SYMBOLS = ["::", "@@", "<=", "=>", "<", "=", "+", "-", "*", "/", "^",
            "(", ")", "[", "]", ",", ";", "%", "."]

# identifiers that terminate juxtaposition (never parsed as atoms)
KEYWORDS = {"let", "in", "if", "list"}


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # num | ident | sym
    text: str
    pos: int


def tokenize(text: str) -> list[Token]:
    toks = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            toks.append(Token("num", text[i:j], i))
            i = j
            continue
        if c.isalpha() or c == "_" or c == "?":
            j = i + 1 if c == "?" else i
            if c == "?" and (j >= n or not (text[j].isalpha() or text[j] == "_")):
                raise ParseFailure("stray '?'", i)
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            while j < n and text[j] == "'":
                j += 1
            toks.append(Token("ident", text[i:j], i))
            i = j
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                toks.append(Token("sym", sym, i))
                i += len(sym)
                break
        else:
            raise ParseFailure(f"unexpected character {c!r}", i)
    toks.append(Token("eof", "", n))
    return toks


# ---------------------------------------------------------------------------
# parser (precedence climbing over the fixed operator table)

class _Parser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.i = 0

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            raise ParseFailure(f"expected {text!r}, found {t.text!r}", t.pos)
        return t

    def at(self, text: str) -> bool:
        return self.peek().text == text

    # -- types ------------------------------------------------------------

    def parse_typ(self) -> Typ:
        t = self.parse_typ_atom()
        while self.at("list"):
            self.next()
            t = TList(t)
        if self.at("=>"):
            self.next()
            return TArrow(t, self.parse_typ())
        return t

    def parse_typ_atom(self) -> Typ:
        tok = self.next()
        if tok.text == "(":
            t = self.parse_typ()
            self.expect(")")
            while self.at("list"):
                self.next()
                t = TList(t)
            return t
        if tok.kind == "ident":
            if tok.text in ("real", "bool", "int"):
                return TBase(tok.text)
            raise ParseFailure(f"unknown type {tok.text!r}", tok.pos)
        raise ParseFailure("expected a type", tok.pos)

    # -- terms ------------------------------------------------------------

    def parse_term(self, min_prec: int = 0) -> "_PTerm":
        left = self.parse_prefix()
        while True:
            tok = self.peek()
            fix = INFIX.get(SYMBOL_TO_CONST.get(tok.text, ""))
            if fix is None or fix.prec < min_prec:
                return left
            self.next()
            if fix.assoc == "left":
                right = self.parse_term(fix.prec + 1)
            elif fix.assoc == "right":
                right = self.parse_term(fix.prec)
            else:
                right = self.parse_term(fix.prec + 1)
                nxt = self.peek()
                if INFIX.get(SYMBOL_TO_CONST.get(nxt.text, "")) == fix:
                    raise ParseFailure(f"{fix.symbol!r} is not associative", nxt.pos)
            left = _papp(_pconst(SYMBOL_TO_CONST[tok.text], tok.pos), left, right)

    def parse_prefix(self) -> "_PTerm":
        tok = self.peek()
        if tok.text == "-":
            self.next()
            operand = self.parse_term(UMINUS_PREC)
            if operand.kind == "num":
                return replace(operand, value=-operand.value)
            return _papp(_pconst("uminus", tok.pos), operand)
        if tok.text == "%":
            self.next()
            name = self.next()
            if name.kind != "ident":
                raise ParseFailure("expected binder name", name.pos)
            btyp = None
            if self.at("::"):
                self.next()
                btyp = self.parse_typ()
            self.expect(".")
            body = self.parse_term(0)
            return _PTerm("abs", pos=tok.pos, name=name.text, typ=btyp, args=[body])
        return self.parse_app()

    def parse_app(self) -> "_PTerm":
        t = self.parse_atom()
        while True:
            tok = self.peek()
            if tok.text in ("(", "[") or tok.kind in ("num", "ident"):
                # juxtaposition binds tighter than every operator
                if tok.kind == "ident" and tok.text in KEYWORDS:
                    break
                t = _papp(t, self.parse_atom())
            else:
                break
        return t

    def parse_atom(self) -> "_PTerm":
        tok = self.next()
        if tok.kind == "num":
            return _PTerm("num", pos=tok.pos, value=Fraction(tok.text))
        if tok.kind == "ident":
            if tok.text in KEYWORDS:
                raise ParseFailure(f"keyword {tok.text!r} cannot be a term", tok.pos)
            schematic = tok.text.startswith("?")
            return _PTerm("id", pos=tok.pos, name=tok.text.lstrip("?"),
                          schematic=schematic)
        if tok.text == "(":
            first = self.parse_term(0)
            if self.at(","):
                # (a, b) is sugar for the two-element list [a, b]
                self.next()
                second = self.parse_term(0)
                self.expect(")")
                return _PTerm("list", pos=tok.pos, args=[first, second])
            if self.at("::"):
                self.next()
                typ = self.parse_typ()
                self.expect(")")
                return _PTerm("annot", pos=tok.pos, typ=typ, args=[first])
            self.expect(")")
            return first
        if tok.text == "[":
            items = []
            if not self.at("]"):
                items.append(self.parse_term(0))
                while self.at(","):
                    self.next()
                    items.append(self.parse_term(0))
            self.expect("]")
            return _PTerm("list", pos=tok.pos, args=items)
        raise ParseFailure(f"unexpected {tok.text!r}", tok.pos)


@dataclass
class _PTerm:
    """Pre-term produced by the parser, elaborated to a typed Term."""
    kind: str  # num | id | app | abs | list | annot
    pos: int = 0
    name: str = ""
    value: Fraction = Fraction(0)
    typ: Optional[Typ] = None
    schematic: bool = False
    args: list = field(default_factory=list)


def _pconst(name: str, pos: int) -> _PTerm:
    return _PTerm("id", pos=pos, name=name)


def _papp(f: _PTerm, *args: _PTerm) -> _PTerm:
    for a in args:
        f = _PTerm("app", pos=f.pos, args=[f, a])
    return f


# ---------------------------------------------------------------------------
# type inference (unification with per-occurrence instantiation)

class _Infer:
    def __init__(self, ctx: Context):
        self.ctx = ctx
        self.subst: dict[str, Typ] = {}
        self.counter = 0
        self.new_vars: dict[str, Typ] = {}

    def fresh(self) -> TVar:
        self.counter += 1
        return TVar(f"t{self.counter}")

    def instantiate(self, t: Typ) -> Typ:
        mapping = {n: self.fresh() for n in typ_tyvars(t)}
        return self.apply_map(t, mapping) if mapping else t

    def apply_map(self, t: Typ, mapping: dict[str, Typ]) -> Typ:
        match t:
            case TVar(n):
                return mapping.get(n, t)
            case TList(e):
                return TList(self.apply_map(e, mapping))
            case TArrow(d, c):
                return TArrow(self.apply_map(d, mapping), self.apply_map(c, mapping))
            case _:
                return t

    def resolve(self, t: Typ) -> Typ:
        while isinstance(t, TVar) and t.name in self.subst:
            t = self.subst[t.name]
        return t

    def zonk(self, t: Typ) -> Typ:
        t = self.resolve(t)
        match t:
            case TList(e):
                return TList(self.zonk(e))
            case TArrow(d, c):
                return TArrow(self.zonk(d), self.zonk(c))
            case _:
                return t

    def occurs(self, name: str, t: Typ) -> bool:
        t = self.resolve(t)
        match t:
            case TVar(n):
                return n == name
            case TList(e):
                return self.occurs(name, e)
            case TArrow(d, c):
                return self.occurs(name, d) or self.occurs(name, c)
            case _:
                return False

    def unify(self, a: Typ, b: Typ) -> None:
        a, b = self.resolve(a), self.resolve(b)
        if a == b:
            return
        if isinstance(a, TVar):
            if self.occurs(a.name, b):
                raise TypeMismatch(f"occurs check: {a} in {b}")
            self.subst[a.name] = b
            return
        if isinstance(b, TVar):
            self.unify(b, a)
            return
        match a, b:
            case TList(e1), TList(e2):
                self.unify(e1, e2)
            case TArrow(d1, c1), TArrow(d2, c2):
                self.unify(d1, d2)
                self.unify(c1, c2)
            case _:
                raise TypeMismatch(f"cannot unify {a} with {b}")

    # elaborate a pre-term; returns (Term, Typ)
    def elab(self, p: _PTerm, benv: list[tuple[str, Typ]]) -> tuple[Term, Typ]:
        if p.kind == "num":
            return Const(str(p.value), REAL), REAL
        if p.kind == "id":
            for i, (bn, bt) in enumerate(benv):
                if bn == p.name and not p.schematic:
                    return Bound(i), bt
            if not p.schematic:
                ct = self.ctx.const_typ(p.name)
                if ct is not None:
                    t = self.instantiate(ct)
                    return Const(p.name, t), t
            vt = self.ctx.variables.get(p.name) or self.new_vars.get(p.name)
            if vt is None:
                if self.ctx.strict and not p.schematic:
                    raise UnknownConstant(f"unknown identifier {p.name!r}")
                vt = self.fresh()
                self.new_vars[p.name] = vt
            return Var(p.name, vt), vt
        if p.kind == "app":
            f, ft = self.elab(p.args[0], benv)
            a, at = self.elab(p.args[1], benv)
            res = self.fresh()
            try:
                self.unify(ft, TArrow(at, res))
            except TypeMismatch as e:
                raise TypeMismatch(f"ill-typed application at offset {p.pos}: {e}") from None
            return App(f, a), res
        if p.kind == "abs":
            bt = p.typ if p.typ is not None else self.fresh()
            body, ot = self.elab(p.args[0], [(p.name, bt)] + benv)
            return Abs(p.name, bt, body), TArrow(bt, ot)
        if p.kind == "list":
            et = self.fresh()
            items = []
            for q in p.args:
                it, itt = self.elab(q, benv)
                self.unify(et, itt)
                items.append(it)
            lt = TList(et)
            t: Term = Const("nil", lt)
            for it in reversed(items):
                t = mk_app(Const("cons", arrow(et, lt, lt)), it, t)
            return t, lt
        if p.kind == "annot":
            t, tt = self.elab(p.args[0], benv)
            self.unify(tt, p.typ)
            return t, tt
        raise TermError(f"bad pre-term {p.kind}")

    def finish(self, t: Term, default: bool = True, keep: bool = False) -> Term:
        t = self._zonk_term(t)
        remaining = self._term_tyvars(t)
        if remaining and not keep:
            if not default:
                raise AmbiguousType(remaining)
            mapping = {n: REAL for n in remaining}
            for n in mapping:
                self.subst[n] = REAL
            t = self._zonk_term(t)
        for name in list(self.new_vars):
            self.new_vars[name] = self.zonk(self.new_vars[name])
            if isinstance(self.new_vars[name], TVar) and not keep:
                self.new_vars[name] = REAL
        return t

    def _zonk_term(self, t: Term) -> Term:
        match t:
            case Const(n, ty):
                return Const(n, self.zonk(ty) if ty is not None else None)
            case Var(n, ty):
                return Var(n, self.zonk(ty) if ty is not None else None)
            case App(f, a):
                return App(self._zonk_term(f), self._zonk_term(a))
            case Abs(n, ty, b):
                return Abs(n, self.zonk(ty) if ty is not None else None,
                           self._zonk_term(b))
            case _:
                return t

    def _term_tyvars(self, t: Term) -> set[str]:
        match t:
            case Const(_, ty) | Var(_, ty):
                return typ_tyvars(ty) if ty is not None else set()
            case App(f, a):
                return self._term_tyvars(f) | self._term_tyvars(a)
            case Abs(_, ty, b):
                s = typ_tyvars(ty) if ty is not None else set()
                return s | self._term_tyvars(b)
            case _:
                return set()


def parse(text: str, ctx: Optional[Context] = None, default_tyvars: bool = True,
          expected: Optional[Typ] = None, keep_tyvars: bool = False) -> Term:
    """Parse and type a formula. New variables get inferred types which are
    recorded on the returned term, not written back into ctx.

    keep_tyvars leaves unconstrained type variables schematic (used for
    polymorphic rewrite rules)."""
    ctx = ctx if ctx is not None else Context()
    p = _Parser(tokenize(text))
    pre = p.parse_term(0)
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseFailure(f"unexpected {tok.text!r}", tok.pos)
    inf = _Infer(ctx)
    t, tt = inf.elab(pre, [])
    if expected is not None:
        inf.unify(tt, expected)
    return inf.finish(t, default=default_tyvars, keep=keep_tyvars)


def parse_typ_text(text: str) -> Typ:
    p = _Parser(tokenize(text))
    t = p.parse_typ()
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseFailure(f"unexpected {tok.text!r} in type", tok.pos)
    return t


def infer_types(t: Term, ctx: Optional[Context] = None, default_tyvars: bool = True) -> Term:
    """Resolve remaining type variables against the context; idempotent."""
    ctx = ctx if ctx is not None else Context()
    inf = _Infer(ctx)
    typed, _ = _retype(t, inf, [])
    return inf.finish(typed, default=default_tyvars)


def _retype(t: Term, inf: _Infer, benv: list[Typ]) -> tuple[Term, Typ]:
    match t:
        case Const(n, ty):
            sig = inf.ctx.const_typ(n)
            if sig is not None:
                it = inf.instantiate(sig)
            elif num_value(t) is not None:
                it = REAL
            else:
                it = inf.fresh()
            if ty is not None and not typ_tyvars(ty):
                inf.unify(it, ty)
            return Const(n, it), it
        case Var(n, ty):
            vt = inf.ctx.variables.get(n) or inf.new_vars.get(n)
            if vt is None:
                vt = ty if ty is not None and not typ_tyvars(ty) else inf.fresh()
                inf.new_vars[n] = vt
            elif ty is not None and not typ_tyvars(ty):
                inf.unify(vt, ty)
            return Var(n, vt), vt
        case Bound(i):
            return t, benv[i]
        case Abs(n, ty, b):
            bt = ty if ty is not None and not typ_tyvars(ty) else inf.fresh()
            body, ot = _retype(b, inf, [bt] + benv)
            return Abs(n, bt, body), TArrow(bt, ot)
        case App(f, a):
            ft_term, ft = _retype(f, inf, benv)
            at_term, at = _retype(a, inf, benv)
            res = inf.fresh()
            inf.unify(ft, TArrow(at, res))
            return App(ft_term, at_term), res
    raise TermError(f"bad term {t}")


def typ_of(t: Term, benv: Optional[list[Typ]] = None) -> Typ:
    """Type of a fully typed term (no inference)."""
    benv = benv or []
    match t:
        case Const(_, ty) | Var(_, ty):
            if ty is None:
                raise TypeMismatch(f"untyped atom {t}")
            return ty
        case Bound(i):
            return benv[i]
        case Abs(_, ty, b):
            return TArrow(ty, typ_of(b, [ty] + benv))
        case App(f, _):
            ft = typ_of(f, benv)
            if not isinstance(ft, TArrow):
                raise TypeMismatch(f"application of non-function {f}")
            return ft.cod
    raise TermError(f"bad term {t}")


# ---------------------------------------------------------------------------
# pretty printing

def _is_neg_literal(t: Term) -> bool:
    v = num_value(t)
    return v is not None and v < 0


def pretty(t: Term) -> str:
    return _pp(t, 0, [])


def _pp(t: Term, prec: int, benv: list[str]) -> str:
    items = list_items(t)
    if items is not None:
        return "[" + ", ".join(_pp(i, 0, benv) for i in items) + "]"
    match t:
        case Const(name, _):
            v = num_value(t)
            if v is not None and v < 0:
                s = str(v)
                return f"({s})" if prec > UMINUS_PREC else s
            if v is not None:
                return str(v)
            return name
        case Var(name, _):
            return name
        case Bound(i):
            return benv[i] if i < len(benv) else f".{i}"
        case Abs(name, _, body):
            name = _fresh_name(name, benv)
            s = f"%{name}. {_pp(body, 0, [name] + benv)}"
            return f"({s})" if prec > 0 else s
        case App():
            head, args = app_spine(t)
            if isinstance(head, Const):
                fix = INFIX.get(head.name)
                if fix is not None and len(args) == 2:
                    lp = fix.prec if fix.assoc != "left" else fix.prec
                    rp = fix.prec + 1 if fix.assoc != "right" else fix.prec
                    if fix.assoc == "none":
                        lp, rp = fix.prec + 1, fix.prec + 1
                    elif fix.assoc == "left":
                        lp, rp = fix.prec, fix.prec + 1
                    else:
                        lp, rp = fix.prec + 1, fix.prec
                    s = f"{_pp(args[0], lp, benv)} {fix.symbol} {_pp(args[1], rp, benv)}"
                    return f"({s})" if prec > fix.prec else s
                if head.name == "uminus" and len(args) == 1:
                    s = f"- {_pp(args[0], UMINUS_PREC + 1, benv)}"
                    return f"({s})" if prec > UMINUS_PREC else s
            parts = [_pp(head, APP_PREC + 1, benv)]
            parts += [_pp(a, APP_PREC + 1, benv) for a in args]
            s = " ".join(parts)
            return f"({s})" if prec > APP_PREC else s
    raise TermError(f"bad term {t}")


def _fresh_name(name: str, benv: list[str]) -> str:
    if name not in benv:
        return name
    k = 1
    while f"{name}{k}" in benv:
        k += 1
    return f"{name}{k}"


# ---------------------------------------------------------------------------
# presentation AST

@dataclass(frozen=True, slots=True)
class AstLeaf:
    token: str


@dataclass(frozen=True, slots=True)
class AstNode:
    head: str
    children: tuple["Ast", ...]
    fixity: str  # "prefix" | "infix:<prec>:<assoc>" | "binder"


Ast = Union[AstLeaf, AstNode]


def term_to_ast(t: Term, benv: Optional[list[str]] = None) -> Ast:
    """Translate to a presentation tree carrying fixity, so a renderer
    needs no grammar knowledge. Prefix fixities carry their priority
    (`prefix:75`); `[]` is the list constructor, `@` application."""
    benv = benv or []
    items = list_items(t)
    if items is not None:
        return AstNode("[]", tuple(term_to_ast(i, benv) for i in items), "list")
    match t:
        case Const(name, _):
            v = num_value(t)
            return AstLeaf(str(v) if v is not None else name)
        case Var(name, _):
            return AstLeaf(name)
        case Bound(i):
            return AstLeaf(benv[i] if i < len(benv) else f".{i}")
        case Abs(name, _, body):
            name = _fresh_name(name, benv)
            return AstNode("%", (AstLeaf(name), term_to_ast(body, [name] + benv)),
                           "binder")
        case App():
            head, args = app_spine(t)
            if isinstance(head, Const):
                fix = INFIX.get(head.name)
                if fix is not None and len(args) == 2:
                    return AstNode(fix.symbol,
                                   (term_to_ast(args[0], benv), term_to_ast(args[1], benv)),
                                   f"infix:{fix.prec}:{fix.assoc}")
                if head.name == "uminus" and len(args) == 1:
                    return AstNode("-", (term_to_ast(args[0], benv),),
                                   f"prefix:{UMINUS_PREC}")
            return AstNode("@", tuple(term_to_ast(x, benv) for x in [head] + args),
                           f"prefix:{APP_PREC}")
    raise TermError(f"bad term {t}")


class AstError(TermError):
    pass


def ast_to_text(a: Ast) -> str:
    """Render an Ast back to concrete syntax (used to re-enter the parser)."""
    return _ast_text(a, 0)


def _ast_text(a: Ast, prec: int) -> str:
    if isinstance(a, AstLeaf):
        try:
            if Fraction(a.token) < 0:
                return f"({a.token})" if prec > UMINUS_PREC else a.token
        except ValueError:
            pass
        return a.token
    if a.fixity == "list" or a.head == "[]":
        return "[" + ", ".join(_ast_text(c, 0) for c in a.children) + "]"
    if a.fixity == "binder":
        if len(a.children) != 2:
            raise AstError("binder node needs exactly binder and body")
        s = f"%{_ast_text(a.children[0], 0)}. {_ast_text(a.children[1], 0)}"
        return f"({s})" if prec > 0 else s
    if a.fixity.startswith("infix"):
        if len(a.children) != 2:
            raise AstError(f"infix node {a.head!r} needs exactly two children")
        _, p, assoc = a.fixity.split(":")
        p = int(p)
        lp = p if assoc == "left" else p + 1
        rp = p if assoc == "right" else p + 1
        s = f"{_ast_text(a.children[0], lp)} {a.head} {_ast_text(a.children[1], rp)}"
        return f"({s})" if prec > p else s
    if a.fixity.startswith("prefix"):
        p = int(a.fixity.split(":")[1]) if ":" in a.fixity else APP_PREC
        if a.head == "@":
            parts = [_ast_text(c, p + 1) for c in a.children]
            s = " ".join(parts)
        else:
            operand = " ".join(_ast_text(c, p + 1) for c in a.children)
            s = f"{a.head} {operand}"
        return f"({s})" if prec > p else s
    raise AstError(f"unknown head {a.head!r}")


def ast_to_term(a: Ast, ctx: Optional[Context] = None) -> Term:
    return parse(ast_to_text(a), ctx)


def ast_to_json(a: Ast):
    if isinstance(a, AstLeaf):
        return {"leaf": a.token}
    return {"head": a.head, "fixity": a.fixity,
            "children": [ast_to_json(c) for c in a.children]}


def ast_from_json(d) -> Ast:
    if "leaf" in d:
        return AstLeaf(d["leaf"])
    return AstNode(d["head"], tuple(ast_from_json(c) for c in d["children"]),
                   d["fixity"])
