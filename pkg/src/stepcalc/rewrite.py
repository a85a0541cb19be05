"""Typed matching and normalising conditional rewriting.

Rules are grouped into ordered rulesets; one ruleset application is one
explanation-sized step. Rule selection is rule-major: first rule in
ruleset order that matches anywhere, at the first position in strategy
order. Conditions are decided by normalising them to the literal
True/False with the ruleset's condition ruleset; anything else counts
as undecided and blocks the rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Optional

from . import poly
from .terms import (Abs, App, Bound, Const, Context, Path, Term, TRUE, FALSE,
                    TArrow, TBase, TList, TVar, Typ, Var, alpha_eq, app_spine,
                    free_vars, infer_types, lift, list_items, mk_app, mk_num,
                    num_value, positions_innermost, positions_outermost,
                    pretty, replace_at, subst_vars, subterm_at, term_size,
                    typ_of, typ_tyvars, TermError)


class RewriteError(Exception):
    pass


class ConditionUndecided(RewriteError):
    """A rule condition normalised to neither True nor False."""

    def __init__(self, condition: Term):
        super().__init__(f"condition undecided: {pretty(condition)}")
        self.condition = condition


class EvalError(RewriteError):
    pass


# ---------------------------------------------------------------------------
# rules and rulesets

@dataclass(frozen=True)
class Rule:
    name: str
    lhs: Term
    rhs: Optional[Term]  # None for evaluator rules
    conditions: tuple[Term, ...] = ()
    kind: str = "theorem"  # theorem | evaluator
    builtin_id: str = ""
    extra_args: tuple[Term, ...] = ()  # passed to the builtin after the matched args
    open_vars: frozenset[str] = frozenset()  # must be instantiated before use
    applied_inst: tuple[tuple[str, Term], ...] = ()  # bindings already substituted

    def __post_init__(self):
        if isinstance(self.lhs, Var):
            raise RewriteError(f"rule {self.name}: lhs is a single variable")

    def needed_vars(self) -> set[str]:
        used = set()
        if self.rhs is not None:
            used |= free_vars(self.rhs)
        for c in self.conditions:
            used |= free_vars(c)
        for e in self.extra_args:
            used |= free_vars(e)
        return used

    def with_open_vars(self) -> "Rule":
        """Mark the rhs/condition variables not bound by the lhs; they
        must be supplied by ruleset instantiation before the rule can
        fire."""
        extra = self.needed_vars() - free_vars(self.lhs)
        return Rule(self.name, self.lhs, self.rhs, self.conditions, self.kind,
                    self.builtin_id, self.extra_args, frozenset(extra),
                    self.applied_inst)

    def check_var_coverage(self, inst_vars: set[str]) -> "Rule":
        if self.open_vars - inst_vars:
            raise RewriteError(
                f"rule {self.name}: rhs/condition variables "
                f"{sorted(self.open_vars - inst_vars)} not bound by lhs or "
                f"instantiation")
        return self

    def substituted(self, env: dict[str, Term]) -> "Rule":
        applied = self.applied_inst + tuple(
            (n, t) for n, t in env.items() if n in self.open_vars)
        return Rule(self.name,
                    subst_vars(self.lhs, env),
                    subst_vars(self.rhs, env) if self.rhs is not None else None,
                    tuple(subst_vars(c, env) for c in self.conditions),
                    self.kind, self.builtin_id,
                    tuple(subst_vars(e, env) for e in self.extra_args),
                    self.open_vars - set(env), applied)


@dataclass
class Ruleset:
    name: str
    rules: list[Rule]
    strategy: str = "innermost"  # innermost | outermost
    cond_ruleset: Optional["Ruleset"] = None
    step_bound: int = 10000
    inst_vars: set[str] = field(default_factory=set)
    validate: bool = True  # False for instantiated copies

    def __post_init__(self):
        if self.step_bound < 1:
            raise RewriteError(f"ruleset {self.name}: step bound must be >= 1")
        seen = {self.name}
        rs = self.cond_ruleset
        while rs is not None:
            if rs.name in seen:
                raise RewriteError(f"condition ruleset cycle through {rs.name}")
            seen.add(rs.name)
            rs = rs.cond_ruleset
        if self.validate:
            self.rules = [r.check_var_coverage(self.inst_vars) for r in self.rules]

    def instantiated(self, env: dict[str, Term]) -> "Ruleset":
        """Bind instantiation variables (e.g. the bound variable of a
        normal form) before application."""
        rules = [r.substituted(env) for r in self.rules]
        return Ruleset(f"{self.name}[inst]", rules, self.strategy,
                       self.cond_ruleset, self.step_bound,
                       self.inst_vars - set(env), validate=False)


@dataclass(frozen=True)
class RewriteStep:
    rule_name: str
    position: Path
    instantiation: dict[str, Term]
    before: Term
    after: Term

    def __eq__(self, other):
        return (isinstance(other, RewriteStep)
                and self.rule_name == other.rule_name
                and self.position == other.position
                and alpha_eq(self.before, other.before)
                and alpha_eq(self.after, other.after))


@dataclass(frozen=True)
class Trace:
    initial: Term
    steps: tuple[RewriteStep, ...]
    final: Term
    complete: bool


# ---------------------------------------------------------------------------
# typed first-order matching

def _match_typ(pt: Optional[Typ], tt: Optional[Typ], tysubst: dict[str, Typ]) -> bool:
    if pt is None or tt is None:
        return True
    match pt:
        case TVar(n):
            bound = tysubst.get(n)
            if bound is None:
                tysubst[n] = tt
                return True
            return bound == tt
        case TBase(_):
            return pt == tt
        case TList(e):
            return isinstance(tt, TList) and _match_typ(e, tt.elem, tysubst)
        case TArrow(d, c):
            return (isinstance(tt, TArrow) and _match_typ(d, tt.dom, tysubst)
                    and _match_typ(c, tt.cod, tysubst))
    return False


def _typ_of_safe(t: Term, benv: list[Typ]) -> Optional[Typ]:
    try:
        return typ_of(t, benv)
    except (TermError, IndexError):
        return None


def match_in(pattern: Term, t: Term, benv: list[Typ],
             inst: dict[str, Term], tysubst: dict[str, Typ]) -> bool:
    match pattern, t:
        case Var(n, pt), _:
            prev = inst.get(n)
            if prev is not None:
                return alpha_eq(prev, t)
            if not _match_typ(pt, _typ_of_safe(t, benv), tysubst):
                return False
            inst[n] = t
            return True
        case Const(n1, pt), Const(n2, tt):
            return n1 == n2 and _match_typ(pt, tt, tysubst)
        case Bound(i), Bound(j):
            return i == j
        case Abs(_, pt, pb), Abs(_, tt, tb):
            if not _match_typ(pt, tt, tysubst):
                return False
            return match_in(pb, tb, [tt] + benv, inst, tysubst)
        case App(pf, pa), App(tf, ta):
            return (match_in(pf, tf, benv, inst, tysubst)
                    and match_in(pa, ta, benv, inst, tysubst))
        case _:
            return False


def match(pattern: Term, t: Term) -> Optional[dict[str, Term]]:
    """First-order typed matching; all variables of the pattern are
    schematic. Returns the instantiation, or None."""
    inst: dict[str, Term] = {}
    if match_in(pattern, t, [], inst, {}):
        return inst
    return None


def instantiate(t: Term, inst: dict[str, Term], tysubst: Optional[dict[str, Typ]] = None) -> Term:
    out = subst_vars(t, inst)
    if tysubst:
        out = _apply_tysubst(out, tysubst)
    return out


def _subst_typ(ty: Optional[Typ], tysubst: dict[str, Typ]) -> Optional[Typ]:
    if ty is None:
        return None
    match ty:
        case TVar(n):
            return tysubst.get(n, ty)
        case TList(e):
            return TList(_subst_typ(e, tysubst))
        case TArrow(d, c):
            return TArrow(_subst_typ(d, tysubst), _subst_typ(c, tysubst))
        case _:
            return ty


def _apply_tysubst(t: Term, tysubst: dict[str, Typ]) -> Term:
    match t:
        case Const(n, ty):
            return Const(n, _subst_typ(ty, tysubst))
        case Var(n, ty):
            return Var(n, _subst_typ(ty, tysubst))
        case App(f, a):
            return App(_apply_tysubst(f, tysubst), _apply_tysubst(a, tysubst))
        case Abs(n, ty, b):
            return Abs(n, _subst_typ(ty, tysubst), _apply_tysubst(b, tysubst))
        case _:
            return t


# ---------------------------------------------------------------------------
# builtins (deep-embedded functions evaluated by the engine)

Builtin = Callable[[list[Term]], Optional[Term]]
BUILTINS: dict[str, Builtin] = {}


def builtin(name: str):
    def register(fn: Builtin) -> Builtin:
        BUILTINS[name] = fn
        return fn
    return register


def _lit2(args):
    if len(args) < 2:
        return None
    a, b = num_value(args[0]), num_value(args[1])
    return (a, b) if a is not None and b is not None else None


@builtin("plus")
def _bi_plus(args):
    lits = _lit2(args)
    return mk_num(lits[0] + lits[1]) if lits else None


@builtin("minus")
def _bi_minus(args):
    lits = _lit2(args)
    return mk_num(lits[0] - lits[1]) if lits else None


@builtin("times")
def _bi_times(args):
    lits = _lit2(args)
    return mk_num(lits[0] * lits[1]) if lits else None


@builtin("divide")
def _bi_divide(args):
    lits = _lit2(args)
    if lits is None:
        return None
    if lits[1] == 0:
        raise EvalError("division by zero")
    return mk_num(lits[0] / lits[1])


@builtin("power")
def _bi_power(args):
    lits = _lit2(args)
    if lits is None:
        return None
    base, expo = lits
    if expo.denominator != 1:
        return None
    e = int(expo)
    if e < 0 and base == 0:
        raise EvalError("division by zero")
    return mk_num(base ** e)


@builtin("uminus")
def _bi_uminus(args):
    v = num_value(args[0]) if args else None
    return mk_num(-v) if v is not None else None


@builtin("less")
def _bi_less(args):
    lits = _lit2(args)
    if lits is None:
        return None
    return TRUE if lits[0] < lits[1] else FALSE


@builtin("less_eq")
def _bi_less_eq(args):
    lits = _lit2(args)
    if lits is None:
        return None
    return TRUE if lits[0] <= lits[1] else FALSE


@builtin("equal")
def _bi_equal(args):
    if len(args) != 2:
        return None
    a, b = args
    va, vb = num_value(a), num_value(b)
    if va is not None and vb is not None:
        return TRUE if va == vb else FALSE
    if alpha_eq(a, b):
        return TRUE
    return None


@builtin("not")
def _bi_not(args):
    if len(args) != 1:
        return None
    if alpha_eq(args[0], TRUE):
        return FALSE
    if alpha_eq(args[0], FALSE):
        return TRUE
    return None


@builtin("lastI")
def _bi_lastI(args):
    items = list_items(args[0]) if args else None
    return items[-1] if items else None


@builtin("length")
def _bi_length(args):
    items = list_items(args[0]) if args else None
    return mk_num(len(items)) if items is not None else None


@builtin("append")
def _bi_append(args):
    if len(args) != 2:
        return None
    xs, ys = list_items(args[0]), list_items(args[1])
    if xs is None or ys is None:
        return None
    out = args[1]
    # reuse the cons cells of ys, rebuilding only the xs spine
    head, _ = app_spine(args[0])
    elem_cons = head if isinstance(head, Const) and head.name == "cons" else Const("cons", None)
    for x in reversed(xs):
        out = mk_app(elem_cons, x, out)
    return out


def _eq_sides(t: Term) -> Optional[tuple[Term, Term]]:
    head, args = app_spine(t)
    if isinstance(head, Const) and head.name == "eq" and len(args) == 2:
        return args[0], args[1]
    return None


@builtin("lhs")
def _bi_lhs(args):
    sides = _eq_sides(args[0]) if args else None
    return sides[0] if sides else None


@builtin("rhs")
def _bi_rhs(args):
    sides = _eq_sides(args[0]) if args else None
    return sides[1] if sides else None


@builtin("occurs_in")
def _bi_occurs_in(args):
    if len(args) != 2 or not isinstance(args[0], Var):
        return None
    return TRUE if args[0].name in free_vars(args[1]) else FALSE


@builtin("is_polynomial_in")
def _bi_is_polynomial_in(args):
    if len(args) != 2 or not isinstance(args[1], Var):
        return None
    p = poly.from_term(args[0])
    return TRUE if p is not None else FALSE


@builtin("is_integrable_on")
def _bi_is_integrable_on(args):
    # desk-scale stub: polynomial loads are integrable on any interval
    if len(args) != 2:
        return None
    p = poly.from_term(args[0])
    return TRUE if p is not None else FALSE


def _eq_as_poly(t: Term) -> Optional[poly.Poly]:
    sides = _eq_sides(t)
    if sides is not None:
        pl, pr = poly.from_term(sides[0]), poly.from_term(sides[1])
        if pl is None or pr is None:
            return None
        return poly.add(pl, poly.neg(pr))
    return poly.from_term(t)


@builtin("is_linear_in")
def _bi_is_linear_in(args):
    if len(args) != 2 or not isinstance(args[1], Var):
        return None
    p = _eq_as_poly(args[0])
    if p is None:
        return FALSE
    return TRUE if poly.degree_in(p, args[1].name) == 1 else FALSE


@builtin("is_quadratic_in")
def _bi_is_quadratic_in(args):
    if len(args) != 2 or not isinstance(args[1], Var):
        return None
    p = _eq_as_poly(args[0])
    if p is None:
        return FALSE
    return TRUE if poly.degree_in(p, args[1].name) == 2 else FALSE


@builtin("is_fraction_free")
def _bi_is_fraction_free(args):
    if len(args) != 1:
        return None

    def has_div(t: Term) -> bool:
        match t:
            case Const("divide", _):
                return True
            case App(f, a):
                return has_div(f) or has_div(a)
            case Abs(_, _, b):
                return has_div(b)
            case _:
                return False
    return FALSE if has_div(args[0]) else TRUE


def _ratpoly_term(op: str):
    """Polynomial normal form of the whole matched subterm; None once
    the term is already in normal form (the fixpoint)."""
    op_const = Const(op, TArrow(TBase("real"), TArrow(TBase("real"), TBase("real")))) \
        if op != "uminus" else Const(op, TArrow(TBase("real"), TBase("real")))

    def run(args):
        t = mk_app(op_const, *args)
        p = poly.from_term(t)
        if p is None:
            return None
        normal = poly.to_term(p, atoms=poly.atom_map(t))
        return None if alpha_eq(normal, t) else normal
    return run


for _op in ("plus", "minus", "times", "power", "uminus"):
    BUILTINS[f"ratpoly_{_op}"] = _ratpoly_term(_op)


@builtin("integrate_in")
def _bi_integrate_in(args):
    if len(args) != 2 or not isinstance(args[1], Var):
        return None
    p = poly.from_term(args[0])
    if p is None:
        return None
    atoms = poly.atom_map(args[0])
    atoms.setdefault(args[1].name, args[1])
    return poly.to_term(poly.integrate(p, args[1].name), main=args[1].name,
                        atoms=atoms)


@builtin("ratpoly_eq")
def _bi_ratpoly_eq(args):
    # normalise the right side of an equation as a polynomial in the
    # instantiated bound variable; None when already in normal form
    if len(args) != 3 or not isinstance(args[2], Var):
        return None
    lhs_t, rhs_t, bdv = args
    p = poly.from_term(rhs_t)
    if p is None:
        return None
    normal = poly.to_term(p, main=bdv.name, atoms=poly.atom_map(rhs_t))
    if alpha_eq(normal, rhs_t):
        return None
    eq_c = Const("eq", TArrow(TBase("real"), TArrow(TBase("real"), TBase("bool"))))
    return mk_app(eq_c, lhs_t, normal)


@builtin("condition_equations")
def _bi_condition_equations(args):
    """Pair each boundary condition `F a = val` with the function line
    `F v = body` and emit `val = body[v := a]`."""
    if len(args) != 2:
        return None
    rbs, funs = list_items(args[0]), list_items(args[1])
    if rbs is None or funs is None:
        return None
    out = []
    for rb in rbs:
        sides = _eq_sides(rb)
        if sides is None or not isinstance(sides[0], App):
            return None
        fexpr, point = sides[0].fun, sides[0].arg
        matched = None
        for fun in funs:
            fsides = _eq_sides(fun)
            if fsides is None or not isinstance(fsides[0], App):
                continue
            f2, v2 = fsides[0].fun, fsides[0].arg
            if alpha_eq(f2, fexpr) and isinstance(v2, Var):
                matched = (v2, fsides[1])
                break
        if matched is None:
            return None
        v2, body = matched
        out.append(mk_app(Const("eq", None), sides[1],
                          subst_vars(body, {v2.name: point})))
    head, _ = app_spine(args[0])
    elem = head.typ if isinstance(head, Const) else None
    t: Term = Const("nil", None)
    for e in reversed(out):
        t = mk_app(Const("cons", None), e, t)
    return t


def _poly_subst(p: poly.Poly, name: str, value: poly.Poly) -> poly.Poly:
    out: poly.Poly = {}
    for m, c in p.items():
        rest = tuple((v, e) for v, e in m if v != name)
        deg = next((e for v, e in m if v == name), 0)
        piece = poly.mul({rest: c}, poly.power(value, deg)) if deg else {rest: c}
        out = poly.add(out, piece)
    return out


@builtin("solve_system")
def _bi_solve_system(args):
    """Back-substitution solver for systems that are effectively
    triangular in the unknowns; coefficients may be symbolic."""
    if len(args) != 2:
        return None
    eqs, unknowns = list_items(args[0]), list_items(args[1])
    if eqs is None or unknowns is None:
        return None
    names = []
    for u in unknowns:
        if isinstance(u, (Var, Const)) and num_value(u) is None:
            names.append(u.name)
        else:
            return None
    polys = []
    for e in eqs:
        p = _eq_as_poly(e)
        if p is None:
            return None
        polys.append(p)
    solution: dict[str, poly.Poly] = {}
    unsolved = list(names)
    pending = list(polys)
    for _ in range(len(names) + 1):
        if not unsolved:
            break
        progressed = False
        for i, p in enumerate(pending):
            present = [u for u in unsolved if poly.degree_in(p, u) > 0]
            if len(present) != 1 or poly.degree_in(p, present[0]) != 1:
                continue
            u = present[0]
            coeff: poly.Poly = {}
            rest: poly.Poly = {}
            for m, c in p.items():
                if any(v == u for v, _ in m):
                    coeff[tuple((v, e) for v, e in m if v != u)] = c
                else:
                    rest[m] = c
            if set(coeff) != {poly.ONE}:  # need a constant coefficient
                continue
            value = poly.scale(poly.neg(rest), Fraction(1) / coeff[poly.ONE])
            solution[u] = value
            unsolved.remove(u)
            pending.pop(i)
            pending = [_poly_subst(q, u, value) for q in pending]
            solution = {k: _poly_subst(v, u, value) for k, v in solution.items()}
            progressed = True
            break
        if not progressed:
            return None
    if unsolved:
        return None
    atoms = {}
    for e in eqs:
        poly.atom_map(e, atoms)
    out: Term = Const("nil", None)
    for u, uterm in zip(reversed(unknowns), reversed(names)):
        value = poly.to_term(solution[uterm], atoms=atoms)
        out = mk_app(Const("cons", None), mk_app(Const("eq", None), u, value), out)
    return out


@builtin("solution_holds")
def _bi_solution_holds(args):
    if len(args) != 2:
        return None
    eq_sides = _eq_sides(args[0])
    sol_sides = _eq_sides(args[1])
    if eq_sides is None or sol_sides is None or not isinstance(sol_sides[0], Var):
        return None
    env = {sol_sides[0].name: sol_sides[1]}
    left = poly.from_term(subst_vars(eq_sides[0], env))
    right = poly.from_term(subst_vars(eq_sides[1], env))
    if left is None or right is None:
        return None
    return TRUE if left == right else FALSE


def eval_builtin(builtin_id: str, args: list[Term]) -> Optional[Term]:
    """Apply a named builtin to fully typed arguments; None when the
    arguments are not evaluable literals/shapes."""
    fn = BUILTINS.get(builtin_id)
    if fn is None:
        raise EvalError(f"unknown builtin {builtin_id!r}")
    return fn(list(args))


# ---------------------------------------------------------------------------
# rewriting

def _binder_typs_along(t: Term, pos: Path) -> list[Typ]:
    benv: list[Typ] = []
    for i in pos:
        if isinstance(t, Abs):
            benv = [t.binder_typ] + benv
            t = t.body
        elif isinstance(t, App):
            t = t.fun if i == 0 else t.arg
    return benv


def _decide_conditions(rule: Rule, inst: dict[str, Term], tysubst: dict[str, Typ],
                       ctx: Context, cond_rs: Optional["Ruleset"],
                       assume_undecided: bool) -> bool:
    """True when all instantiated conditions hold. Raises
    ConditionUndecided unless assumption generation is on."""
    for cond in rule.conditions:
        c = instantiate(cond, inst, tysubst)
        try:
            c = infer_types(c, ctx)  # rule terms keep schematic tyvars
        except TermError:
            pass
        if ctx is not None and any(alpha_eq(c, a) for a in ctx.assumptions):
            continue
        if cond_rs is not None:
            c_nf = normalize(cond_rs, c, ctx).final
        else:
            c_nf = c
        if alpha_eq(c_nf, TRUE):
            continue
        if alpha_eq(c_nf, FALSE):
            return False
        if assume_undecided:
            ctx.assume(c)
            continue
        raise ConditionUndecided(c)
    return True


def rewrite_at(rule: Rule, pos: Path, t: Term, ctx: Optional[Context] = None,
               cond_rs: Optional[Ruleset] = None,
               assume_undecided: bool = False) -> Optional[RewriteStep]:
    """Apply one rule at one position; None when the lhs does not match
    or a condition is False."""
    ctx = ctx if ctx is not None else Context()
    sub = subterm_at(t, pos)
    inst: dict[str, Term] = {}
    tysubst: dict[str, Typ] = {}
    benv = _binder_typs_along(t, pos)
    if not match_in(rule.lhs, sub, benv, inst, tysubst):
        return None
    if rule.open_vars - set(inst):
        return None  # uninstantiated ruleset variables block the rule
    if not _decide_conditions(rule, inst, tysubst, ctx, cond_rs, assume_undecided):
        return None
    if rule.kind == "evaluator":
        _, spine_args = app_spine(sub)
        extra = [instantiate(e, inst, tysubst) for e in rule.extra_args]
        replacement = eval_builtin(rule.builtin_id, spine_args + extra)
        if replacement is None:
            return None
    else:
        replacement = instantiate(rule.rhs, inst, tysubst)
    after = replace_at(t, pos, replacement)
    if alpha_eq(after, t):
        return None  # no-op rewrites would loop forever
    try:
        after = infer_types(after, ctx)  # instantiated rule rhs may carry tyvars
    except TermError:
        pass
    record = dict(rule.applied_inst)
    record.update(inst)
    return RewriteStep(rule.name, pos, record, t, after)


def _positions(t: Term, strategy: str) -> Iterator[Path]:
    if strategy == "outermost":
        return positions_outermost(t)
    return positions_innermost(t)


def _first_step(rs: Ruleset, t: Term, ctx: Context) -> Optional[RewriteStep]:
    for rule in rs.rules:
        for pos in _positions(t, rs.strategy):
            try:
                step = rewrite_at(rule, pos, t, ctx, rs.cond_ruleset)
            except (ConditionUndecided, EvalError):
                continue
            if step is not None:
                return step
    return None


def normalize(rs: Ruleset, t: Term, ctx: Optional[Context] = None) -> Trace:
    """Rewrite to normal form or until the step bound is hit."""
    ctx = ctx if ctx is not None else Context()
    initial = t
    steps: list[RewriteStep] = []
    while len(steps) < rs.step_bound:
        step = _first_step(rs, t, ctx)
        if step is None:
            return Trace(initial, tuple(steps), t, True)
        steps.append(step)
        t = step.after
    return Trace(initial, tuple(steps), t, False)


def replay_step(rule: Rule, step: RewriteStep, ctx: Optional[Context] = None,
                cond_rs: Optional[Ruleset] = None) -> bool:
    """Re-apply the step's rule at its position and compare results."""
    try:
        redo = rewrite_at(rule, step.position, step.before, ctx, cond_rs,
                          assume_undecided=True)
    except RewriteError:
        return False
    return redo is not None and alpha_eq(redo.after, step.after)


# ---------------------------------------------------------------------------
# group checking: critical-pair and divergence smoke tests

@dataclass(frozen=True)
class CriticalPair:
    rule_outer: str
    rule_inner: str
    position: Path
    peak: Term
    left: Term
    right: Term
    joinable: bool


@dataclass
class GroupReport:
    ruleset: str
    pairs: list[CriticalPair] = field(default_factory=list)
    conditional_skipped: int = 0
    divergent: list[Term] = field(default_factory=list)
    sampled: int = 0

    @property
    def non_joinable(self) -> list[CriticalPair]:
        return [p for p in self.pairs if not p.joinable]

    @property
    def clean(self) -> bool:
        return not self.non_joinable and not self.divergent


def _rename_vars(t: Term, suffix: str) -> Term:
    return subst_vars(t, {n: Var(n + suffix, None) for n in free_vars(t)})


def _rename_rule(rule: Rule, suffix: str) -> Rule:
    names = free_vars(rule.lhs) | rule.needed_vars()
    env = {n: Var(n + suffix, None) for n in names}
    return rule.substituted(env)


def _unify_terms(a: Term, b: Term, subst: dict[str, Term]) -> bool:
    a = _walk(a, subst)
    b = _walk(b, subst)
    if isinstance(a, Var):
        if isinstance(b, Var) and b.name == a.name:
            return True
        if a.name in free_vars(b):
            return False
        subst[a.name] = b
        return True
    if isinstance(b, Var):
        return _unify_terms(b, a, subst)
    match a, b:
        case Const(n1, _), Const(n2, _):
            return n1 == n2
        case Bound(i), Bound(j):
            return i == j
        case App(f1, a1), App(f2, a2):
            return _unify_terms(f1, f2, subst) and _unify_terms(a1, a2, subst)
        case Abs(_, _, b1), Abs(_, _, b2):
            return _unify_terms(b1, b2, subst)
        case _:
            return False


def _walk(t: Term, subst: dict[str, Term]) -> Term:
    while isinstance(t, Var) and t.name in subst:
        t = subst[t.name]
    return t


def _resolve(t: Term, subst: dict[str, Term]) -> Term:
    match t:
        case Var(n, _):
            if n in subst:
                return _resolve(subst[n], subst)
            return t
        case App(f, a):
            return App(_resolve(f, subst), _resolve(a, subst))
        case Abs(n, ty, b):
            return Abs(n, ty, _resolve(b, subst))
        case _:
            return t


def _conditions_hold(rule: Rule, subst: dict[str, Term], rs: Ruleset) -> Optional[bool]:
    """True/False when decidable on the unified instance, None if undecided."""
    for cond in rule.conditions:
        c = _resolve(cond, subst)
        nf = normalize(rs.cond_ruleset, c).final if rs.cond_ruleset else c
        if alpha_eq(nf, FALSE):
            return False
        if not alpha_eq(nf, TRUE):
            return None
    return True


def check_group(rs: Ruleset, sample_budget: int = 200) -> GroupReport:
    """Advisory confluence/termination smoke test, not a proof.

    (a) overlays rule left-hand sides to form critical peaks and tests
        joinability by normalisation within the step bound;
    (b) normalises generated terms over the group's signature and
        reports any that hit the step bound.
    """
    report = GroupReport(rs.name)
    theorem_rules = [r for r in rs.rules if r.kind == "theorem"]
    for outer_raw in theorem_rules:
        outer = _rename_rule(outer_raw, "_o")
        lhs_o, rhs_o = outer.lhs, outer.rhs
        for inner_raw in theorem_rules:
            inner = _rename_rule(inner_raw, "_i")
            lhs_i, rhs_i = inner.lhs, inner.rhs
            for pos in positions_innermost(lhs_o):
                sub = subterm_at(lhs_o, pos)
                if isinstance(sub, Var):
                    continue
                if outer.name == inner.name and pos == ():
                    continue
                subst: dict[str, Term] = {}
                if not _unify_terms(sub, lhs_i, subst):
                    continue
                ok_o = _conditions_hold(outer, subst, rs)
                ok_i = _conditions_hold(inner, subst, rs)
                if ok_o is False or ok_i is False:
                    continue
                if ok_o is None or ok_i is None:
                    report.conditional_skipped += 1
                    continue
                peak = _resolve(lhs_o, subst)
                left = _resolve(replace_at(lhs_o, pos, rhs_i), subst)
                right = _resolve(rhs_o, subst)
                if alpha_eq(left, right):
                    continue
                tl = normalize(rs, left)
                tr = normalize(rs, right)
                joinable = tl.complete and tr.complete and alpha_eq(tl.final, tr.final)
                report.pairs.append(CriticalPair(
                    outer.name, inner.name, pos, peak, left, right, joinable))
    for t in _sample_terms(rs, sample_budget):
        report.sampled += 1
        if not normalize(rs, t).complete:
            report.divergent.append(t)
    return report


def _sample_terms(rs: Ruleset, budget: int) -> Iterator[Term]:
    """Enumerate small ground-ish terms over the group's signature."""
    heads: dict[str, int] = {}
    consts: list[Term] = []
    seen = set()
    for rule in rs.rules:
        for t in (rule.lhs, rule.rhs):
            if t is None:
                continue
            for pos in positions_innermost(t):
                sub = subterm_at(t, pos)
                head, args = app_spine(sub)
                if isinstance(head, Const):
                    if args:
                        heads[head.name] = max(heads.get(head.name, 0), len(args))
                    elif head.name not in seen:
                        seen.add(head.name)
                        consts.append(head)
    atoms: list[Term] = consts[:3] + [Var("x", TBase("real")), Var("y", TBase("real")),
                                      mk_num(2), mk_num(3)]
    layers = [list(atoms)]
    count = 0
    for t in atoms:
        if count >= budget:
            return
        count += 1
        yield t
    for _ in range(3):
        new_layer = []
        for name, arity in sorted(heads.items()):
            pool = layers[-1]
            for a in pool[:6]:
                if arity == 1:
                    new_layer.append(mk_app(Const(name, None), a))
                else:
                    for b in atoms[:4]:
                        new_layer.append(mk_app(Const(name, None), a, b))
        for t in new_layer:
            if count >= budget:
                return
            count += 1
            yield t
        if not new_layer:
            return
        layers.append(new_layer)
