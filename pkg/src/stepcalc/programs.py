"""The tactic-program language: parsing, static checks and compilation.

A program is a Term over a fixed combinator vocabulary (let chains,
tactic constructors, `@@` chaining, pure expressions). Tactic and
reference names are packed into constant identifiers so the term stays
simply typed; the printer restores the surface syntax.

The language is first order: let and chaining only, no recursion.
Termination of a run is the interpreter's step-bound concern.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .terms import (Abs, App, Bound, Const, Context, ParseFailure, Term,
                    TArrow, TBase, TList, TVar, Typ, Var, _Infer, _Parser,
                    _PTerm, _papp, _pconst, alpha_eq, app_spine, arrow,
                    free_vars, lift, pretty, tokenize, BOOL, REAL)


class ProgramError(Exception):
    pass


class UnresolvedReference(ProgramError):
    pass


SORT_MARKERS = {"REAL": REAL, "BOOL_LIST": TList(BOOL), "REAL_LIST": TList(REAL)}
_MARKER_OF_TYP = {v: k for k, v in SORT_MARKERS.items()}

TACTIC_HEADS = ("Take", "Substitute", "Rewrite", "Rewrite_Set",
                "Rewrite_Set_Inst", "Calculate", "SubProblem")


@dataclass(frozen=True)
class RefTriple:
    theory: Optional[str] = None
    problem: Optional[tuple[str, ...]] = None
    method: Optional[tuple[str, ...]] = None  # None encodes no_met

    def __str__(self):
        p = "[" + ", ".join(self.problem or ()) + "]"
        m = "[" + ", ".join(self.method) + "]" if self.method else "[no_met]"
        return f"({self.theory}, {p}, {m})"


@dataclass
class Instruction:
    kind: str  # eval | take | rewrite | rewrite_set | rewrite_set_inst |
               # substitute | calculate | subproblem | result
    bind: Optional[str] = None
    push: bool = True  # False for later segments of a chain (rebind top)
    expr: Optional[Term] = None  # input expression (or pure expression)
    name: str = ""  # theorem / ruleset / builtin name
    inst_expr: Optional[Term] = None
    flag: bool = False  # assumption generation on/off
    ref: Optional[RefTriple] = None
    arg_exprs: list[Term] = field(default_factory=list)
    markers: list[str] = field(default_factory=list)
    path: tuple[int, ...] = ()

    @property
    def is_tactic(self) -> bool:
        return self.kind not in ("eval", "result")


@dataclass(frozen=True)
class TacticSite:
    position: tuple[int, ...]
    tactic_kind: str
    environment: dict[str, Term]


@dataclass
class Program:
    name: str
    params: list[tuple[str, Typ]]
    body: Term
    instructions: list[Instruction]

    def sites(self) -> list[TacticSite]:
        out = []
        env: dict[str, Term] = {}
        for ins in self.instructions:
            if ins.is_tactic:
                out.append(TacticSite(ins.path, ins.kind, dict(env)))
            if ins.bind is not None and ins.expr is not None:
                env[ins.bind] = ins.expr
        return out


def tactic_sites(p: Program) -> list[TacticSite]:
    """All tactic sites in evaluation order."""
    return p.sites()


# ---------------------------------------------------------------------------
# parsing

class _ProgramParser(_Parser):
    def __init__(self, toks, store):
        super().__init__(toks)
        self.store = store
        self.signatures: dict[str, Typ] = {}
        self._fresh = 0

    def fresh_tyvar(self) -> TVar:
        self._fresh += 1
        return TVar(f"p{self._fresh}")

    def parse_program_header(self):
        kw = self.next()
        if kw.text != "Script":
            raise ParseFailure("program must start with 'Script'", kw.pos)
        name = self.next()
        if name.kind != "ident":
            raise ParseFailure("expected program name", name.pos)
        params = []
        while self.at("("):
            self.next()
            pn = self.next()
            if pn.kind != "ident":
                raise ParseFailure("expected parameter name", pn.pos)
            self.expect("::")
            pt = self.parse_typ()
            self.expect(")")
            params.append((pn.text, pt))
        self.expect("=")
        return name.text, params

    def parse_body(self) -> _PTerm:
        if self.at("("):
            save = self.i
            self.next()
            if self.at("let"):
                body = self.parse_let()
                self.expect(")")
                return body
            self.i = save
        if self.at("let"):
            return self.parse_let()
        return self.parse_term(0)

    def parse_let(self) -> _PTerm:
        tok = self.expect("let")
        binds = [self.parse_bind()]
        while self.at(";"):
            self.next()
            binds.append(self.parse_bind())
        self.expect("in")
        body = self.parse_term(0)
        for name, typ, rhs in reversed(binds):
            abs_t = _PTerm("abs", pos=tok.pos, name=name, typ=typ, args=[body])
            body = _papp(_pconst("let_bind", tok.pos), rhs, abs_t)
        return body

    def parse_bind(self):
        annotated = False
        if self.at("("):
            self.next()
            annotated = True
        name = self.next()
        if name.kind != "ident":
            raise ParseFailure("expected binding name", name.pos)
        typ = None
        if annotated:
            self.expect("::")
            typ = self.parse_typ()
            self.expect(")")
        self.expect("=")
        rhs = self.parse_term(0)
        return name.text, typ, rhs

    # tactic keywords are handled at atom level so they can appear
    # anywhere an atom can (parenthesised, chained, applied)
    def parse_atom(self) -> _PTerm:
        tok = self.peek()
        if tok.kind == "ident" and tok.text in ("Rewrite", "Rewrite_Set", "Calculate"):
            self.next()
            name = self.next()
            if name.kind != "ident":
                raise ParseFailure(f"expected a name after {tok.text}", name.pos)
            packed = f"{tok.text}!{name.text}"
            if tok.text == "Calculate":
                self.signatures[packed] = arrow(TVar("f"), TVar("f"))
            else:
                self.signatures[packed] = arrow(BOOL, TVar("f"), TVar("f"))
            return _pconst(packed, tok.pos)
        if tok.kind == "ident" and tok.text == "Rewrite_Set_Inst":
            self.next()
            inst = super().parse_atom()
            name = self.next()
            if name.kind != "ident":
                raise ParseFailure("expected a ruleset name", name.pos)
            packed = f"Rewrite_Set_Inst!{name.text}"
            self.signatures[packed] = arrow(TList(TList(REAL)), BOOL,
                                            TVar("f"), TVar("f"))
            return _papp(_pconst(packed, tok.pos), inst)
        if tok.kind == "ident" and tok.text == "SubProblem":
            return self.parse_subproblem()
        if tok.kind == "ident" and tok.text == "Take":
            self.next()
            self.signatures.setdefault("Take", TArrow(TVar("a"), TVar("a")))
            return _pconst("Take", tok.pos)
        if tok.kind == "ident" and tok.text == "Substitute":
            self.next()
            self.signatures.setdefault(
                "Substitute", arrow(TList(BOOL), TVar("f"), TVar("f")))
            return _pconst("Substitute", tok.pos)
        return super().parse_atom()

    def parse_subproblem(self) -> _PTerm:
        tok = self.expect("SubProblem")
        self.expect("(")
        thy = self.next()
        if thy.kind != "ident":
            raise ParseFailure("expected theory name", thy.pos)
        self.expect(",")
        ppath = self.parse_path_literal()
        self.expect(",")
        mpath = self.parse_path_literal()
        self.expect(")")
        self.expect("[")
        markers = []
        args = []
        if not self.at("]"):
            while True:
                mk = self.next()
                if mk.kind != "ident" or mk.text not in SORT_MARKERS:
                    raise ParseFailure(
                        f"expected sort marker {sorted(SORT_MARKERS)}", mk.pos)
                markers.append(mk.text)
                args.append(self.parse_term(0))
                if not self.at(","):
                    break
                self.next()
        self.expect("]")
        mp = ".".join(mpath) if mpath != ["no_met"] else "no_met"
        packed = f"SubProblem!{thy.text}!{'.'.join(ppath)}!{mp}!{','.join(markers)}"
        sorts = [SORT_MARKERS[m] for m in markers]
        self.signatures[packed] = arrow(*sorts, self.fresh_tyvar()) if sorts \
            else self.fresh_tyvar()
        out = _pconst(packed, tok.pos)
        for a in args:
            out = _papp(out, a)
        return out

    def parse_path_literal(self) -> list[str]:
        self.expect("[")
        parts = []
        while True:
            t = self.next()
            if t.kind != "ident":
                raise ParseFailure("expected path segment", t.pos)
            parts.append(t.text)
            if not self.at(","):
                break
            self.next()
        self.expect("]")
        return parts


def unpack_subproblem(name: str) -> tuple[RefTriple, list[str]]:
    _, thy, pp, mp, mks = name.split("!")
    ref = RefTriple(thy, tuple(pp.split(".")),
                    None if mp == "no_met" else tuple(mp.split(".")))
    return ref, mks.split(",") if mks else []


LET_SIG = TArrow(TVar("a"), TArrow(TArrow(TVar("a"), TVar("b")), TVar("b")))


def parse_program(text: str, store=None, ctx: Optional[Context] = None) -> Program:
    """Parse a tactic program against the knowledge store. All rule,
    ruleset and sub-problem references must resolve."""
    p = _ProgramParser(tokenize(text), store)
    name, params = p.parse_program_header()
    pre = p.parse_body()
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseFailure(f"unexpected {tok.text!r}", tok.pos)

    ctx = ctx.copy() if ctx is not None else Context()
    ctx.constants.update(p.signatures)
    ctx.constants["let_bind"] = LET_SIG
    # instantiation marker for Rewrite_Set_Inst pairs; rule files bind the
    # variable of the same name
    ctx.constants.setdefault("bdv", REAL)
    for pn, pt in params:
        ctx.variables[pn] = pt
    inf = _Infer(ctx)
    body, _ = inf.elab(pre, [])
    body = inf.finish(body)

    stray = free_vars(body) - {pn for pn, _ in params}
    if stray:
        raise ProgramError(f"program {name}: unbound names {sorted(stray)}")

    prog = Program(name, params, body, [])
    prog.instructions = _compile(body, store, name)
    return prog


def _tactic_heads_in(t: Term) -> bool:
    match t:
        case Const(name, _):
            base = name.split("!")[0]
            return base in TACTIC_HEADS or base == "chain"
        case App(f, a):
            return _tactic_heads_in(f) or _tactic_heads_in(a)
        case Abs(_, _, b):
            return _tactic_heads_in(b)
        case _:
            return False


def _compile(body: Term, store, prog_name: str) -> list[Instruction]:
    instrs: list[Instruction] = []

    def check_ref(ref: RefTriple, n_args: int, pos):
        if store is None:
            return
        try:
            _, problem, method = store.lookup(ref)
        except Exception as e:
            raise UnresolvedReference(f"program {prog_name}: {e}") from None
        if method is not None and n_args > len(method.params()):
            raise ProgramError(
                f"program {prog_name}: {n_args} arguments for method "
                f"{'/'.join(ref.method)} with {len(method.params())} guard slots")

    def emit_binding(bind_name: str, rhs: Term, path: tuple[int, ...], push: bool):
        head, args = app_spine(rhs)
        if isinstance(head, Const):
            base = head.name.split("!")[0]
            if base == "chain" and len(args) == 3:
                # (A @@ B) t evaluates A on t, then B on the result
                partial = App(App(head, args[0]), args[1])
                emit_chain(bind_name, partial, args[2], path, push)
                return
            if base in TACTIC_HEADS:
                emit_tactic(bind_name, head, args, path, push)
                return
        if _tactic_heads_in(rhs):
            raise ProgramError(
                f"program {prog_name}: tactic inside a pure expression at {bind_name}")
        instrs.append(Instruction("eval", bind=bind_name, push=push, expr=rhs,
                                  path=path))

    def emit_chain(bind_name: str, partial: Term, operand: Term,
                   path: tuple[int, ...], push: bool):
        segments = _flatten_partials(partial)
        for i, seg in enumerate(segments):
            # the first segment pushes a binding; later segments rebind the
            # top, so their stored expressions shift one binder deeper
            seg_t = seg if i == 0 else lift(seg, 1)
            head, args = app_spine(seg_t)
            base = head.name.split("!")[0] if isinstance(head, Const) else ""
            if base not in TACTIC_HEADS:
                raise ProgramError(f"program {prog_name}: cannot chain non-tactic")
            inp = operand if i == 0 else Bound(0)
            emit_tactic(bind_name, head, args + [inp], path + (i,),
                        push if i == 0 else False)

    def _flatten_partials(t: Term) -> list[Term]:
        head, args = app_spine(t)
        if isinstance(head, Const) and head.name == "chain" and len(args) == 2:
            return _flatten_partials(args[0]) + _flatten_partials(args[1])
        return [t]

    def emit_tactic(bind_name: str, head: Const, args: list[Term],
                    path: tuple[int, ...], push: bool):
        base = head.name.split("!")[0]
        ins = Instruction(base.lower(), bind=bind_name, push=push, path=path)
        if base == "Take":
            if len(args) != 1:
                raise ProgramError(f"Take expects one argument, got {len(args)}")
            ins.expr = args[0]
        elif base == "Substitute":
            if len(args) != 2:
                raise ProgramError("Substitute expects equations and a formula")
            ins.inst_expr, ins.expr = args[0], args[1]
        elif base in ("Rewrite", "Rewrite_Set"):
            if len(args) != 2:
                raise ProgramError(f"{base} expects a flag and a formula")
            ins.name = head.name.split("!")[1]
            ins.flag = _flag_value(args[0])
            ins.expr = args[1]
            _check_rule_ref(base, ins.name)
        elif base == "Rewrite_Set_Inst":
            if len(args) != 3:
                raise ProgramError("Rewrite_Set_Inst expects inst, flag, formula")
            ins.name = head.name.split("!")[1]
            ins.inst_expr = args[0]
            ins.flag = _flag_value(args[1])
            ins.expr = args[2]
            _check_rule_ref("Rewrite_Set", ins.name)
        elif base == "Calculate":
            if len(args) != 1:
                raise ProgramError("Calculate expects a formula")
            ins.name = head.name.split("!")[1]
            ins.expr = args[0]
        elif base == "SubProblem":
            ref, markers = unpack_subproblem(head.name)
            ins.ref = ref
            ins.markers = markers
            ins.arg_exprs = args
            check_ref(ref, len(args), path)
        instrs.append(ins)

    def _flag_value(t: Term) -> bool:
        if alpha_eq(t, Const("True", BOOL)):
            return True
        if alpha_eq(t, Const("False", BOOL)):
            return False
        raise ProgramError("tactic flag must be the literal True or False")

    def _check_rule_ref(kind: str, name: str):
        if store is None:
            return
        if kind == "Rewrite" and store.rule(name) is None:
            raise UnresolvedReference(f"program {prog_name}: unknown theorem {name!r}")
        if kind == "Rewrite_Set" and store.ruleset(name) is None:
            raise UnresolvedReference(f"program {prog_name}: unknown ruleset {name!r}")

    def walk(t: Term, path: tuple[int, ...]):
        head, args = app_spine(t)
        if (isinstance(head, Const) and head.name == "let_bind"
                and len(args) == 2 and isinstance(args[1], Abs)):
            rhs, absb = args[0], args[1]
            emit_binding(absb.binder_name, rhs, path + (0, 1), True)
            walk(absb.body, path + (1, 0))
            return
        if _tactic_heads_in(t):
            raise ProgramError(
                f"program {prog_name}: tactics may appear only as let bindings")
        instrs.append(Instruction("result", expr=t, push=False, path=path))

    walk(body, ())
    return instrs


# ---------------------------------------------------------------------------
# printing (restores the surface syntax; round-trips through parse_program)

def pretty_program(p: Program) -> str:
    params = " ".join(f"({n}::{t})" for n, t in p.params)
    lines = [f"Script {p.name} {params} ="]
    binds, result, benv = _collect_lets(p.body)
    if binds:
        rendered = [_render_bind(b, benv, i) for i, b in enumerate(binds)]
        lines.append("  (let " + ";\n       ".join(rendered))
        lines.append(f"   in {_render_expr(result, list(reversed(benv)))})")
    else:
        lines.append(f"  ({_render_expr(result, [])})")
    return "\n".join(lines)


def _collect_lets(body: Term):
    binds = []
    benv: list[str] = []
    t = body
    while True:
        head, args = app_spine(t)
        if (isinstance(head, Const) and head.name == "let_bind"
                and len(args) == 2 and isinstance(args[1], Abs)):
            binds.append((args[1].binder_name, args[1].binder_typ, args[0]))
            benv.append(args[1].binder_name)
            t = args[1].body
        else:
            return binds, t, benv


def _render_bind(b, benv, depth) -> str:
    name, typ, rhs = b
    scope = list(reversed(benv[:depth]))
    shown = f"({name}::{typ})" if typ is not None else name
    return f"{shown} = {_render_expr(rhs, scope)}"


def _render_expr(t: Term, benv: list[str]) -> str:
    head, args = app_spine(t)
    if isinstance(head, Const):
        base = head.name.split("!")[0]
        if base == "chain" and len(args) >= 2:
            a = _render_expr(args[0], benv)
            b = _render_expr(args[1], benv)
            s = f"({a}) @@ ({b})"
            if len(args) == 3:
                return f"(({a}) @@ ({b})) {_render_expr(args[2], benv)}"
            return s
        if base == "Take" and len(args) == 1:
            return f"Take ({_render_expr(args[0], benv)})"
        if base == "Substitute":
            out = f"Substitute ({_render_expr(args[0], benv)})"
            if len(args) == 2:
                out = f"({out}) {_render_expr(args[1], benv)}"
            return out
        if base in ("Rewrite", "Rewrite_Set"):
            nm = head.name.split("!")[1]
            out = f"{base} {nm} {'True' if _is_true(args[0]) else 'False'}" \
                if args else f"{base} {nm}"
            if len(args) == 2:
                out = f"({out}) {_render_expr(args[1], benv)}"
            return out
        if base == "Rewrite_Set_Inst":
            nm = head.name.split("!")[1]
            inst = _render_expr(args[0], benv) if args else ""
            out = f"Rewrite_Set_Inst {inst} {nm}"
            if len(args) >= 2:
                out += f" {'True' if _is_true(args[1]) else 'False'}"
            if len(args) == 3:
                out = f"({out}) {_render_expr(args[2], benv)}"
            return out
        if base == "Calculate":
            nm = head.name.split("!")[1]
            out = f"Calculate {nm}"
            if len(args) == 1:
                out = f"({out}) {_render_expr(args[0], benv)}"
            return out
        if base == "SubProblem":
            ref, markers = unpack_subproblem(head.name)
            rendered = ", ".join(f"{m} {_render_expr(a, benv)}"
                                 for m, a in zip(markers, args))
            return f"(SubProblem {ref} [{rendered}])"
    return _pp_with_benv(t, benv)


def _is_true(t: Term) -> bool:
    return isinstance(t, Const) and t.name == "True"


def _pp_with_benv(t: Term, benv: list[str]) -> str:
    # close the term over the let binders so the plain printer can run
    closed = t
    for i, n in enumerate(benv):
        closed = _subst_bound_var(closed, i, Var(n, None))
    return pretty(closed)


def _subst_bound_var(t: Term, index: int, v: Var, depth: int = 0) -> Term:
    match t:
        case Bound(i) if i == index + depth:
            return v
        case App(f, a):
            return App(_subst_bound_var(f, index, v, depth),
                       _subst_bound_var(a, index, v, depth))
        case Abs(n, ty, b):
            return Abs(n, ty, _subst_bound_var(b, index, v, depth + 1))
        case _:
            return t
