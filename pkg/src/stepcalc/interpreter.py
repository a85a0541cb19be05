"""Step the tactic program like a debugger: propose and apply next
steps, locate or derive user-input formulas, and keep both partners
able to change roles at any time.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from . import calctree, specify, tactics
from .calctree import (CalcState, Frame, Position, ReplayFailed, SpecNode,
                       StepNode, MODEL, REFERENCES, STEPS)
from .knowledge import (KnowledgeStore, Method, ModelItem, Problem,
                        methods_for, refine)
from .programs import Instruction, Program, RefTriple
from .rewrite import (ConditionUndecided, EvalError, Rule, Ruleset,
                      RewriteStep, eval_builtin, normalize, rewrite_at)
from .specify import Formalisation, Specification, check_preconditions
from .tactics import (AddFind, AddGiven, AddRelate, Calculate, CheckPostcond,
                      Derive, DerivationEvidence, Evidence, RefineProblem,
                      ResultEvidence, Rewrite, RewriteEvidence, RewriteSet,
                      RewriteSetInst, SpecifyMethod, SpecifyProblem,
                      SpecifyTheory, SubProblem, Substitute, SubstituteEvidence,
                      Tactic, Take, TakeEvidence, tactic_eq)
from .terms import (Abs, App, Bound, Const, Context, Term, TypeMismatch, Var,
                    alpha_eq, app_spine, free_vars, infer_types, lift,
                    list_items, positions_innermost, pretty, subst_vars,
                    subterm_at, typ_of, BOOL)


class CalcError(Exception):
    pass


class CalcFinished(CalcError):
    pass


class ProgramStuck(CalcError):
    def __init__(self, site: str):
        super().__init__(f"program stuck at {site}")
        self.site = site


class TacticNotApplicable(CalcError):
    pass


class Cancelled(CalcError):
    pass


LOOKAHEAD = 5  # tactic sites searched when locating user input

CLEANUP_RULESET = "norm_signs"


@dataclass(frozen=True)
class NextStep:
    tactic: Tactic
    term: Optional[Term]
    state: CalcState


@dataclass(frozen=True)
class Accepted:
    derivation: Evidence
    located: tuple[Tactic, ...]
    state: CalcState


@dataclass(frozen=True)
class Rejected:
    state: CalcState  # the input state, untouched


InputResult = Union[Accepted, Rejected]


def _check_cancel(cancel: Optional[threading.Event]):
    if cancel is not None and cancel.is_set():
        raise Cancelled("step search abandoned")


# ---------------------------------------------------------------------------
# initialisation

def _record_var_typs(t: Term, ctx: Context):
    match t:
        case Var(n, ty):
            if ty is not None:
                ctx.variables.setdefault(n, ty)
        case App(f, a):
            _record_var_typs(f, ctx)
            _record_var_typs(a, ctx)
        case Abs(_, _, b):
            _record_var_typs(b, ctx)


def init_calc(store: KnowledgeStore, formalisation: Formalisation) -> CalcState:
    """Root specification node from an example's hidden data; the
    position starts at the model slot."""
    _, problem, method = store.lookup(formalisation.refs)
    if problem is None:
        raise CalcError("formalisation must reference a problem")
    ctx = store.ctx(formalisation.refs.theory)
    slot_typs = dict(problem.model.slot_typs())
    if method is not None:
        for w, ty in method.guard.slot_typs().items():
            slot_typs.setdefault(w, ty)
    for item in formalisation.items:
        expected = slot_typs.get(item.word)
        actual = typ_of(item.term)
        if expected is not None and actual != expected:
            raise TypeMismatch(
                f"item {item.word!r} has type {actual}, expected {expected}")
        _record_var_typs(item.term, ctx)
    root = SpecNode(formalisation, Specification(), "specifying")
    return CalcState(root, Position((), MODEL), ctx, [])


# ---------------------------------------------------------------------------
# the stepping core (operates on a private copy of the state)

def next_step(cs: CalcState, store: KnowledgeStore,
              cancel: Optional[threading.Event] = None) -> NextStep:
    """Propose and apply the next tactic; specification progress in the
    specify phase, program execution in the solve phase."""
    _check_cancel(cancel)
    work = cs.copy()
    tactic, term, out = _step(work, store)
    return NextStep(tactic, term, out)


def peek_tactic(cs: CalcState, store: KnowledgeStore) -> Optional[Tactic]:
    try:
        tactic, _, _ = _step(cs.copy(), store)
        return tactic
    except (CalcFinished, ProgramStuck):
        return None


def _active_path(cs: CalcState) -> tuple[int, ...]:
    path: tuple[int, ...] = ()
    node = cs.tree
    while True:
        open_i = None
        for i, c in enumerate(node.children):
            if isinstance(c, SpecNode) and c.status != "solved":
                open_i = i
        if open_i is None:
            return path
        path = path + (open_i,)
        node = node.children[open_i]


def _step(cs: CalcState, store: KnowledgeStore):
    path = _active_path(cs)
    node = cs.node_at(path)
    if node.status == "specifying":
        return _specify_step(cs, store, node, path)
    if node.status == "solving":
        return _solve_step(cs, store, path)
    raise CalcFinished("calculation is solved")


def _specify_step(cs: CalcState, store: KnowledgeStore, node: SpecNode,
                  path: tuple[int, ...]):
    formal = node.formalisation
    spec = node.spec
    problem = store.problems[tuple(formal.refs.problem)]
    for section, slot in problem.model.slots():
        if slot.word in spec.filled:
            continue
        term = formal.term_for(slot.word)
        if term is None:
            continue
        kind = {"given": AddGiven, "find": AddFind, "relate": AddRelate}[section]
        tactic = kind(slot.word, term)
        spec.filled[slot.word] = term
        cs.position = Position(path, MODEL)
        return tactic, term, cs
    if spec.refs.theory is None:
        spec.refs = replace(spec.refs, theory=formal.refs.theory)
        cs.position = Position(path, REFERENCES)
        return SpecifyTheory(formal.refs.theory), None, cs
    if spec.refs.problem is None:
        spec.refs = replace(spec.refs, problem=formal.refs.problem)
        cs.position = Position(path, REFERENCES)
        return SpecifyProblem(tuple(formal.refs.problem)), None, cs
    if spec.refs.method is None:
        mpath = formal.refs.method
        if mpath is None:
            candidates = methods_for(store, spec.refs.problem)
            if not candidates:
                raise ProgramStuck(
                    f"no method matches problem {list(spec.refs.problem)}")
            mpath = candidates[0]
        spec.refs = replace(spec.refs, method=tuple(mpath))
        cs.position = Position(path, REFERENCES)
        return SpecifyMethod(tuple(mpath)), None, cs
    current = store.problems[tuple(spec.refs.problem)]
    if current.children:
        refined = refine(store, formal.items, spec.refs.problem)
        if refined is not None and refined != tuple(spec.refs.problem):
            spec.refs = replace(spec.refs, problem=refined)
            cs.position = Position(path, REFERENCES)
            return RefineProblem(refined), None, cs
    return _begin_solving(cs, store, node, path)


def _begin_solving(cs: CalcState, store: KnowledgeStore, node: SpecNode,
                   path: tuple[int, ...]):
    spec = node.spec
    problem = store.problems[tuple(spec.refs.problem)]
    ctx = cs.context
    node.spec = check_preconditions(spec, store, problem, ctx)
    if any(s != specify.PRE_TRUE for s in node.spec.precond_status):
        raise ProgramStuck(
            f"preconditions of {list(problem.path)} not satisfied: "
            f"{node.spec.precond_status}")
    method = store.methods[tuple(spec.refs.method)]
    if method.program is None:
        raise ProgramStuck(f"method {list(method.path)} has no program")
    param_env = {}
    for pname, _ in method.program.params:
        slot_word = _guard_word_for(method, pname)
        value = node.formalisation.term_for(slot_word) if slot_word else None
        if value is not None:
            param_env[pname] = value
    frame = Frame(method.program, method.path, path, 0, [], param_env)
    frame.derivation = _derivation_ruleset(store, method, param_env)
    node.status = "solving"
    cs.stack.append(frame)
    cs.position = Position(path, STEPS, None)
    return _solve_step(cs, store, path)


def _guard_word_for(method: Method, param_name: str) -> Optional[str]:
    for section in (method.guard.given, method.guard.find):
        for it in section:
            if isinstance(it.term, Var) and it.term.name == param_name:
                return it.word
    return None


def _derivation_ruleset(store: KnowledgeStore, method: Method,
                        param_env: dict[str, Term]) -> Optional[Ruleset]:
    """The method's rulesets (instantiated the way its program uses
    them) plus base arithmetic; the basis for locating user input."""
    rules = []
    seen = set()
    inst_by_rs: dict[str, dict[str, Term]] = {}
    if method.program is not None:
        for ins in method.program.instructions:
            if ins.kind == "rewrite_set_inst" and ins.inst_expr is not None:
                pairs = _inst_pairs(subst_vars(ins.inst_expr, param_env))
                if pairs is not None:
                    inst_by_rs[ins.name] = dict(pairs)
    for name in method.rulesets_used:
        rs = store.ruleset(name)
        if rs is None:
            continue
        if rs.inst_vars:
            env = {k: v for k, v in inst_by_rs.get(name, {}).items()}
            if not env:
                continue
            rs = rs.instantiated(env)
        for r in rs.rules:
            if r.name not in seen:
                seen.add(r.name)
                rules.append(r)
    base = store.ruleset("eval_arith")
    if base is not None:
        for r in base.rules:
            if r.name not in seen:
                seen.add(r.name)
                rules.append(r)
    if not rules:
        return None
    cond = store.condition_ruleset_for(method.theory)
    return Ruleset(f"derive_{method.path[-1]}", rules, "innermost", cond, 2000,
                   validate=False)


def _inst_pairs(t: Term) -> Optional[list[tuple[str, Term]]]:
    items = list_items(t)
    if items is None:
        return None
    pairs = []
    for it in items:
        sub = list_items(it)
        if sub is None or len(sub) != 2:
            return None
        key = sub[0]
        if not isinstance(key, (Const, Var)):
            return None
        pairs.append((key.name, sub[1]))
    return pairs


def _solve_step(cs: CalcState, store: KnowledgeStore, path: tuple[int, ...]):
    frame = cs.stack[-1]
    node = cs.node_at(path)
    instrs = frame.program.instructions
    while True:
        if frame.pending_child is not None:
            child = node.children[frame.pending_child]
            if not (isinstance(child, SpecNode) and child.status == "solved"):
                raise ProgramStuck("waiting on an open sub-problem")
            ins = instrs[frame.index]
            _bind(frame, ins, child.result)
            frame.formula_on_top = False
            frame.pending_child = None
            frame.index += 1
            continue
        if frame.index >= len(instrs):
            raise ProgramStuck("program ran past its end")
        ins = instrs[frame.index]
        if ins.kind == "eval":
            value = _eval_expr(cs, store, frame, ins.expr)
            _bind(frame, ins, value)
            frame.formula_on_top = False
            frame.index += 1
            continue
        if ins.kind == "result":
            value = _eval_expr(cs, store, frame, ins.expr)
            return _close_node(cs, store, node, path, value, frame)
        outcome = _exec_tactic(cs, store, frame, node, path, ins)
        if outcome is None:
            continue  # no-op tactic application, keep walking
        return outcome


def _close_node(cs: CalcState, store: KnowledgeStore, node: SpecNode,
                path: tuple[int, ...], value: Term, frame: Frame):
    tactic = CheckPostcond()
    last = node.last_formula()
    if last is None or not alpha_eq(value, last):
        step = StepNode(value, tactic, ResultEvidence(value), "system",
                        resume=(frame.index, list(frame.env)))
        _append(cs, store, path, step)
    node.status = "solved"
    node.result = value
    cs.stack.pop()
    if cs.stack:
        cs.position = Position(cs.stack[-1].node_path, STEPS, None)
    else:
        cs.position = Position(path, STEPS, None)
    return tactic, value, cs


def _bind(frame: Frame, ins: Instruction, value: Term):
    if ins.push:
        frame.env.insert(0, value)
    else:
        frame.env[0] = value


def _subst_env(t: Term, env: list[Term], depth: int = 0) -> Term:
    match t:
        case Bound(i):
            if i - depth >= 0 and i - depth < len(env):
                return lift(env[i - depth], depth)
            return t
        case App(f, a):
            return App(_subst_env(f, env, depth), _subst_env(a, env, depth))
        case Abs(n, ty, b):
            return Abs(n, ty, _subst_env(b, env, depth + 1))
        case _:
            return t


def _program_ruleset(store: KnowledgeStore, frame: Frame) -> Optional[Ruleset]:
    method = store.methods.get(frame.method_path)
    if method is not None:
        for name in method.rulesets_used[:1]:
            rs = store.ruleset(name)
            if rs is not None:
                return rs
    return store.ruleset("prog_base")


def _eval_expr(cs: CalcState, store: KnowledgeStore, frame: Frame,
               expr: Term) -> Term:
    """Evaluate a program expression with the program ruleset (list
    processing, embedded function calls)."""
    t = _subst_env(expr, frame.env)
    t = subst_vars(t, frame.param_env)
    rs = _program_ruleset(store, frame)
    if rs is not None:
        t = normalize(rs, t, cs.context).final
    return infer_types(t, cs.context)


def _input_value(cs: CalcState, frame: Frame, expr: Term) -> Term:
    """The formula a tactic operates on: substituted verbatim, never
    pre-normalised (the tactic itself is the visible step)."""
    t = _subst_env(expr, frame.env)
    t = subst_vars(t, frame.param_env)
    return infer_types(t, cs.context)


def _append(cs: CalcState, store: KnowledgeStore, path: tuple[int, ...],
            step: StepNode):
    node = cs.node_at(path)
    before = node.last_formula()
    if not calctree.replay_evidence(step.evidence, before, step.formula,
                                    store.rule, cs.context):
        raise ReplayFailed(
            f"justification {tactics.tactic_label(step.tactic)} does not replay")
    node.children.append(step)
    cs.position = Position(path, STEPS, None)


def _cleanup_steps(store: KnowledgeStore, t: Term,
                   ctx: Context) -> tuple[Term, tuple[RewriteStep, ...]]:
    rs = store.ruleset(CLEANUP_RULESET)
    if rs is None:
        return t, ()
    trace = normalize(rs, t, ctx)
    return trace.final, trace.steps


def _first_rule_step(rule: Rule, t: Term, ctx: Context,
                     cond_rs: Optional[Ruleset],
                     assume: bool) -> Optional[RewriteStep]:
    for pos in positions_innermost(t):
        try:
            step = rewrite_at(rule, pos, t, ctx, cond_rs, assume)
        except (ConditionUndecided, EvalError):
            continue
        if step is not None:
            return step
    return None


def _exec_tactic(cs: CalcState, store: KnowledgeStore, frame: Frame,
                 node: SpecNode, path: tuple[int, ...], ins: Instruction):
    ctx = cs.context
    method = store.methods.get(frame.method_path)
    cond_rs = store.condition_ruleset_for(method.theory) if method else None
    site = f"site {frame.index} ({ins.kind} {ins.name})".rstrip()

    def finish(formula, tactic, evidence, detail=()):
        _bind(frame, ins, formula)
        frame.formula_on_top = True
        frame.index += 1
        step = StepNode(formula, tactic, evidence, "system",
                        resume=(frame.index, list(frame.env)),
                        detail_rules=tuple(detail))
        _append(cs, store, path, step)
        return tactic, formula, cs

    def silent(value):
        _bind(frame, ins, value)
        frame.formula_on_top = True
        frame.index += 1
        return None

    if ins.kind == "take":
        formula = _eval_expr(cs, store, frame, ins.expr)
        return finish(formula, Take(formula), TakeEvidence(formula))

    if ins.kind == "rewrite":
        target = _input_value(cs, frame, ins.expr)
        rule = store.rule(ins.name)
        if rule is None:
            raise ProgramStuck(site)
        step = _first_rule_step(rule, target, ctx, cond_rs, ins.flag)
        if step is None:
            raise ProgramStuck(site)
        final, cleanup = _cleanup_steps(store, step.after, ctx)
        return finish(final, Rewrite(ins.name, ins.flag),
                      RewriteEvidence((step,) + cleanup),
                      [ins.name] + [s.rule_name for s in cleanup])

    if ins.kind in ("rewrite_set", "rewrite_set_inst"):
        target = _input_value(cs, frame, ins.expr)
        rs = store.ruleset(ins.name)
        if rs is None:
            raise ProgramStuck(site)
        inst_pairs: tuple[tuple[str, Term], ...] = ()
        if ins.kind == "rewrite_set_inst":
            inst_term = _eval_expr(cs, store, frame, ins.inst_expr)
            pairs = _inst_pairs(inst_term)
            if pairs is None:
                raise ProgramStuck(site)
            inst_pairs = tuple(pairs)
            rs = rs.instantiated(dict(pairs))
        trace = normalize(rs, target, ctx)
        if not trace.steps:
            return silent(target)
        tactic = (RewriteSet(ins.name, ins.flag) if ins.kind == "rewrite_set"
                  else RewriteSetInst(inst_pairs, ins.name, ins.flag))
        detail = list(dict.fromkeys(s.rule_name for s in trace.steps))
        return finish(trace.final, tactic, RewriteEvidence(trace.steps), detail)

    if ins.kind == "substitute":
        target = _input_value(cs, frame, ins.expr)
        eq_term = _eval_expr(cs, store, frame, ins.inst_expr)
        eqs = list_items(eq_term)
        if eqs is None:
            raise ProgramStuck(site)
        new = _apply_substitutions(target, eqs)
        if alpha_eq(new, target):
            return silent(target)
        return finish(new, Substitute(tuple(eqs)), SubstituteEvidence(tuple(eqs)))

    if ins.kind == "calculate":
        target = _input_value(cs, frame, ins.expr)
        rule = store.rule(f"eval_{ins.name}")
        if rule is None:
            raise ProgramStuck(site)
        step = _first_rule_step(rule, target, ctx, cond_rs, False)
        if step is None:
            raise ProgramStuck(site)
        return finish(step.after, Calculate(ins.name),
                      RewriteEvidence((step,)), [rule.name])

    if ins.kind == "subproblem":
        args = [_eval_expr(cs, store, frame, e) for e in ins.arg_exprs]
        ref = ins.ref
        _, problem, method = store.lookup(ref)
        mpath = ref.method
        if mpath is None:
            candidates = methods_for(store, ref.problem)
            if not candidates:
                raise ProgramStuck(site)
            mpath = candidates[0]
        target_method = store.methods[tuple(mpath)]
        slots = [it for it in target_method.guard.given + target_method.guard.find]
        items = [ModelItem(slot.word, arg) for slot, arg in zip(slots, args)]
        child_refs = RefTriple(ref.theory, ref.problem, tuple(mpath))
        child = SpecNode(Formalisation(items, child_refs), Specification(),
                         "specifying")
        node.children.append(child)
        frame.pending_child = len(node.children) - 1
        cs.position = Position(path + (frame.pending_child,), MODEL)
        return SubProblem(ref, tuple(args)), None, cs

    raise ProgramStuck(site)


def _apply_substitutions(t: Term, eqs: list[Term]) -> Term:
    from .terms import subst_consts
    for eq in eqs:
        head, args = app_spine(eq)
        if not (isinstance(head, Const) and head.name == "eq" and len(args) == 2):
            raise ProgramStuck("Substitute needs a list of equations")
        lhs, rhs = args
        if isinstance(lhs, Const):
            t = subst_consts(t, {lhs.name: rhs})
        elif isinstance(lhs, Var):
            t = subst_vars(t, {lhs.name: rhs})
        else:
            raise ProgramStuck("Substitute left sides must be atoms")
    return t


# ---------------------------------------------------------------------------
# tactic menu

def applicable_tactics(cs: CalcState, store: KnowledgeStore) -> list[Tactic]:
    """Specify phase: every item tactic not yet satisfied plus reference
    tactics; solve phase: the program's next tactic plus every shipped
    ruleset applicable to the current formula."""
    path = _active_path(cs)
    node = cs.node_at(path)
    out: list[Tactic] = []
    if node.status == "solved":
        return out
    if node.status == "specifying":
        formal = node.formalisation
        spec = node.spec
        problem = store.problems[tuple(formal.refs.problem)]
        for section, slot in problem.model.slots():
            if slot.word in spec.filled:
                continue
            term = formal.term_for(slot.word)
            if term is None:
                continue
            kind = {"given": AddGiven, "find": AddFind,
                    "relate": AddRelate}[section]
            out.append(kind(slot.word, term))
        if spec.refs.theory is None:
            out.append(SpecifyTheory(formal.refs.theory))
        if spec.refs.problem is None:
            out.append(SpecifyProblem(tuple(formal.refs.problem)))
        if spec.refs.method is None:
            mpath = formal.refs.method
            if mpath is None:
                cands = methods_for(store, formal.refs.problem)
                mpath = cands[0] if cands else None
            if mpath is not None:
                out.append(SpecifyMethod(tuple(mpath)))
        if spec.refs.problem is not None \
                and store.problems[tuple(spec.refs.problem)].children:
            refined = refine(store, formal.items, spec.refs.problem)
            if refined is not None and refined != tuple(spec.refs.problem):
                out.append(RefineProblem(refined))
        if not out:
            # specification complete: the menu shows the first solve step
            proposal = peek_tactic(cs, store)
            if proposal is not None:
                out.append(proposal)
        return out
    proposal = peek_tactic(cs, store)
    if proposal is not None:
        out.append(proposal)
    cur = node.last_formula()
    if cur is not None:
        from .rewrite import _first_step
        for name, rs in sorted(store.all_rulesets().items()):
            if rs.inst_vars:
                continue
            if _first_step(rs, cur, cs.context.copy()) is not None:
                tac = RewriteSet(name)
                if not any(tactic_eq(tac, t) for t in out):
                    out.append(tac)
    return out


# ---------------------------------------------------------------------------
# user input

def input_formula(cs: CalcState, store: KnowledgeStore, t: Term,
                  lookahead: int = LOOKAHEAD,
                  cancel: Optional[threading.Event] = None) -> InputResult:
    """Accept a student formula by locating it on the program path or by
    deriving it via normalisation; reject otherwise. Rejection leaves
    the state untouched."""
    path = _active_path(cs)
    node = cs.node_at(path)
    if node.status != "solving":
        raise CalcError("formula input needs an active solving node")
    cur = node.last_formula()
    if cur is not None and alpha_eq(t, cur):
        return Accepted(DerivationEvidence(()), (), cs)

    # forward search: does the program reach the formula within a few sites?
    solve_kinds = (Take, Rewrite, RewriteSet, RewriteSetInst, Substitute,
                   Calculate, CheckPostcond)
    sim = cs.copy()
    located: list[Tactic] = []
    for _ in range(lookahead):
        _check_cancel(cancel)
        try:
            tactic, term, sim = _step(sim, store)
        except (CalcFinished, ProgramStuck):
            break
        located.append(tactic)
        if (isinstance(tactic, solve_kinds) and term is not None
                and alpha_eq(term, t)):
            _mark_last_step_user(sim.tree, t)
            return Accepted(DerivationEvidence(()), tuple(located), sim)

    if cur is None:
        return Rejected(cs)
    frame = cs.stack[-1] if cs.stack else None
    drs = frame.derivation if frame is not None else None
    if drs is None:
        return Rejected(cs)
    _check_cancel(cancel)
    left = normalize(drs, cur, cs.context.copy())
    _check_cancel(cancel)
    right = normalize(drs, t, cs.context.copy())
    if left.complete and right.complete and alpha_eq(left.final, right.final):
        entries = tuple([(s, False) for s in left.steps]
                        + [(s, True) for s in reversed(right.steps)])
        evidence = DerivationEvidence(entries)
        out = cs.copy()
        out_frame = out.stack[-1]
        step = StepNode(t, Derive(drs.name), evidence, "user", off_program=True,
                        resume=(out_frame.index, list(out_frame.env)))
        _append(out, store, path, step)
        if out_frame.formula_on_top and out_frame.env:
            out_frame.env[0] = t
        return Accepted(evidence, (), out)
    return Rejected(cs)


def _mark_last_step_user(node: SpecNode, t: Term) -> bool:
    """Relabel the step that matched the user's formula."""
    for child in reversed(node.children):
        if isinstance(child, SpecNode):
            if _mark_last_step_user(child, t):
                return True
        elif alpha_eq(child.formula, t):
            child.origin = "user"
            return True
    return False


def input_tactic(cs: CalcState, store: KnowledgeStore, tac: Tactic) -> CalcState:
    """Apply a user-chosen tactic: the proposed one runs the program
    step, any other applicable specify tactic fills its slot, and
    ruleset applications are off-program with re-location afterwards."""
    proposal = peek_tactic(cs, store)
    if proposal is not None and tactic_eq(tac, proposal):
        return next_step(cs, store).state
    path = _active_path(cs)
    node = cs.node_at(path)
    if node.status == "specifying":
        for candidate in applicable_tactics(cs, store):
            if tactic_eq(tac, candidate):
                return _apply_specify_tactic(cs, store, path, tac)
        raise TacticNotApplicable(f"{tactics.tactic_label(tac)} does not apply")
    cur = node.last_formula()
    if node.status != "solving" or cur is None:
        raise TacticNotApplicable(f"{tactics.tactic_label(tac)} does not apply")
    ctx = cs.context

    def append_user(formula, evidence, detail):
        out = cs.copy()
        frame = out.stack[-1] if out.stack else None
        resume = (frame.index, list(frame.env)) if frame else None
        step = StepNode(formula, tac, evidence, "user", off_program=True,
                        resume=resume, detail_rules=tuple(detail))
        _append(out, store, path, step)
        if frame is not None and frame.formula_on_top and frame.env:
            frame.env[0] = formula
        return out

    match tac:
        case RewriteSet(name, _):
            rs = store.ruleset(name)
            if rs is None or rs.inst_vars:
                raise TacticNotApplicable(f"unknown or open ruleset {name!r}")
            trace = normalize(rs, cur, ctx.copy())
            if not trace.steps:
                raise TacticNotApplicable(f"{name} leaves the formula unchanged")
            return append_user(trace.final, RewriteEvidence(trace.steps),
                               dict.fromkeys(s.rule_name for s in trace.steps))
        case RewriteSetInst(inst, name, _):
            rs = store.ruleset(name)
            if rs is None:
                raise TacticNotApplicable(f"unknown ruleset {name!r}")
            rs = rs.instantiated(dict(inst))
            trace = normalize(rs, cur, ctx.copy())
            if not trace.steps:
                raise TacticNotApplicable(f"{name} leaves the formula unchanged")
            return append_user(trace.final, RewriteEvidence(trace.steps),
                               dict.fromkeys(s.rule_name for s in trace.steps))
        case Rewrite(thm, assume):
            rule = store.rule(thm)
            if rule is None:
                raise TacticNotApplicable(f"unknown theorem {thm!r}")
            method = store.methods.get(cs.stack[-1].method_path) if cs.stack else None
            cond_rs = store.condition_ruleset_for(method.theory) if method else None
            step = _first_rule_step(rule, cur, ctx.copy(), cond_rs, assume)
            if step is None:
                raise TacticNotApplicable(f"{thm} does not apply")
            final, cleanup = _cleanup_steps(store, step.after, ctx)
            return append_user(final, RewriteEvidence((step,) + cleanup),
                               [thm] + [s.rule_name for s in cleanup])
        case _:
            raise TacticNotApplicable(f"{tactics.tactic_label(tac)} is not "
                                      f"available off-program")


def _apply_specify_tactic(cs: CalcState, store: KnowledgeStore,
                          path: tuple[int, ...], tac: Tactic) -> CalcState:
    out = cs.copy()
    node = out.node_at(path)
    spec = node.spec
    match tac:
        case AddGiven(word, term) | AddFind(word, term) | AddRelate(word, term):
            spec.filled[word] = term
            out.position = Position(path, MODEL)
        case SpecifyTheory(name):
            spec.refs = replace(spec.refs, theory=name)
            out.position = Position(path, REFERENCES)
        case SpecifyProblem(p):
            spec.refs = replace(spec.refs, problem=tuple(p))
            out.position = Position(path, REFERENCES)
        case SpecifyMethod(p):
            spec.refs = replace(spec.refs, method=tuple(p))
            out.position = Position(path, REFERENCES)
        case RefineProblem(p):
            spec.refs = replace(spec.refs, problem=tuple(p))
            out.position = Position(path, REFERENCES)
        case _:
            raise TacticNotApplicable(f"{tactics.tactic_label(tac)} is not a "
                                      f"specification tactic")
    return out


# ---------------------------------------------------------------------------
# postcondition checking

SATISFIED = "satisfied"
UNSATISFIED = "unsatisfied"
UNDECIDED = "undecided"


def check_postcondition(cs: CalcState, store: KnowledgeStore) -> str:
    """Instantiate the problem's postcondition with the model values and
    the result, then normalise with the condition ruleset."""
    root = cs.tree
    if root.status != "solved" or root.result is None:
        raise CalcError("calculation is not solved")
    ppath = root.spec.refs.problem or root.formalisation.refs.problem
    problem = store.problems[tuple(ppath)]
    if problem.postcondition is None:
        return UNDECIDED
    env: dict[str, Term] = {}
    for section, slot in problem.model.slots():
        if not isinstance(slot.term, Var):
            continue
        if section == "find":
            env[slot.term.name] = root.result
        else:
            value = root.formalisation.term_for(slot.word)
            if value is not None:
                env[slot.term.name] = value
    inst = subst_vars(problem.postcondition, env)
    cond_rs = store.condition_ruleset_for(problem.theory)
    nf = normalize(cond_rs, inst, cs.context.copy()).final if cond_rs else inst
    if alpha_eq(nf, Const("True", BOOL)):
        return SATISFIED
    if alpha_eq(nf, Const("False", BOOL)):
        return UNSATISFIED
    return UNDECIDED


def solve(cs: CalcState, store: KnowledgeStore, max_steps: int = 200) -> CalcState:
    """Run next_step to completion (the fully automatic mode)."""
    for _ in range(max_steps):
        try:
            result = next_step(cs, store)
        except CalcFinished:
            return cs
        cs = result.state
        if cs.tree.status == "solved":
            return cs
    raise ProgramStuck(f"not solved within {max_steps} steps")
