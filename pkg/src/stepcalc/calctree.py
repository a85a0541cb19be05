"""The calculation tree: specification nodes and justified step nodes,
paired with the current position. Steps are verified by replaying their
evidence before insertion, so every reachable tree is correct by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

from .knowledge import ModelItem
from .programs import Program, RefTriple
from .rewrite import Rule, RewriteStep, Ruleset, rewrite_at, ConditionUndecided, EvalError
from .specify import Formalisation, Specification
from .tactics import (DerivationEvidence, Evidence, ResultEvidence,
                      RewriteEvidence, SubstituteEvidence, Tactic,
                      TakeEvidence, tactic_label)
from .terms import (Const, Context, Term, Var, alpha_eq, pretty, subst_consts,
                    subst_vars)


class CtreeError(Exception):
    pass


class InvalidPosition(CtreeError):
    pass


class ReplayFailed(CtreeError):
    pass


# ---------------------------------------------------------------------------
# nodes

@dataclass
class StepNode:
    formula: Term
    tactic: Tactic
    evidence: Evidence
    origin: str = "system"  # system | user
    off_program: bool = False
    resume: Optional[tuple[int, list[Term]]] = None  # interpreter snapshot
    detail_rules: tuple[str, ...] = ()  # rule names behind a grouped step

    def copy(self) -> "StepNode":
        return StepNode(self.formula, self.tactic, self.evidence, self.origin,
                        self.off_program,
                        (self.resume[0], list(self.resume[1])) if self.resume else None,
                        self.detail_rules)


@dataclass
class SpecNode:
    formalisation: Formalisation
    spec: Specification
    status: str = "specifying"  # specifying | solving | solved
    children: list[Union["SpecNode", StepNode]] = field(default_factory=list)
    result: Optional[Term] = None

    def copy(self) -> "SpecNode":
        return SpecNode(Formalisation(list(self.formalisation.items),
                                      self.formalisation.refs),
                        self.spec.copy(), self.status,
                        [c.copy() for c in self.children], self.result)

    def steps(self) -> list[StepNode]:
        return [c for c in self.children if isinstance(c, StepNode)]

    def last_formula(self) -> Optional[Term]:
        for c in reversed(self.children):
            if isinstance(c, StepNode):
                return c.formula
        return None


MODEL = "model"
REFERENCES = "references"
STEPS = "steps"


@dataclass(frozen=True)
class Position:
    path: tuple[int, ...] = ()
    slot: str = MODEL
    index: Optional[int] = None  # steps slot: child index, None = end

    def __str__(self):
        where = self.slot if self.slot != STEPS else \
            f"steps[{'end' if self.index is None else self.index}]"
        return f"{list(self.path)}:{where}"


@dataclass
class Frame:
    """One interpreter activation: a program running for one SpecNode."""
    program: Program
    method_path: tuple[str, ...]
    node_path: tuple[int, ...]
    index: int = 0
    env: list[Term] = field(default_factory=list)
    param_env: dict[str, Term] = field(default_factory=dict)
    formula_on_top: bool = False
    pending_child: Optional[int] = None
    derivation: Optional[Ruleset] = None

    def copy(self) -> "Frame":
        return Frame(self.program, self.method_path, self.node_path, self.index,
                     list(self.env), dict(self.param_env), self.formula_on_top,
                     self.pending_child, self.derivation)


@dataclass
class CalcState:
    tree: SpecNode
    position: Position
    context: Context
    stack: list[Frame] = field(default_factory=list)

    def copy(self) -> "CalcState":
        return CalcState(self.tree.copy(), self.position, self.context.copy(),
                         [f.copy() for f in self.stack])

    def node_at(self, path) -> SpecNode:
        node = self.tree
        for i in path:
            try:
                child = node.children[i]
            except IndexError:
                raise InvalidPosition(f"no child {i} at {path}") from None
            if not isinstance(child, SpecNode):
                raise InvalidPosition(f"child {i} is a step, not a sub-problem")
            node = child
        return node

    def active_node_path(self) -> tuple[int, ...]:
        if self.stack:
            return self.stack[-1].node_path
        return self.position.path


RuleResolver = Callable[[str], Optional[Rule]]


# ---------------------------------------------------------------------------
# evidence replay

def replay_evidence(evidence: Evidence, before: Optional[Term], after: Term,
                    resolver: RuleResolver, ctx: Optional[Context] = None) -> bool:
    """Re-derive `after` from `before` using the stored justification."""
    match evidence:
        case TakeEvidence(term):
            return alpha_eq(term, after)
        case ResultEvidence(term):
            return alpha_eq(term, after)
        case SubstituteEvidence(equations):
            if before is None:
                return False
            cur = before
            for eq in equations:
                sides = _eq_sides(eq)
                if sides is None:
                    return False
                l, r = sides
                if isinstance(l, Const):
                    cur = subst_consts(cur, {l.name: r})
                elif isinstance(l, Var):
                    cur = subst_vars(cur, {l.name: r})
                else:
                    return False
            return alpha_eq(cur, after)
        case RewriteEvidence(steps):
            if not steps:
                return before is not None and alpha_eq(before, after)
            cur = before
            for step in steps:
                if cur is None or not alpha_eq(cur, step.before):
                    return False
                if not _replay_one(step, resolver, ctx):
                    return False
                cur = step.after
            return alpha_eq(cur, after)
        case DerivationEvidence(entries):
            cur = before
            for step, reverse in entries:
                if not _replay_one(step, resolver, ctx):
                    return False
                if reverse:
                    if cur is None or not alpha_eq(cur, step.after):
                        return False
                    cur = step.before
                else:
                    if cur is None or not alpha_eq(cur, step.before):
                        return False
                    cur = step.after
            return cur is not None and alpha_eq(cur, after)
    return False


def _eq_sides(t: Term):
    from .terms import app_spine
    head, args = app_spine(t)
    if isinstance(head, Const) and head.name == "eq" and len(args) == 2:
        return args[0], args[1]
    return None


def _replay_one(step: RewriteStep, resolver: RuleResolver,
                ctx: Optional[Context]) -> bool:
    rule = resolver(step.rule_name)
    if rule is None:
        return False
    if rule.open_vars:
        rule = rule.substituted({n: t for n, t in step.instantiation.items()
                                 if n in rule.open_vars})
    scratch = ctx.copy() if ctx is not None else None
    try:
        redo = rewrite_at(rule, step.position, step.before, scratch,
                          cond_rs=None, assume_undecided=True)
    except (ConditionUndecided, EvalError):
        return False
    return redo is not None and alpha_eq(redo.after, step.after)


# ---------------------------------------------------------------------------
# operations (each returns a fresh state; inputs are never mutated)

def append_step(cs: CalcState, step: StepNode, resolver: RuleResolver,
                node_path: Optional[tuple[int, ...]] = None) -> CalcState:
    """Verify the step's evidence against the node's last formula, then
    append it and advance the position."""
    path = node_path if node_path is not None else cs.active_node_path()
    target = cs.node_at(path)
    before = target.last_formula()
    if not replay_evidence(step.evidence, before, step.formula, resolver, cs.context):
        raise ReplayFailed(
            f"justification {tactic_label(step.tactic)} does not replay")
    out = cs.copy()
    out.node_at(path).children.append(step.copy())
    out.position = Position(path, STEPS, None)
    return out


def open_subproblem(cs: CalcState, refs: RefTriple, items: list[ModelItem],
                    node_path: Optional[tuple[int, ...]] = None) -> CalcState:
    """New child SpecNode in specifying status; the position moves to
    its model slot."""
    path = node_path if node_path is not None else cs.active_node_path()
    out = cs.copy()
    parent = out.node_at(path)
    child = SpecNode(Formalisation(list(items), refs), Specification(),
                     "specifying")
    parent.children.append(child)
    out.position = Position(path + (len(parent.children) - 1,), MODEL)
    return out


def positions(cs: CalcState) -> list[Position]:
    """All valid positions in pre-order."""
    out: list[Position] = []

    def walk(node: SpecNode, path: tuple[int, ...]):
        out.append(Position(path, MODEL))
        out.append(Position(path, REFERENCES))
        for i, child in enumerate(node.children):
            out.append(Position(path, STEPS, i))
            if isinstance(child, SpecNode):
                walk(child, path + (i,))
        out.append(Position(path, STEPS, None))

    walk(cs.tree, ())
    return out


def validate_position(cs: CalcState, pos: Position) -> Position:
    node = cs.node_at(pos.path)
    if pos.slot == STEPS and pos.index is not None:
        if not (0 <= pos.index < len(node.children)):
            raise InvalidPosition(f"no step {pos.index} at {list(pos.path)}")
    elif pos.slot not in (MODEL, REFERENCES, STEPS):
        raise InvalidPosition(f"unknown slot {pos.slot!r}")
    return pos


def navigate(cs: CalcState, direction: str,
             to: Optional[Position] = None) -> CalcState:
    out = cs.copy()
    if direction == "to":
        out.position = validate_position(cs, to)
        return out
    if direction == "up":
        pos = cs.position
        if pos.slot != MODEL:
            out.position = Position(pos.path, MODEL)
        elif pos.path:
            out.position = Position(pos.path[:-1], STEPS, pos.path[-1])
        else:
            raise InvalidPosition("already at the root model slot")
        return out
    if direction == "down":
        pos = cs.position
        node = cs.node_at(pos.path)
        if pos.slot == STEPS and pos.index is not None \
                and isinstance(node.children[pos.index], SpecNode):
            out.position = Position(pos.path + (pos.index,), MODEL)
            return out
        raise InvalidPosition("down requires a sub-problem step position")
    order = positions(cs)
    try:
        i = order.index(cs.position)
    except ValueError:
        raise InvalidPosition(f"position {cs.position} is stale")
    if direction == "next":
        if i + 1 >= len(order):
            raise InvalidPosition("already at the last position")
        out.position = order[i + 1]
    elif direction == "prev":
        if i == 0:
            raise InvalidPosition("already at the first position")
        out.position = order[i - 1]
    else:
        raise InvalidPosition(f"unknown direction {direction!r}")
    return out


def prune_from(cs: CalcState, pos: Position) -> CalcState:
    """Remove everything after pos in its steps slot, cascade the
    removal through ancestor slots, and re-point the interpreter."""
    validate_position(cs, pos)
    if pos.slot != STEPS:
        raise InvalidPosition("prune needs a steps position")
    out = cs.copy()
    node = out.node_at(pos.path)
    if pos.index is not None:
        del node.children[pos.index + 1:]
    # ancestors lose everything after the branch we pruned inside
    path = pos.path
    for depth in range(len(path) - 1, -1, -1):
        parent = out.node_at(path[:depth])
        del parent.children[path[depth] + 1:]
        if parent.status == "solved":
            parent.status = "solving"
            parent.result = None
    if node.status == "solved" and pos.index is not None:
        node.status = "solving"
        node.result = None
    _resync_stack(out, pos.path)
    out.position = pos
    return out


def _resync_stack(cs: CalcState, path: tuple[int, ...]):
    """Keep frames only for solving ancestors; restore the top frame
    from the last surviving snapshot."""
    keep: list[Frame] = []
    for frame in cs.stack:
        fpath = frame.node_path
        if len(fpath) <= len(path) and path[:len(fpath)] == fpath:
            try:
                node = cs.node_at(fpath)
            except InvalidPosition:
                continue
            if node.status == "solving":
                keep.append(frame)
    cs.stack = keep
    if not keep:
        return
    top = keep[-1]
    node = cs.node_at(top.node_path)
    top.pending_child = None
    snap = None
    for child in reversed(node.children):
        if isinstance(child, StepNode) and child.resume is not None:
            snap = child.resume
            break
    if snap is not None:
        top.index, top.env = snap[0], list(snap[1])
        top.formula_on_top = True
    else:
        top.index, top.env = 0, []
        top.formula_on_top = False


# ---------------------------------------------------------------------------
# whole-tree audit

@dataclass
class AuditReport:
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def audit(cs: CalcState, resolver: RuleResolver) -> AuditReport:
    """Replay every step's evidence and check the structural
    invariants; mirrors 'correct by construction'."""
    report = AuditReport()
    if not isinstance(cs.tree, SpecNode):
        report.failures.append("root is not a specification node")
        return report

    def walk(node: SpecNode, path: tuple[int, ...]):
        prev: Optional[Term] = None
        for i, child in enumerate(node.children):
            if isinstance(child, SpecNode):
                walk(child, path + (i,))
                continue
            if not replay_evidence(child.evidence, prev, child.formula,
                                   resolver, cs.context):
                report.failures.append(
                    f"step {i} at {list(path)} "
                    f"({tactic_label(child.tactic)}) does not replay")
            prev = child.formula

    walk(cs.tree, ())

    # stack coherence: frames are exactly the solving ancestors of the
    # active node, outermost first
    active = cs.active_node_path()
    solving = []
    for d in range(len(active) + 1):
        try:
            n = cs.node_at(active[:d])
        except InvalidPosition:
            report.failures.append(f"active path {list(active)} is broken")
            return report
        if n.status == "solving":
            solving.append(active[:d])
    frame_paths = [f.node_path for f in cs.stack]
    if frame_paths != solving:
        report.failures.append(
            f"interpreter stack {frame_paths} does not match solving "
            f"ancestors {solving}")
    try:
        validate_position(cs, cs.position)
    except InvalidPosition as e:
        report.failures.append(f"position invalid: {e}")
    return report
