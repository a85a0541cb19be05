"""Specification-phase workflow: the student-visible Specification,
precondition checking, the Problem-vs-Method view toggle, and
sub-problem sequencing by typed slot matching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .knowledge import (KnowledgeStore, Method, Model, ModelItem, Problem,
                        guard_matches)
from .programs import RefTriple
from .rewrite import normalize
from .terms import Context, Term, TRUE, FALSE, Typ, alpha_eq, subst_vars, typ_of


class SpecifyError(Exception):
    pass


class MethodAbsent(SpecifyError):
    pass


@dataclass
class Formalisation:
    """The hidden, author-provided data behind an example."""
    items: list[ModelItem]
    refs: RefTriple

    def term_for(self, word: str) -> Optional[Term]:
        for it in self.items:
            if it.word == word:
                return it.term
        return None


PRE_TRUE = "true"
PRE_FALSE = "false"
PRE_UNDECIDED = "undecided"


@dataclass
class Specification:
    """Model plus references as the student sees them; refs components
    stay None until explicitly specified."""
    refs: RefTriple = field(default_factory=RefTriple)
    view: str = "problem"  # "x"/"o" selection: problem | method
    filled: dict[str, Term] = field(default_factory=dict)
    precond_status: list[str] = field(default_factory=list)

    def copy(self) -> "Specification":
        return Specification(self.refs, self.view, dict(self.filled),
                             list(self.precond_status))


def displayed_model(spec: Specification, store: KnowledgeStore,
                    fallback_problem: Optional[tuple[str, ...]] = None) -> Optional[Model]:
    """The model schema currently shown: the problem's model, or the
    method's guard when the view is toggled."""
    if spec.view == "method":
        if spec.refs.method is None:
            raise MethodAbsent("no method selected")
        return store.methods[tuple(spec.refs.method)].guard
    ppath = spec.refs.problem or fallback_problem
    if ppath is None:
        return None
    return store.problems[tuple(ppath)].model


def toggle_view(spec: Specification, store: KnowledgeStore,
                view: Optional[str] = None) -> Specification:
    """Swap between the problem model and the method guard; filled
    items carry over where description words coincide."""
    out = spec.copy()
    out.view = view if view is not None else \
        ("method" if spec.view == "problem" else "problem")
    if out.view == "method" and out.refs.method is None:
        raise MethodAbsent("no method selected")
    model = displayed_model(out, store)
    if model is not None:
        words = {it.word for _, it in model.slots()}
        out.filled = {w: t for w, t in spec.filled.items() if w in words}
    return out


def check_preconditions(spec: Specification, store: KnowledgeStore,
                        problem: Problem, ctx: Context) -> Specification:
    """Instantiate each Where item with the filled model values and
    normalise it with the theory's condition ruleset."""
    env = {}
    for _, slot in problem.model.slots():
        from .terms import Var
        if isinstance(slot.term, Var) and slot.word in spec.filled:
            env[slot.term.name] = spec.filled[slot.word]
    cond_rs = store.condition_ruleset_for(problem.theory)
    out = spec.copy()
    out.precond_status = []
    for w in problem.model.where:
        missing = {v for v in _free(w)} & (set(_schema_names(problem.model)) - set(env))
        if missing:
            out.precond_status.append(PRE_UNDECIDED)
            continue
        inst = subst_vars(w, env)
        nf = normalize(cond_rs, inst, ctx).final if cond_rs else inst
        if alpha_eq(nf, TRUE):
            out.precond_status.append(PRE_TRUE)
        elif alpha_eq(nf, FALSE):
            out.precond_status.append(PRE_FALSE)
        else:
            out.precond_status.append(PRE_UNDECIDED)
    return out


def _free(t: Term):
    from .terms import free_vars
    return free_vars(t)


def _schema_names(model: Model) -> list[str]:
    from .terms import Var
    return [it.term.name for _, it in model.slots() if isinstance(it.term, Var)]


# ---------------------------------------------------------------------------
# sub-problem sequencing

@dataclass
class PlanNode:
    problem_path: tuple[str, ...]
    inputs: list[tuple[str, Typ]]
    outputs: list[tuple[str, Typ]]


@dataclass
class PlanEdge:
    producer: int
    consumer: int
    slot: str
    ambiguous: bool = False  # matched by type only


@dataclass
class SubproblemPlan:
    nodes: list[PlanNode]
    edges: list[PlanEdge]


@dataclass
class PlanDiagnosis:
    unfed: list[tuple[int, str]] = field(default_factory=list)  # (node, slot)
    cycle: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.unfed and not self.cycle


def plan_node_for(store: KnowledgeStore, path) -> PlanNode:
    problem = store.problems[tuple(path)]
    ins = [(it.word, typ_of(it.term)) for it in problem.model.given]
    outs = [(it.word, typ_of(it.term)) for it in problem.model.find]
    return PlanNode(tuple(path), ins, outs)


def sequence_subproblems(nodes: list[PlanNode], formalisation: Formalisation
                         ) -> Union[SubproblemPlan, PlanDiagnosis]:
    """Match inputs to outputs by (description word, type), type only as
    a flagged fallback. The proposed order contributes precedence edges;
    the plan is valid when the combined relation is acyclic and every
    input is fed by a producer above or by the formalisation."""
    form_slots = {it.word: typ_of(it.term) for it in formalisation.items}
    edges: list[PlanEdge] = []
    unfed: list[tuple[int, str]] = []
    for ci, consumer in enumerate(nodes):
        for word, ty in consumer.inputs:
            word_matches = [pi for pi, p in enumerate(nodes)
                            if pi != ci and any(w == word and t == ty
                                                for w, t in p.outputs)]
            if word_matches:
                edges.append(PlanEdge(word_matches[0], ci, word))
                continue
            if word in form_slots and form_slots[word] == ty:
                continue
            typ_matches = [pi for pi, p in enumerate(nodes)
                           if pi != ci and any(t == ty for _, t in p.outputs)]
            if typ_matches:
                edges.append(PlanEdge(typ_matches[0], ci, word, ambiguous=True))
                continue
            if any(t == ty for t in form_slots.values()):
                continue
            unfed.append((ci, word))
    # precedence edges from the proposed order: a data edge against the
    # order closes a cycle with them
    adj: dict[int, set[int]] = {i: set() for i in range(len(nodes))}
    for i in range(len(nodes) - 1):
        adj[i].add(i + 1)
    for e in edges:
        adj[e.producer].add(e.consumer)
    cycle = _find_cycle(adj)
    if unfed or cycle:
        return PlanDiagnosis(unfed, cycle)
    return SubproblemPlan(nodes, edges)


def _find_cycle(adj: dict[int, set[int]]) -> list[int]:
    state: dict[int, int] = {}
    trail: list[int] = []

    def visit(n: int) -> Optional[list[int]]:
        state[n] = 1
        trail.append(n)
        for m in sorted(adj[n]):
            if state.get(m) == 1:
                return trail[trail.index(m):] + [m]
            if state.get(m, 0) == 0:
                found = visit(m)
                if found:
                    return found
        trail.pop()
        state[n] = 2
        return None

    for n in sorted(adj):
        if state.get(n, 0) == 0:
            found = visit(n)
            if found:
                return found
    return []
