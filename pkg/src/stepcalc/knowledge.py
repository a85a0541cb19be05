"""The three knowledge structures: theories, problems and methods.

Theories carry constants, rules and rulesets (the deductive aspect).
Problems are formal specifications collected in a tree that supports
refinement down branches (the applicative aspect). Methods associate a
tactic program with a model-shaped guard (the algorithmic aspect).

Content is authored as declarative text files in a bundle directory;
the schema is documented in docs/content.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Optional

from . import programs
from .programs import Program, RefTriple
from .rewrite import Rule, Ruleset, normalize
from .terms import (BOOL, Context, Term, Typ, TRUE, FALSE, Var, alpha_eq,
                    consts_of, list_items, parse, parse_typ_text, pretty,
                    typ_of)


class KnowledgeError(Exception):
    pass


class NotFound(KnowledgeError):
    def __init__(self, component: str, key):
        super().__init__(f"{component} not found: {key}")
        self.component = component
        self.key = key


# ---------------------------------------------------------------------------
# data structures

@dataclass
class ModelItem:
    word: str
    term: Term


@dataclass
class Model:
    given: list[ModelItem] = field(default_factory=list)
    where: list[Term] = field(default_factory=list)
    find: list[ModelItem] = field(default_factory=list)
    relate: list[ModelItem] = field(default_factory=list)

    def slots(self) -> list[tuple[str, ModelItem]]:
        return ([("given", it) for it in self.given]
                + [("find", it) for it in self.find]
                + [("relate", it) for it in self.relate])

    def slot_typs(self) -> dict[str, Typ]:
        return {it.word: typ_of(it.term) for _, it in self.slots()}

    def schema_vars(self) -> dict[str, Typ]:
        out = {}
        for _, it in self.slots():
            if isinstance(it.term, Var):
                out[it.term.name] = it.term.typ
        return out

    def copy(self) -> "Model":
        return Model(list(self.given), list(self.where),
                     list(self.find), list(self.relate))


@dataclass
class Theory:
    name: str
    imports: list[str] = field(default_factory=list)
    constants: dict[str, Typ] = field(default_factory=dict)
    rules: dict[str, Rule] = field(default_factory=dict)
    rulesets: dict[str, Ruleset] = field(default_factory=dict)
    explanations: dict[str, str] = field(default_factory=dict)
    condition_ruleset: Optional[str] = None


@dataclass
class Problem:
    path: tuple[str, ...]
    theory: str
    model: Model
    postcondition: Optional[Term] = None
    children: list["Problem"] = field(default_factory=list)


@dataclass
class Method:
    path: tuple[str, ...]
    theory: str
    guard: Model
    program_text: str = ""
    program: Optional[Program] = None
    rulesets_used: list[str] = field(default_factory=list)
    children: list["Method"] = field(default_factory=list)

    def params(self) -> list[tuple[str, Typ]]:
        out = []
        for section in (self.guard.given, self.guard.find):
            for it in section:
                if isinstance(it.term, Var):
                    out.append((it.term.name, it.term.typ))
        return out


@dataclass
class Example:
    example_id: str
    title: str
    items: list[ModelItem]
    refs: RefTriple


class KnowledgeStore:
    """Immutable after load; shared read access from all sessions."""

    def __init__(self):
        self.theories: dict[str, Theory] = {}
        self.theory_order: list[str] = []
        self.problem_roots: list[Problem] = []
        self.problems: dict[tuple[str, ...], Problem] = {}
        self.method_roots: list[Method] = []
        self.methods: dict[tuple[str, ...], Method] = {}
        self.examples: dict[str, Example] = {}
        self._rules: dict[str, tuple[str, Rule]] = {}
        self._rulesets: dict[str, tuple[str, Ruleset]] = {}

    # -- resolution --------------------------------------------------------

    def theory(self, name: str) -> Theory:
        t = self.theories.get(name)
        if t is None:
            raise NotFound("theory", name)
        return t

    def rule(self, name: str) -> Optional[Rule]:
        entry = self._rules.get(name)
        return entry[1] if entry else None

    def ruleset(self, name: str) -> Optional[Ruleset]:
        entry = self._rulesets.get(name)
        return entry[1] if entry else None

    def rule_theory(self, name: str) -> Optional[str]:
        entry = self._rules.get(name)
        return entry[0] if entry else None

    def all_rulesets(self) -> dict[str, Ruleset]:
        return {n: rs for n, (_, rs) in self._rulesets.items()}

    def imports_closure(self, name: str) -> list[str]:
        seen: list[str] = []

        def go(n: str):
            if n in seen:
                return
            for imp in self.theory(n).imports:
                go(imp)
            seen.append(n)
        go(name)
        return seen

    def ctx(self, theory_name: str) -> Context:
        ctx = Context(theory_name)
        for n in self.imports_closure(theory_name):
            ctx.constants.update(self.theories[n].constants)
        return ctx

    def condition_ruleset_for(self, theory_name: str) -> Optional[Ruleset]:
        for n in reversed(self.imports_closure(theory_name)):
            decl = self.theories[n].condition_ruleset
            if decl is not None:
                return self.ruleset(decl)
        return None

    def lookup(self, ref: RefTriple):
        """Resolve the present components of a reference triple."""
        if ref.theory is None and ref.problem is None and ref.method is None:
            raise KnowledgeError("empty reference")
        thy = self.theory(ref.theory) if ref.theory is not None else None
        prob = None
        if ref.problem is not None:
            prob = self.problems.get(tuple(ref.problem))
            if prob is None:
                raise NotFound("problem", list(ref.problem))
        meth = None
        if ref.method is not None:
            meth = self.methods.get(tuple(ref.method))
            if meth is None:
                raise NotFound("method", list(ref.method))
        return thy, prob, meth

    def theory_tree(self) -> list[tuple[str, list]]:
        """Spanning tree of the import DAG: a theory hangs under its
        first import; import-free theories are roots."""
        children: dict[Optional[str], list[str]] = {}
        for name in self.theory_order:
            thy = self.theories[name]
            parent = thy.imports[0] if thy.imports else None
            children.setdefault(parent, []).append(name)

        def build(n: str):
            return (n, [build(c) for c in children.get(n, [])])
        return [build(r) for r in children.get(None, [])]


# ---------------------------------------------------------------------------
# model matching

CORRECT = "correct"
INCOMPLETE = "incomplete"
SUPERFLUOUS = "superfluous"
MISSING = "missing"
WRONG_SLOT = "syntax-bound-to-wrong-slot"


@dataclass
class SlotFeedback:
    section: str
    word: str
    status: str
    term: Optional[Term] = None


@dataclass
class ModelFeedback:
    slots: list[SlotFeedback]
    superfluous: list[ModelItem]
    complete: bool

    def status_of(self, word: str) -> Optional[str]:
        for s in self.slots:
            if s.word == word:
                return s.status
        return None


def _typ_fits(item_term: Term, slot_typ: Typ) -> bool:
    try:
        return typ_of(item_term) == slot_typ
    except Exception:
        return False


def _list_subset(a: Term, b: Term) -> bool:
    xs, ys = list_items(a), list_items(b)
    if xs is None or ys is None:
        return False
    return len(xs) < len(ys) and all(any(alpha_eq(x, y) for y in ys) for x in xs)


def match_model(problem: Problem, items: list[ModelItem], ctx: Context,
                reference: Optional[list[ModelItem]] = None) -> ModelFeedback:
    """Per-slot feedback for student model input.

    When the example's hidden formalisation is passed as `reference`,
    item values are compared against it; otherwise only the word and
    the slot type are checked.
    """
    model = problem.model
    ref_by_word = {it.word: it.term for it in reference} if reference else {}
    slot_typs = model.slot_typs()
    feedback = []
    used = set()
    for section, slot in model.slots():
        slot_typ = typ_of(slot.term)
        cands = [(i, it) for i, it in enumerate(items) if it.word == slot.word]
        if not cands:
            feedback.append(SlotFeedback(section, slot.word, MISSING))
            continue
        i, it = cands[0]
        used.add(i)
        for j, _ in cands[1:]:
            used.add(j)
        if not _typ_fits(it.term, slot_typ):
            other = next((w for w, ty in slot_typs.items()
                          if w != slot.word and _typ_fits(it.term, ty)), None)
            status = WRONG_SLOT if other is not None else INCOMPLETE
            feedback.append(SlotFeedback(section, slot.word, status, it.term))
            continue
        ref = ref_by_word.get(slot.word)
        if ref is None or alpha_eq(it.term, ref):
            feedback.append(SlotFeedback(section, slot.word, CORRECT, it.term))
        elif _list_subset(it.term, ref):
            feedback.append(SlotFeedback(section, slot.word, INCOMPLETE, it.term))
        elif any(alpha_eq(it.term, r.term) for r in (reference or [])
                 if r.word != slot.word):
            feedback.append(SlotFeedback(section, slot.word, WRONG_SLOT, it.term))
        else:
            feedback.append(SlotFeedback(section, slot.word, INCOMPLETE, it.term))
    superfluous = [it for i, it in enumerate(items) if i not in used]
    complete = (all(s.status == CORRECT for s in feedback)
                and not superfluous)
    return ModelFeedback(feedback, superfluous, complete)


def _model_env(problem: Problem, items: list[ModelItem]) -> dict[str, Term]:
    """Instantiation of the model's schema variables by the items."""
    env = {}
    by_word = {it.word: it.term for it in items}
    for _, slot in problem.model.slots():
        if isinstance(slot.term, Var) and slot.word in by_word:
            env[slot.term.name] = by_word[slot.word]
    return env


def preconditions_hold(store: KnowledgeStore, problem: Problem,
                       items: list[ModelItem], ctx: Context) -> bool:
    from .terms import subst_vars
    cond_rs = store.condition_ruleset_for(problem.theory)
    env = _model_env(problem, items)
    for w in problem.model.where:
        inst = subst_vars(w, env)
        nf = normalize(cond_rs, inst, ctx).final if cond_rs else inst
        if not alpha_eq(nf, TRUE):
            return False
    return True


def refine(store: KnowledgeStore, items: list[ModelItem],
           start_path) -> Optional[tuple[str, ...]]:
    """Depth-first descent from start_path: enter a child iff its model
    matches the items and all its preconditions normalise to true;
    deepest match wins, first child in authored order breaks ties."""
    start = store.problems.get(tuple(start_path))
    if start is None:
        raise NotFound("problem", list(start_path))

    def matches(p: Problem) -> bool:
        ctx = store.ctx(p.theory)
        fb = match_model(p, items, ctx)
        if not all(s.status == CORRECT for s in fb.slots):
            return False
        return preconditions_hold(store, p, items, ctx)

    if not matches(start):
        return None
    node = start
    while True:
        for child in node.children:
            if matches(child):
                node = child
                break
        else:
            return node.path


def guard_matches(guard: Model, model: Model) -> bool:
    """Every slot word of the problem model appears in the guard with
    the same type (the guard may require more, fed by the
    formalisation)."""
    guard_typs = guard.slot_typs()
    for word, ty in model.slot_typs().items():
        if word not in guard_typs or guard_typs[word] != ty:
            return False
    return True


def methods_for(store: KnowledgeStore, problem_path) -> list[tuple[str, ...]]:
    """Method paths whose guard matches the problem's model schema, in
    stable authored order."""
    problem = store.problems.get(tuple(problem_path))
    if problem is None:
        raise NotFound("problem", list(problem_path))
    out = []

    def walk(m: Method):
        if guard_matches(m.guard, problem.model):
            out.append(m.path)
        for c in m.children:
            walk(c)
    for root in store.method_roots:
        walk(root)
    return out


def lookup(store: KnowledgeStore, ref: RefTriple):
    return store.lookup(ref)


# ---------------------------------------------------------------------------
# bundle loading

_SECTION_RE = re.compile(r"^(theory|problem|method|example|ruleset)\s+(\S+)\s*$")


def _split_top(text: str, sep: str) -> list[str]:
    """Split on a separator at bracket depth zero."""
    parts = []
    depth = 0
    cur = []
    i = 0
    while i < len(text):
        c = text[i]
        if c in "([":
            depth += 1
        elif c in ")]":
            depth -= 1
        if depth == 0 and text.startswith(sep, i):
            parts.append("".join(cur))
            cur = []
            i += len(sep)
            continue
        cur.append(c)
        i += 1
    parts.append("".join(cur))
    return parts


def _parse_rule_line(line: str, ctx: Context) -> Rule:
    name, _, rest = line.partition(":")
    name = name.strip()
    if not rest:
        raise KnowledgeError(f"bad rule line: {line!r}")
    halves = _split_top(rest, "==")
    if len(halves) != 2:
        raise KnowledgeError(f"rule {name}: expected exactly one '==': {line!r}")
    lhs_text = halves[0].strip()
    rhs_text = halves[1].strip()
    cond_texts: list[str] = []
    if_split = _split_top(rhs_text, " if ")
    if len(if_split) == 2:
        rhs_text = if_split[0].strip()
        cond_texts = [c.strip() for c in _split_top(if_split[1], ",")]
    strict_ctx = ctx.copy()
    strict_ctx.strict = True
    lhs = parse(lhs_text, strict_ctx, keep_tyvars=True)
    conds = tuple(parse(c, strict_ctx, expected=BOOL, keep_tyvars=True)
                  for c in cond_texts)
    m = re.match(r"^eval\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:,(.*))?\)$", rhs_text)
    if m:
        builtin_id = m.group(1)
        extras = tuple(parse(e.strip(), strict_ctx, keep_tyvars=True)
                       for e in _split_top(m.group(2), ",")) if m.group(2) else ()
        return Rule(name, lhs, None, conds, "evaluator", builtin_id,
                    extras).with_open_vars()
    rhs = parse(rhs_text, strict_ctx, keep_tyvars=True)
    return Rule(name, lhs, rhs, conds).with_open_vars()


def _parse_slot_list(text: str, ctx: Context, strict: bool = False) -> list[ModelItem]:
    items = []
    text = text.strip()
    if not text:
        return items
    pctx = ctx.copy()
    pctx.strict = strict
    for part in _split_top(text, ","):
        part = part.strip()
        word, _, term_text = part.partition(" ")
        if not term_text.strip():
            raise KnowledgeError(f"model item needs a word and a term: {part!r}")
        items.append(ModelItem(word, parse(term_text.strip(), pctx)))
    return items


class _Block:
    def __init__(self, kind: str, name: str, source: str):
        self.kind = kind
        self.name = name
        self.source = source
        self.directives: list[tuple[str, str]] = []
        self.program_lines: Optional[list[str]] = None


def _read_blocks(path: FsPath) -> list[_Block]:
    blocks: list[_Block] = []
    cur: Optional[_Block] = None
    in_program = False
    for raw in path.read_text().splitlines():
        line = raw.rstrip()
        if in_program:
            if line.strip() == "end":
                in_program = False
            else:
                cur.program_lines.append(raw)
            continue
        if not line.strip() or line.strip().startswith("#"):
            continue
        m = _SECTION_RE.match(line)
        if m and not line.startswith(" "):
            cur = _Block(m.group(1), m.group(2), str(path))
            blocks.append(cur)
            continue
        if cur is None:
            raise KnowledgeError(f"{path}: directive outside block: {line!r}")
        stripped = line.strip()
        if stripped == "program":
            cur.program_lines = []
            in_program = True
            continue
        key, _, value = stripped.partition(" ")
        cur.directives.append((key, value.strip()))
    return blocks


def load_bundle(content_dir) -> KnowledgeStore:
    """Load a content bundle directory into an immutable store."""
    content_dir = FsPath(content_dir)
    store = KnowledgeStore()
    theory_blocks: dict[str, _Block] = {}
    ruleset_blocks: list[tuple[str, _Block]] = []  # (owning theory, block)
    problem_blocks: list[_Block] = []
    method_blocks: list[_Block] = []
    example_blocks: list[_Block] = []

    for path in sorted(content_dir.glob("*.thy")) + sorted(content_dir.glob("*.pbl")) \
            + sorted(content_dir.glob("*.met")) + sorted(content_dir.glob("*.exs")):
        current_theory = None
        for block in _read_blocks(path):
            if block.kind == "theory":
                if block.name in theory_blocks:
                    raise KnowledgeError(f"duplicate theory {block.name}")
                theory_blocks[block.name] = block
                current_theory = block.name
            elif block.kind == "ruleset":
                if current_theory is None:
                    raise KnowledgeError(f"{path}: ruleset outside a theory")
                ruleset_blocks.append((current_theory, block))
            elif block.kind == "problem":
                problem_blocks.append(block)
            elif block.kind == "method":
                method_blocks.append(block)
            elif block.kind == "example":
                example_blocks.append(block)

    _load_theories(store, theory_blocks, ruleset_blocks)
    _load_problems(store, problem_blocks)
    _load_methods(store, method_blocks)
    _load_examples(store, example_blocks)
    _check_store(store)
    return store


def load_bundle_file(store: KnowledgeStore, path) -> list[str]:
    """Add the example blocks of one .exs file to a loaded store;
    returns the new example ids."""
    blocks = [b for b in _read_blocks(FsPath(path)) if b.kind == "example"]
    _load_examples(store, blocks)
    return [b.name for b in blocks]


def _topo_theories(blocks: dict[str, _Block]) -> list[str]:
    imports = {}
    for name, b in blocks.items():
        imps = []
        for k, v in b.directives:
            if k == "imports" and v:
                imps = [s.strip() for s in v.split(",")]
        imports[name] = imps
    order: list[str] = []
    state: dict[str, int] = {}

    def visit(n: str, trail):
        if state.get(n) == 2:
            return
        if state.get(n) == 1:
            raise KnowledgeError(f"theory import cycle: {' -> '.join(trail + [n])}")
        if n not in blocks:
            raise NotFound("theory", n)
        state[n] = 1
        for i in imports[n]:
            visit(i, trail + [n])
        state[n] = 2
        order.append(n)
    for n in blocks:
        visit(n, [])
    return order


def _load_theories(store, theory_blocks, ruleset_blocks):
    order = _topo_theories(theory_blocks)
    rulesets_by_theory: dict[str, list[_Block]] = {}
    for owner, block in ruleset_blocks:
        rulesets_by_theory.setdefault(owner, []).append(block)

    for name in order:
        block = theory_blocks[name]
        thy = Theory(name)
        for k, v in block.directives:
            if k == "imports" and v:
                thy.imports = [s.strip() for s in v.split(",")]
        store.theories[name] = thy
        store.theory_order.append(name)
        ctx = store.ctx(name)
        mode = None
        for k, v in block.directives:
            if k in ("constants", "rules", "explanations") and not v:
                mode = k
                continue
            if k == "imports":
                continue
            if k == "condition-ruleset":
                thy.condition_ruleset = v
                continue
            if mode == "constants":
                cname, _, typ_text = f"{k} {v}".partition("::")
                thy.constants[cname.strip()] = parse_typ_text(typ_text.strip())
                ctx.constants[cname.strip()] = thy.constants[cname.strip()]
            elif mode == "rules":
                rule = _parse_rule_line(f"{k} {v}", ctx)
                _check_rule_constants(store, thy, rule, ctx)
                if rule.name in store._rules:
                    raise KnowledgeError(f"duplicate rule {rule.name}")
                thy.rules[rule.name] = rule
                store._rules[rule.name] = (name, rule)
            elif mode == "explanations":
                rid, _, doc = f"{k} {v}".partition(":")
                thy.explanations[rid.strip()] = doc.strip()
            else:
                raise KnowledgeError(
                    f"theory {name}: directive {k!r} outside a section")

        for rblock in rulesets_by_theory.get(name, []):
            rs = _parse_ruleset(store, rblock)
            if rblock.name in store._rulesets:
                raise KnowledgeError(f"duplicate ruleset {rblock.name}")
            thy.rulesets[rblock.name] = rs
            store._rulesets[rblock.name] = (name, rs)


def _check_rule_constants(store, thy, rule, ctx):
    from .terms import BUILTIN_SIGNATURES, num_value, Const
    names = consts_of(rule.lhs)
    if rule.rhs is not None:
        names |= consts_of(rule.rhs)
    for c in rule.conditions:
        names |= consts_of(c)
    for n in names:
        if n in ctx.constants or n in BUILTIN_SIGNATURES:
            continue
        if num_value(Const(n, None)) is None:
            try:
                from fractions import Fraction
                Fraction(n)
            except (ValueError, ZeroDivisionError):
                raise KnowledgeError(
                    f"rule {rule.name}: constant {n!r} not declared in "
                    f"{thy.name} or its imports")


def _parse_ruleset(store: KnowledgeStore, block: _Block) -> Ruleset:
    strategy = "innermost"
    bound = 10000
    cond = None
    inst: set[str] = set()
    rules: list[Rule] = []
    for k, v in block.directives:
        if k == "strategy":
            if v not in ("innermost", "outermost"):
                raise KnowledgeError(f"ruleset {block.name}: bad strategy {v!r}")
            strategy = v
        elif k == "bound":
            bound = int(v)
        elif k == "conditions":
            cond = v
        elif k == "inst":
            inst = {s.strip() for s in v.split(",")}
        elif k == "include":
            other = store.ruleset(v.strip())
            if other is None:
                raise NotFound("ruleset", v.strip())
            rules.extend(other.rules)
            inst |= other.inst_vars
        elif k == "rules":
            for rn in v.split(","):
                rn = rn.strip()
                rule = store.rule(rn)
                if rule is None:
                    raise NotFound("rule", rn)
                rules.append(rule)
        else:
            raise KnowledgeError(f"ruleset {block.name}: unknown directive {k!r}")
    cond_rs = None
    if cond is not None:
        cond_rs = store.ruleset(cond)
        if cond_rs is None:
            raise NotFound("ruleset", cond)
    return Ruleset(block.name, rules, strategy, cond_rs, bound, inst)


def _model_from_directives(block: _Block, ctx: Context, parent: Optional[Model],
                           theory: str) -> tuple[Model, Optional[Term], Optional[str]]:
    model = parent.copy() if parent is not None else Model()
    where_texts: Optional[list[str]] = None
    post_text: Optional[str] = None
    declared_theory = None
    for k, v in block.directives:
        if k == "theory":
            declared_theory = v
        elif k == "given":
            model.given = _parse_slot_list(v, ctx)
        elif k == "find":
            model.find = _parse_slot_list(v, ctx)
        elif k == "relate":
            model.relate = _parse_slot_list(v, ctx)
        elif k == "where":
            where_texts = [s.strip() for s in _split_top(v, ",") if s.strip()]
        elif k == "postcond":
            post_text = v
    schema_ctx = ctx.copy()
    schema_ctx.variables.update(model.schema_vars())
    schema_ctx.strict = True
    if where_texts is not None:
        model.where = [parse(w, schema_ctx, expected=BOOL) for w in where_texts]
    post = parse(post_text, schema_ctx, expected=BOOL) if post_text else None
    return model, post, declared_theory


def _load_problems(store: KnowledgeStore, blocks: list[_Block]):
    for block in blocks:
        path = tuple(block.name.split("/"))
        parent = store.problems.get(path[:-1]) if len(path) > 1 else None
        if len(path) > 1 and parent is None:
            raise KnowledgeError(f"problem {block.name}: parent not loaded first")
        theory = parent.theory if parent else "Base"
        for k, v in block.directives:
            if k == "theory":
                theory = v
        ctx = store.ctx(theory)
        model, post, _ = _model_from_directives(
            block, ctx, parent.model if parent else None, theory)
        if post is None and parent is not None:
            post = parent.postcondition
        problem = Problem(path, theory, model, post)
        if parent is not None:
            _check_refinement(parent, problem)
            parent.children.append(problem)
        else:
            store.problem_roots.append(problem)
        if path in store.problems:
            raise KnowledgeError(f"duplicate problem {block.name}")
        store.problems[path] = problem


def _check_refinement(parent: Problem, child: Problem):
    for w in parent.model.where:
        if not any(alpha_eq(w, cw) for cw in child.model.where):
            raise KnowledgeError(
                f"problem {'/'.join(child.path)}: preconditions must be a "
                f"superset of the parent's (missing {pretty(w)})")


def _load_methods(store: KnowledgeStore, blocks: list[_Block]):
    deferred = []
    for block in blocks:
        path = tuple(block.name.split("/"))
        parent = store.methods.get(path[:-1]) if len(path) > 1 else None
        if len(path) > 1 and parent is None:
            raise KnowledgeError(f"method {block.name}: parent not loaded first")
        theory = parent.theory if parent else "Base"
        rulesets_used: list[str] = []
        for k, v in block.directives:
            if k == "theory":
                theory = v
            elif k == "rulesets":
                rulesets_used = [s.strip() for s in v.split(",")]
        ctx = store.ctx(theory)
        guard, _, _ = _model_from_directives(
            block, ctx, parent.guard if parent else None, theory)
        for rs in rulesets_used:
            if store.ruleset(rs) is None:
                raise NotFound("ruleset", rs)
        method = Method(path, theory, guard,
                        "\n".join(block.program_lines or []), None, rulesets_used)
        if parent is not None:
            parent.children.append(method)
        else:
            store.method_roots.append(method)
        if path in store.methods:
            raise KnowledgeError(f"duplicate method {block.name}")
        store.methods[path] = method
        if method.program_text.strip():
            deferred.append(method)
    # programs parse after all problems/methods exist so references resolve
    for method in deferred:
        ctx = store.ctx(method.theory)
        method.program = programs.parse_program(method.program_text, store, ctx)
        _check_program_params(method)


def _check_program_params(method: Method):
    guard_params = method.params()
    prog = method.program
    if len(prog.params) != len(guard_params):
        raise KnowledgeError(
            f"method {'/'.join(method.path)}: program has {len(prog.params)} "
            f"parameters but the guard has {len(guard_params)} given+find slots")
    for (pn, pt), (gn, gt) in zip(prog.params, guard_params):
        if pn != gn or pt != gt:
            raise KnowledgeError(
                f"method {'/'.join(method.path)}: parameter {pn}::{pt} does "
                f"not match guard slot {gn}::{gt}")


def _load_examples(store: KnowledgeStore, blocks: list[_Block]):
    for block in blocks:
        title = block.name
        refs = RefTriple()
        item_texts: list[str] = []
        for k, v in block.directives:
            if k == "title":
                title = v
            elif k == "refs":
                refs = _parse_refs(v)
            elif k == "item":
                item_texts.append(v)
        thy, prob, _ = store.lookup(refs)
        ctx = store.ctx(refs.theory) if refs.theory else Context()
        slot_typs = prob.model.slot_typs() if prob else {}
        if prob is not None:
            # method guards may require slots beyond the problem model
            for mpath, m in store.methods.items():
                if refs.method and mpath == tuple(refs.method):
                    slot_typs = {**m.guard.slot_typs(), **slot_typs}
        items = []
        for text in item_texts:
            word, _, term_text = text.partition(" ")
            expected = slot_typs.get(word)
            items.append(ModelItem(word, parse(term_text.strip(), ctx,
                                               expected=expected)))
        store.examples[block.name] = Example(block.name, title, items, refs)


def _parse_refs(text: str) -> RefTriple:
    parts = _split_top(text, ",")
    if len(parts) != 3:
        raise KnowledgeError(f"refs need theory, [problem], [method]: {text!r}")
    thy = parts[0].strip()
    prob = _parse_path(parts[1].strip())
    m = parts[2].strip()
    meth = None if m == "no_met" or m == "[no_met]" else _parse_path(m)
    return RefTriple(thy, tuple(prob), tuple(meth) if meth else None)


def _parse_path(text: str) -> list[str]:
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise KnowledgeError(f"expected a [path]: {text!r}")
    return [s.strip() for s in text[1:-1].split(",") if s.strip()]


def _check_store(store: KnowledgeStore):
    for ex in store.examples.values():
        store.lookup(ex.refs)
    for m in store.methods.values():
        if m.program is not None:
            for ins in m.program.instructions:
                if ins.kind == "subproblem":
                    store.lookup(ins.ref)
