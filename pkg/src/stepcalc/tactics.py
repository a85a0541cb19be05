"""Tactic values: atomic justified actions on a calculation, with all
arguments instantiated to concrete terms and names.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .programs import RefTriple
from .rewrite import RewriteStep
from .terms import Term, alpha_eq, pretty


@dataclass(frozen=True)
class Rewrite:
    theorem: str
    assume: bool = False


@dataclass(frozen=True)
class RewriteSet:
    ruleset: str
    assume: bool = False


@dataclass(frozen=True)
class RewriteSetInst:
    inst: tuple[tuple[str, Term], ...]
    ruleset: str
    assume: bool = False


@dataclass(frozen=True)
class Substitute:
    equations: tuple[Term, ...]


@dataclass(frozen=True)
class Take:
    term: Term


@dataclass(frozen=True)
class Calculate:
    op: str


@dataclass(frozen=True)
class SubProblem:
    ref: RefTriple
    args: tuple[Term, ...]


@dataclass(frozen=True)
class CheckPostcond:
    pass


@dataclass(frozen=True)
class Derive:
    """Justification for accepted user input located by normalisation
    rather than by a single program tactic."""
    ruleset: str


@dataclass(frozen=True)
class AddGiven:
    word: str
    term: Term


@dataclass(frozen=True)
class AddFind:
    word: str
    term: Term


@dataclass(frozen=True)
class AddRelate:
    word: str
    term: Term


@dataclass(frozen=True)
class SpecifyTheory:
    name: str


@dataclass(frozen=True)
class SpecifyProblem:
    path: tuple[str, ...]


@dataclass(frozen=True)
class SpecifyMethod:
    path: tuple[str, ...]


@dataclass(frozen=True)
class RefineProblem:
    path: tuple[str, ...]  # refined problem path


Tactic = Union[Rewrite, RewriteSet, RewriteSetInst, Substitute, Take,
               Calculate, SubProblem, CheckPostcond, Derive,
               AddGiven, AddFind, AddRelate,
               SpecifyTheory, SpecifyProblem, SpecifyMethod, RefineProblem]


def tactic_eq(a: Tactic, b: Tactic) -> bool:
    if type(a) is not type(b):
        return False
    match a:
        case Take(t):
            return alpha_eq(t, b.term)
        case Substitute(eqs):
            return len(eqs) == len(b.equations) and all(
                alpha_eq(x, y) for x, y in zip(eqs, b.equations))
        case RewriteSetInst(inst, rs, fl):
            return (rs == b.ruleset and fl == b.assume
                    and len(inst) == len(b.inst)
                    and all(n1 == n2 and alpha_eq(t1, t2)
                            for (n1, t1), (n2, t2) in zip(inst, b.inst)))
        case SubProblem(ref, args):
            return (ref == b.ref and len(args) == len(b.args)
                    and all(alpha_eq(x, y) for x, y in zip(args, b.args)))
        case AddGiven(w, t) | AddFind(w, t) | AddRelate(w, t):
            return w == b.word and alpha_eq(t, b.term)
        case _:
            return a == b


def tactic_label(t: Tactic) -> str:
    match t:
        case Rewrite(thm, _):
            return f"Rewrite {thm}"
        case RewriteSet(rs, _):
            return f"Rewrite_Set {rs}"
        case RewriteSetInst(inst, rs, _):
            pairs = ", ".join(f"({n}, {pretty(v)})" for n, v in inst)
            return f"Rewrite_Set_Inst [{pairs}] {rs}"
        case Substitute(eqs):
            return f"Substitute [{', '.join(pretty(e) for e in eqs)}]"
        case Take(term):
            return f"Take {pretty(term)}"
        case Calculate(op):
            return f"Calculate {op}"
        case SubProblem(ref, _):
            return f"SubProblem {ref}"
        case CheckPostcond():
            return "Check_Postcond"
        case Derive(rs):
            return f"Derive {rs}"
        case AddGiven(w, term):
            return f"Add_Given {w} {pretty(term)}"
        case AddFind(w, term):
            return f"Add_Find {w} {pretty(term)}"
        case AddRelate(w, term):
            return f"Add_Relate {w} {pretty(term)}"
        case SpecifyTheory(n):
            return f"Specify_Theory {n}"
        case SpecifyProblem(p):
            return f"Specify_Problem [{', '.join(p)}]"
        case SpecifyMethod(p):
            return f"Specify_Method [{', '.join(p)}]"
        case RefineProblem(p):
            return f"Refine_Problem [{', '.join(p)}]"
    return str(t)


# ---------------------------------------------------------------------------
# step evidence (replayable justification)

@dataclass(frozen=True)
class RewriteEvidence:
    steps: tuple[RewriteStep, ...]


@dataclass(frozen=True)
class DerivationEvidence:
    """Two-sided chain meeting at a common normal form; reversed
    entries replay from their own `before` side."""
    entries: tuple[tuple[RewriteStep, bool], ...]  # (step, reversed)


@dataclass(frozen=True)
class TakeEvidence:
    term: Term


@dataclass(frozen=True)
class SubstituteEvidence:
    equations: tuple[Term, ...]


@dataclass(frozen=True)
class ResultEvidence:
    term: Term


Evidence = Union[RewriteEvidence, DerivationEvidence, TakeEvidence,
                 SubstituteEvidence, ResultEvidence]
