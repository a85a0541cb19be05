"""The front-end boundary: a versioned request/response and
notification protocol over length-delimited frames, with an equivalent
HTTP binding for the web worksheet.

Terms cross the wire as presentation ASTs with fixity, never as raw
internal terms. All calculation traffic passes through dialog
mediation. Requests within one worksheet are serialised; sessions are
independent.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from . import calctree, interpreter, knowledge, specify, tactics
from .calctree import CalcState, Position, SpecNode, StepNode, audit
from .dialog import (DialogError, DialogEvent, Session, SessionManager,
                     shape_payload)
from .interpreter import (Accepted, CalcError, CalcFinished, Cancelled,
                          ProgramStuck, Rejected, TacticNotApplicable)
from .knowledge import KnowledgeStore, ModelItem, match_model
from .programs import RefTriple
from .specify import Formalisation, PlanDiagnosis, sequence_subproblems, plan_node_for
from .tactics import (Rewrite, RewriteSet, RewriteSetInst, Tactic,
                      tactic_label)
from .terms import (Context, ParseFailure, Term, TermError, TypeMismatch,
                    ast_to_json, parse, pretty, term_to_ast)

PROTOCOL_VERSION = 1


class ServiceError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def term_payload(t: Term) -> dict:
    return {"text": pretty(t), "ast": ast_to_json(term_to_ast(t))}


def tactic_payload(t: Tactic) -> dict:
    out = {"kind": type(t).__name__, "label": tactic_label(t)}
    match t:
        case tactics.Rewrite(thm, fl):
            out.update(theorem=thm, assume=fl)
        case tactics.RewriteSet(rs, fl):
            out.update(ruleset=rs, assume=fl)
        case tactics.RewriteSetInst(inst, rs, fl):
            out.update(ruleset=rs, assume=fl,
                       inst=[[n, term_payload(v)] for n, v in inst])
        case tactics.Substitute(eqs):
            out.update(equations=[term_payload(e) for e in eqs])
        case tactics.Take(term):
            out.update(term=term_payload(term))
        case tactics.Calculate(op):
            out.update(op=op)
        case tactics.SubProblem(ref, args):
            out.update(ref=ref_payload(ref), args=[term_payload(a) for a in args])
        case tactics.Derive(rs):
            out.update(ruleset=rs)
        case tactics.AddGiven(w, term) | tactics.AddFind(w, term) \
                | tactics.AddRelate(w, term):
            out.update(word=w, term=term_payload(term))
        case tactics.SpecifyTheory(n):
            out.update(name=n)
        case tactics.SpecifyProblem(p) | tactics.SpecifyMethod(p) \
                | tactics.RefineProblem(p):
            out.update(path=list(p))
    return out


def ref_payload(ref: RefTriple) -> dict:
    return {"theory": ref.theory,
            "problem": list(ref.problem) if ref.problem else None,
            "method": list(ref.method) if ref.method else None}


def position_payload(pos: Position) -> dict:
    return {"path": list(pos.path), "slot": pos.slot, "index": pos.index}


def position_from_payload(d: dict) -> Position:
    return Position(tuple(d["path"]), d["slot"], d.get("index"))


class Worksheet:
    def __init__(self, worksheet_id: str, state: CalcState, example_id: str):
        self.worksheet_id = worksheet_id
        self.state = state
        self.example_id = example_id
        self.lock = threading.Lock()


class ServiceCore:
    """Transport-independent dispatch; both bindings call handle()."""

    def __init__(self, store: KnowledgeStore, manager: SessionManager):
        self.store = store
        self.manager = manager
        self._notifications: dict[str, list[dict]] = {}
        self._inflight: dict[tuple[str, object], threading.Event] = {}
        self._lock = threading.Lock()

    # -- envelope ------------------------------------------------------------

    def handle(self, message: dict) -> dict:
        mid = message.get("id")
        method = message.get("method", "")
        try:
            if message.get("kind") != "request":
                raise ServiceError("bad-request", "kind must be 'request'")
            payload = message.get("payload") or {}
            handler = getattr(self, "op_" + method.replace(".", "_").replace("-", "_"),
                              None)
            if handler is None:
                raise ServiceError("method-not-found", f"unknown method {method!r}")
            result = handler(payload, mid)
        except ServiceError as e:
            result = {"error": {"code": e.code, "message": e.message}}
        except (ParseFailure, TypeMismatch) as e:
            result = {"error": {"code": "parse-error", "message": str(e)}}
        except (CalcFinished,) as e:
            result = {"error": {"code": "calc-finished", "message": str(e)}}
        except (ProgramStuck,) as e:
            result = {"error": {"code": "program-stuck", "message": str(e)}}
        except (TacticNotApplicable,) as e:
            result = {"error": {"code": "tactic-not-applicable", "message": str(e)}}
        except Cancelled as e:
            result = {"error": {"code": "cancelled", "message": str(e)}}
        except (CalcError, TermError, DialogError, knowledge.KnowledgeError,
                calctree.CtreeError, specify.SpecifyError) as e:
            result = {"error": {"code": "engine-error", "message": str(e)}}
        return {"v": PROTOCOL_VERSION, "kind": "response", "id": mid,
                "method": method, "payload": result}

    def notify(self, session_id: str, method: str, payload: dict):
        with self._lock:
            self._notifications.setdefault(session_id, []).append(
                {"v": PROTOCOL_VERSION, "kind": "notification",
                 "method": method, "payload": payload})

    def drain_notifications(self, session_id: str) -> list[dict]:
        with self._lock:
            out = self._notifications.get(session_id, [])
            self._notifications[session_id] = []
        return out

    # -- helpers -------------------------------------------------------------

    def _session(self, payload) -> Session:
        sid = payload.get("session")
        if not sid:
            raise ServiceError("bad-request", "missing session")
        try:
            return self.manager.session(sid)
        except DialogError as e:
            raise ServiceError("unknown-session", str(e)) from None

    def _worksheet(self, payload) -> tuple[Session, Worksheet]:
        session = self._session(payload)
        wid = payload.get("worksheet")
        wd = session.worksheets.get(wid)
        if wd is None or wd.calc_ref is None:
            raise ServiceError("unknown-worksheet", f"worksheet {wid!r} not open")
        return session, wd.calc_ref

    def _mediate(self, session: Session, wid: str, kind: str, payload: dict) -> dict:
        decision = self.manager.mediate(session, wid, DialogEvent(kind, payload))
        return decision.payload

    def _share_step(self, session: Session, ws: Worksheet, step_payload: dict):
        shaped = self._mediate(session, ws.worksheet_id, "step-shared",
                               step_payload)
        self.notify(session.session_id, "step-shared",
                    {"worksheet": ws.worksheet_id, **shaped})

    def _ctx_for(self, ws: Worksheet) -> Context:
        return ws.state.context

    # -- meta ----------------------------------------------------------------

    def op_meta_health(self, payload, mid):
        return {"version": PROTOCOL_VERSION, "engine": "stepcalc"}

    def op_cancel(self, payload, mid):
        session = self._session(payload)
        target = payload.get("target")
        with self._lock:
            ev = self._inflight.get((session.session_id, target))
        if ev is not None:
            ev.set()
            return {"cancelled": True}
        return {"cancelled": False}

    def _cancel_event(self, session: Session, mid) -> threading.Event:
        ev = threading.Event()
        with self._lock:
            self._inflight[(session.session_id, mid)] = ev
        return ev

    def _clear_cancel(self, session: Session, mid):
        with self._lock:
            self._inflight.pop((session.session_id, mid), None)

    # -- sessions ------------------------------------------------------------

    def op_session_new(self, payload, mid):
        user = payload.get("user", "anonymous")
        session = self.manager.new_session(user)
        return {"session": session.session_id, "user": user,
                "expertise": session.user_model.expertise, "mode": session.mode}

    def op_session_close(self, payload, mid):
        session = self._session(payload)
        self.manager.close_session(session.session_id)
        return {"closed": True}

    def op_session_events(self, payload, mid):
        session = self._session(payload)
        return {"events": self.drain_notifications(session.session_id)}

    def op_dialog_set_mode(self, payload, mid):
        session = self._session(payload)
        mode = payload.get("mode")
        if mode not in ("normal", "exam"):
            raise ServiceError("bad-request", "mode must be normal or exam")
        session.mode = mode
        return {"mode": mode}

    def op_dialog_user_model(self, payload, mid):
        session = self._session(payload)
        return session.user_model.to_json()

    def op_dialog_set_user_model(self, payload, mid):
        session = self._session(payload)
        model = session.user_model
        if "expertise" in payload:
            model.expertise = payload["expertise"]
        for key, value in (payload.get("familiarity") or {}).items():
            model.familiarity[key] = value
        for key, value in (payload.get("traits") or {}).items():
            model.traits[key] = value
        self.manager.save_user(model)
        return model.to_json()

    def op_log_query(self, payload, mid):
        events = self.manager.log_query(payload.get("session"),
                                        payload.get("worksheet"),
                                        payload.get("kind"))
        return {"events": [e.to_json() for e in events]}

    # -- knowledge browsing ---------------------------------------------------

    def op_know_examples(self, payload, mid):
        out = []
        for ex in self.store.examples.values():
            out.append({"id": ex.example_id, "title": ex.title,
                        "refs": ref_payload(ex.refs)})
        return {"examples": out}

    def op_know_tree(self, payload, mid):
        kind = payload.get("kind")
        if kind == "theory":
            def render(node):
                name, children = node
                return {"name": name, "children": [render(c) for c in children]}
            return {"tree": [render(r) for r in self.store.theory_tree()]}
        if kind == "problem":
            return {"tree": [self._problem_node(p) for p in self.store.problem_roots]}
        if kind == "method":
            return {"tree": [self._method_node(m) for m in self.store.method_roots]}
        raise ServiceError("bad-request", f"unknown tree kind {kind!r}")

    def _problem_node(self, p) -> dict:
        return {"name": p.path[-1], "path": list(p.path),
                "children": [self._problem_node(c) for c in p.children]}

    def _method_node(self, m) -> dict:
        return {"name": m.path[-1], "path": list(m.path),
                "children": [self._method_node(c) for c in m.children]}

    def op_know_entry(self, payload, mid):
        kind = payload.get("kind")
        if kind == "theory":
            thy = self.store.theory(payload.get("path", [""])[0])
            return {"name": thy.name, "imports": thy.imports,
                    "constants": {n: str(t) for n, t in thy.constants.items()},
                    "rules": [self._rule_payload(r) for r in thy.rules.values()],
                    "rulesets": sorted(thy.rulesets),
                    "explanations": thy.explanations}
        path = tuple(payload.get("path") or ())
        if kind == "problem":
            p = self.store.problems.get(path)
            if p is None:
                raise ServiceError("not-found", f"problem {list(path)}")
            return {"path": list(p.path), "theory": p.theory,
                    "model": self._model_schema(p.model),
                    "postcondition": pretty(p.postcondition)
                    if p.postcondition is not None else None}
        if kind == "method":
            m = self.store.methods.get(path)
            if m is None:
                raise ServiceError("not-found", f"method {list(path)}")
            return {"path": list(m.path), "theory": m.theory,
                    "guard": self._model_schema(m.guard),
                    "rulesets": m.rulesets_used,
                    "program": m.program_text or None}
        raise ServiceError("bad-request", f"unknown entry kind {kind!r}")

    def _rule_payload(self, r) -> dict:
        out = {"name": r.name, "lhs": pretty(r.lhs), "kind": r.kind}
        if r.rhs is not None:
            out["rhs"] = pretty(r.rhs)
        if r.builtin_id:
            out["builtin"] = r.builtin_id
        if r.conditions:
            out["conditions"] = [pretty(c) for c in r.conditions]
        return out

    def op_know_rules(self, payload, mid):
        session_id = payload.get("session")
        name = payload.get("ruleset")
        rs = self.store.ruleset(name)
        if rs is None:
            raise ServiceError("not-found", f"ruleset {name!r}")
        result = {"name": rs.name, "strategy": rs.strategy,
                  "rules": [self._rule_payload(r) for r in rs.rules]}
        if session_id:
            session = self._session(payload)
            wid = payload.get("worksheet", "")
            if wid in session.worksheets:
                return self._mediate(session, wid, "explanation-request", result)
        return result

    def _model_schema(self, model) -> dict:
        def items(section):
            return [{"word": it.word, "schema": pretty(it.term)}
                    for it in section]
        return {"given": items(model.given),
                "where": [pretty(w) for w in model.where],
                "find": items(model.find),
                "relate": items(model.relate)}

    # -- calculations ----------------------------------------------------------

    def op_calc_init(self, payload, mid):
        session = self._session(payload)
        wid = payload.get("worksheet")
        if not wid:
            raise ServiceError("bad-request", "missing worksheet")
        example_id = payload.get("example")
        ex = self.store.examples.get(example_id)
        if ex is None:
            raise ServiceError("not-found", f"example {example_id!r}")
        state = interpreter.init_calc(self.store,
                                      Formalisation(list(ex.items), ex.refs))
        wd = self.manager.open_worksheet(session, wid)
        wd.calc_ref = Worksheet(wid, state, example_id)
        return {"worksheet": wid, "snapshot": self.snapshot(session, wd.calc_ref)}

    def op_calc_snapshot(self, payload, mid):
        session, ws = self._worksheet(payload)
        with ws.lock:
            return {"snapshot": self.snapshot(session, ws)}

    def op_calc_next(self, payload, mid):
        session, ws = self._worksheet(payload)
        cancel = self._cancel_event(session, mid)
        try:
            with ws.lock:
                try:
                    result = interpreter.next_step(ws.state, self.store, cancel)
                except CalcFinished:
                    return self._mediate(session, ws.worksheet_id, "next-request",
                                         {"finished": True})
                shaped = self._mediate(
                    session, ws.worksheet_id, "next-request",
                    self._next_payload(result))
                if "blocked" not in shaped:
                    ws.state = result.state
                    self._share_step(session, ws, self._next_payload(result))
                return shaped
        finally:
            self._clear_cancel(session, mid)

    def _next_payload(self, result) -> dict:
        payload = {"tactic": tactic_payload(result.tactic),
                   "position": position_payload(result.state.position),
                   "status": result.state.tree.status}
        if result.term is not None:
            payload["formula"] = pretty(result.term)
            payload["ast"] = ast_to_json(term_to_ast(result.term))
        return payload

    def op_calc_input_formula(self, payload, mid):
        session, ws = self._worksheet(payload)
        text = payload.get("text", "")
        cancel = self._cancel_event(session, mid)
        try:
            with ws.lock:
                term = parse(text, ws.state.context.copy())
                result = interpreter.input_formula(ws.state, self.store, term,
                                                   cancel=cancel)
                if isinstance(result, Accepted):
                    ws.state = result.state
                    raw = {"accepted": True, "formula": pretty(term),
                           "ast": ast_to_json(term_to_ast(term)),
                           "derivation": self._derivation_payload(result),
                           "located": [tactic_payload(t) for t in result.located]}
                    shaped = self._mediate(session, ws.worksheet_id,
                                           "input-result", raw)
                    self._share_step(session, ws,
                                     {"formula": pretty(term), "origin": "user"})
                    return shaped
                raw = {"accepted": False,
                       "reason": "no derivation found from the current formula"}
                return self._mediate(session, ws.worksheet_id, "input-result", raw)
        finally:
            self._clear_cancel(session, mid)

    def _derivation_payload(self, accepted: Accepted) -> list[dict]:
        out = []
        entries = getattr(accepted.derivation, "entries", ())
        for step, reverse in entries:
            out.append({"rule": step.rule_name, "reversed": reverse,
                        "before": pretty(step.before),
                        "after": pretty(step.after)})
        return out

    def op_calc_input_tactic(self, payload, mid):
        session, ws = self._worksheet(payload)
        with ws.lock:
            tac = self._tactic_from_payload(payload.get("tactic") or {}, ws)
            state = interpreter.input_tactic(ws.state, self.store, tac)
            ws.state = state
            node = state.node_at(state.position.path)
            last = node.last_formula()
            raw = {"accepted": True, "tactic": tactic_payload(tac)}
            if last is not None:
                raw["formula"] = pretty(last)
                raw["ast"] = ast_to_json(term_to_ast(last))
            shaped = self._mediate(session, ws.worksheet_id, "input-result", raw)
            self._share_step(session, ws, dict(raw, origin="user"))
            return shaped

    def _tactic_from_payload(self, d: dict, ws: Worksheet) -> Tactic:
        kind = d.get("kind")
        ctx = ws.state.context.copy()

        def term_of(v):
            return parse(v["text"] if isinstance(v, dict) else v, ctx)

        if kind == "Rewrite":
            return Rewrite(d["theorem"], bool(d.get("assume", False)))
        if kind == "RewriteSet":
            return RewriteSet(d["ruleset"], bool(d.get("assume", False)))
        if kind == "RewriteSetInst":
            inst = tuple((n, term_of(v)) for n, v in d.get("inst", []))
            return RewriteSetInst(inst, d["ruleset"], bool(d.get("assume", False)))
        if kind == "Take":
            return tactics.Take(term_of(d.get("term", "")))
        if kind == "Substitute":
            return tactics.Substitute(tuple(term_of(e)
                                            for e in d.get("equations", [])))
        if kind == "Calculate":
            return tactics.Calculate(d["op"])
        if kind == "SubProblem":
            ref = d.get("ref") or {}
            triple = RefTriple(ref.get("theory"),
                               tuple(ref["problem"]) if ref.get("problem") else None,
                               tuple(ref["method"]) if ref.get("method") else None)
            return tactics.SubProblem(triple, tuple(term_of(a)
                                                    for a in d.get("args", [])))
        if kind == "CheckPostcond":
            return tactics.CheckPostcond()
        if kind == "Derive":
            return tactics.Derive(d["ruleset"])
        if kind in ("AddGiven", "AddFind", "AddRelate"):
            cls = {"AddGiven": tactics.AddGiven, "AddFind": tactics.AddFind,
                   "AddRelate": tactics.AddRelate}[kind]
            return cls(d["word"], term_of(d.get("term", "")))
        if kind == "SpecifyTheory":
            return tactics.SpecifyTheory(d["name"])
        if kind in ("SpecifyProblem", "SpecifyMethod", "RefineProblem"):
            cls = {"SpecifyProblem": tactics.SpecifyProblem,
                   "SpecifyMethod": tactics.SpecifyMethod,
                   "RefineProblem": tactics.RefineProblem}[kind]
            return cls(tuple(d.get("path", [])))
        raise ServiceError("bad-request", f"unsupported tactic kind {kind!r}")

    def op_calc_applicable(self, payload, mid):
        session, ws = self._worksheet(payload)
        with ws.lock:
            tacs = interpreter.applicable_tactics(ws.state, self.store)
            raw = {"tactics": [tactic_payload(t) for t in tacs]}
            return self._mediate(session, ws.worksheet_id, "next-request", raw)

    def op_calc_navigate(self, payload, mid):
        _, ws = self._worksheet(payload)
        with ws.lock:
            direction = payload.get("direction", "to")
            to = position_from_payload(payload["to"]) if "to" in payload else None
            ws.state = calctree.navigate(ws.state, direction, to)
            return {"position": position_payload(ws.state.position)}

    def op_calc_prune(self, payload, mid):
        session, ws = self._worksheet(payload)
        with ws.lock:
            pos = position_from_payload(payload.get("position") or {})
            ws.state = calctree.prune_from(ws.state, pos)
            return {"snapshot": self.snapshot(session, ws)}

    def op_calc_postcondition(self, payload, mid):
        _, ws = self._worksheet(payload)
        with ws.lock:
            return {"status": interpreter.check_postcondition(ws.state, self.store)}

    def op_calc_audit(self, payload, mid):
        _, ws = self._worksheet(payload)
        with ws.lock:
            report = audit(ws.state, self.store.rule)
            return {"ok": report.ok, "failures": report.failures}

    # -- specification phase ---------------------------------------------------

    def op_spec_fill_item(self, payload, mid):
        session, ws = self._worksheet(payload)
        with ws.lock:
            state = ws.state
            path = interpreter._active_path(state)
            node = state.node_at(path)
            word = payload.get("word", "")
            term = parse(payload.get("text", ""), state.context.copy())
            problem = self.store.problems[tuple(node.formalisation.refs.problem)]
            items = [ModelItem(word, term)]
            feedback = match_model(problem, items, state.context,
                                   reference=node.formalisation.items)
            status = feedback.status_of(word) or "superfluous"
            if status == "correct":
                out = state.copy()
                out.node_at(path).spec.filled[word] = term
                ws.state = out
            raw = {"word": word, "status": status, "formula": pretty(term)}
            return self._mediate(session, ws.worksheet_id, "input-result", raw)

    def op_spec_check_preconditions(self, payload, mid):
        _, ws = self._worksheet(payload)
        with ws.lock:
            state = ws.state.copy()
            path = interpreter._active_path(state)
            node = state.node_at(path)
            ppath = node.spec.refs.problem or node.formalisation.refs.problem
            problem = self.store.problems[tuple(ppath)]
            spec = node.spec
            if not spec.filled:
                # preview against the hidden items when nothing is filled yet
                preview = node.spec.copy()
                for it in node.formalisation.items:
                    preview.filled[it.word] = it.term
                spec = preview
            checked = specify.check_preconditions(spec, self.store, problem,
                                                  state.context)
            node.spec.precond_status = checked.precond_status
            ws.state = state
            return {"where": [pretty(w) for w in problem.model.where],
                    "status": checked.precond_status}

    def op_spec_toggle_view(self, payload, mid):
        _, ws = self._worksheet(payload)
        with ws.lock:
            state = ws.state.copy()
            path = interpreter._active_path(state)
            node = state.node_at(path)
            if node.spec.refs.method is None and node.formalisation.refs.method:
                node.spec.refs = RefTriple(node.spec.refs.theory,
                                           node.spec.refs.problem,
                                           node.formalisation.refs.method)
            node.spec = specify.toggle_view(node.spec, self.store,
                                            payload.get("view"))
            ws.state = state
            model = specify.displayed_model(
                node.spec, self.store,
                fallback_problem=node.formalisation.refs.problem)
            return {"view": node.spec.view,
                    "model": self._model_schema(model) if model else None}

    def op_spec_sequence(self, payload, mid):
        paths = payload.get("paths") or []
        example_id = payload.get("example")
        ex = self.store.examples.get(example_id)
        if ex is None:
            raise ServiceError("not-found", f"example {example_id!r}")
        extra = []
        for item in payload.get("extra_items", []):
            extra.append(ModelItem(item["word"],
                                   parse(item["text"],
                                         self.store.ctx(ex.refs.theory))))
        nodes = [plan_node_for(self.store, p) for p in paths]
        result = sequence_subproblems(
            nodes, Formalisation(list(ex.items) + extra, ex.refs))
        if isinstance(result, PlanDiagnosis):
            return {"valid": False,
                    "unfed": [{"node": i, "slot": s} for i, s in result.unfed],
                    "cycle": result.cycle}
        return {"valid": True,
                "order": [list(n.problem_path) for n in result.nodes],
                "edges": [{"producer": e.producer, "consumer": e.consumer,
                           "slot": e.slot, "ambiguous": e.ambiguous}
                          for e in result.edges]}

    # -- snapshots ---------------------------------------------------------------

    def snapshot(self, session: Session, ws: Worksheet) -> dict:
        state = ws.state
        return {"worksheet": ws.worksheet_id,
                "example": ws.example_id,
                "mode": session.mode,
                "status": state.tree.status,
                "position": position_payload(state.position),
                "tree": self._node_payload(session, state.tree)}

    def _node_payload(self, session: Session, node: SpecNode) -> dict:
        problem = self.store.problems.get(
            tuple(node.formalisation.refs.problem or ()))
        model = None
        if problem is not None:
            model = {"given": self._slot_payload(node, problem.model.given),
                     "where": [pretty(w) for w in problem.model.where],
                     "where_status": list(node.spec.precond_status),
                     "find": self._slot_payload(node, problem.model.find),
                     "relate": self._slot_payload(node, problem.model.relate)}
        refs = node.spec.refs
        children = []
        for child in node.children:
            if isinstance(child, SpecNode):
                children.append(self._node_payload(session, child))
            else:
                children.append(self._step_payload(session, child))
        return {"kind": "spec", "status": node.status, "model": model,
                "view": node.spec.view,
                "refs": ref_payload(refs),
                "hidden_refs_resolved": node.formalisation.refs.theory is not None,
                "children": children,
                "result": pretty(node.result) if node.result is not None else None}

    def _slot_payload(self, node: SpecNode, section) -> list[dict]:
        out = []
        for it in section:
            filled = node.spec.filled.get(it.word)
            out.append({"word": it.word,
                        "filled": pretty(filled) if filled is not None else None})
        return out

    def _step_payload(self, session: Session, step: StepNode) -> dict:
        raw = {"kind": "step",
               "formula": pretty(step.formula),
               "ast": ast_to_json(term_to_ast(step.formula)),
               "tactic": tactic_payload(step.tactic),
               "origin": step.origin,
               "off_program": step.off_program,
               "rules": list(step.detail_rules)}
        if session.mode == "exam":
            return shape_payload(raw, "formula") | {"kind": "step",
                                                    "origin": step.origin}
        return raw


# ---------------------------------------------------------------------------
# TCP binding: <decimal byte length>\n<json frame>

def read_frame(rfile) -> Optional[dict]:
    header = rfile.readline()
    if not header:
        return None
    try:
        length = int(header.strip())
    except ValueError:
        raise ServiceError("bad-frame", f"bad length header {header!r}")
    data = rfile.read(length)
    if len(data) != length:
        return None
    return json.loads(data.decode("utf-8"))


def write_frame(wfile, message: dict):
    data = json.dumps(message).encode("utf-8")
    wfile.write(f"{len(data)}\n".encode("ascii"))
    wfile.write(data)
    wfile.flush()


class _TcpHandler(socketserver.StreamRequestHandler):
    def handle(self):
        core: ServiceCore = self.server.core
        while True:
            try:
                msg = read_frame(self.rfile)
            except (ServiceError, json.JSONDecodeError) as e:
                write_frame(self.wfile, {
                    "v": PROTOCOL_VERSION, "kind": "response", "id": None,
                    "method": "", "payload": {"error": {
                        "code": "bad-frame", "message": str(e)}}})
                return
            if msg is None:
                return
            response = core.handle(msg)
            write_frame(self.wfile, response)
            sid = (msg.get("payload") or {}).get("session")
            if sid:
                for note in core.drain_notifications(sid):
                    write_frame(self.wfile, note)


class TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, core: ServiceCore):
        super().__init__(addr, _TcpHandler)
        self.core = core


# ---------------------------------------------------------------------------
# HTTP binding: POST /rpc, GET /events?session=, static frontend files

class _HttpHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):
        pass

    def _send_json(self, obj, status=200):
        data = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "POST, GET, OPTIONS")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_POST(self):
        if self.path != "/rpc":
            self._send_json({"error": {"code": "not-found",
                                       "message": self.path}}, 404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            msg = json.loads(self.rfile.read(length).decode("utf-8"))
        except json.JSONDecodeError as e:
            self._send_json({"v": PROTOCOL_VERSION, "kind": "response",
                             "id": None, "method": "",
                             "payload": {"error": {"code": "bad-frame",
                                                   "message": str(e)}}})
            return
        self._send_json(self.server.core.handle(msg))

    def do_GET(self):
        if self.path.startswith("/events"):
            from urllib.parse import parse_qs, urlparse
            q = parse_qs(urlparse(self.path).query)
            sid = (q.get("session") or [""])[0]
            self._send_json({"events": self.server.core.drain_notifications(sid)})
            return
        if self.path in ("/health", "/"):
            if self.path == "/health":
                self._send_json({"version": PROTOCOL_VERSION})
                return
        self._serve_static()

    def _serve_static(self):
        root = self.server.static_root
        if root is None:
            self._send_json({"error": {"code": "not-found",
                                       "message": "no frontend build"}}, 404)
            return
        rel = self.path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._send_json({"error": {"code": "not-found",
                                       "message": self.path}}, 404)
            return
        data = target.read_bytes()
        ctype = {"html": "text/html", "js": "text/javascript",
                 "css": "text/css", "json": "application/json"}.get(
            target.suffix.lstrip("."), "application/octet-stream")
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class HttpServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr, core: ServiceCore, static_root: Optional[Path] = None):
        super().__init__(addr, _HttpHandler)
        self.core = core
        self.static_root = static_root


@dataclass
class ServeConfig:
    content_dir: str
    data_dir: Optional[str] = None
    host: str = "127.0.0.1"
    http_port: int = 8480
    tcp_port: Optional[int] = None  # default: http_port + 1
    static_root: Optional[str] = None


def serve(config: ServeConfig):
    """Start both bindings; returns (core, http_server, tcp_server)."""
    store = knowledge.load_bundle(config.content_dir)
    rules_path = Path(config.content_dir) / "dialog.rules"
    manager = SessionManager(config.data_dir,
                             str(rules_path) if rules_path.exists() else None)
    core = ServiceCore(store, manager)
    static = Path(config.static_root) if config.static_root else None
    http_server = HttpServer((config.host, config.http_port), core, static)
    tcp_port = config.tcp_port if config.tcp_port is not None \
        else config.http_port + 1
    tcp_server = TcpServer((config.host, tcp_port), core)
    threading.Thread(target=http_server.serve_forever, daemon=True).start()
    threading.Thread(target=tcp_server.serve_forever, daemon=True).start()
    return core, http_server, tcp_server
