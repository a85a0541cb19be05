import io
import json
import socket
import threading

import pytest
from hypothesis import given, settings, strategies as st

from stepcalc.dialog import SessionManager
from stepcalc.service import (HttpServer, PROTOCOL_VERSION, ServiceCore,
                              TcpServer, position_from_payload,
                              position_payload, read_frame, term_payload,
                              write_frame)
from stepcalc.calctree import Position
from stepcalc.terms import (Context, alpha_eq, arrow, ast_from_json,
                            ast_to_json, ast_to_term, parse, term_to_ast, REAL)


@pytest.fixture()
def core(store, content_dir, tmp_path):
    manager = SessionManager(str(tmp_path), str(content_dir / "dialog.rules"))
    return ServiceCore(store, manager)


def rpc(core, method, payload, mid=1):
    resp = core.handle({"v": PROTOCOL_VERSION, "kind": "request", "id": mid,
                        "method": method, "payload": payload})
    assert resp["kind"] == "response" and resp["id"] == mid
    assert resp["v"] == PROTOCOL_VERSION
    return resp["payload"]


def new_session(core, user="u"):
    return rpc(core, "session.new", {"user": user})["session"]


class TestEnvelope:
    def test_health(self, core):
        out = rpc(core, "meta.health", {})
        assert out["version"] == PROTOCOL_VERSION

    def test_unknown_method_answered(self, core):
        out = rpc(core, "know.nothing", {}, mid=42)
        assert out["error"]["code"] == "method-not-found"

    def test_malformed_payload_echoes_id(self, core):
        resp = core.handle({"v": 1, "kind": "request", "id": 99,
                            "method": "calc.init", "payload": {"session": "zz"}})
        assert resp["id"] == 99
        assert "error" in resp["payload"]

    def test_version_field_on_every_message(self, core):
        resp = core.handle({"kind": "request", "id": 1, "method": "meta.health",
                            "payload": {}})
        assert resp["v"] == PROTOCOL_VERSION


class TestFraming:
    def test_frame_round_trip(self):
        buf = io.BytesIO()
        msg = {"v": 1, "kind": "request", "id": 7, "method": "meta.health",
               "payload": {"x": [1, 2, {"y": "ä"}]}}
        write_frame(buf, msg)
        buf.seek(0)
        assert read_frame(buf) == msg

    def test_frame_eof(self):
        assert read_frame(io.BytesIO(b"")) is None


class TestCalcFlow:
    def test_linear_session_to_solved(self, core):
        sid = new_session(core)
        out = rpc(core, "calc.init", {"session": sid, "worksheet": "w1",
                                      "example": "linear-1"})
        assert out["snapshot"]["status"] == "specifying"
        last = None
        for i in range(60):
            step = rpc(core, "calc.next", {"session": sid, "worksheet": "w1"},
                       mid=100 + i)
            if "finished" in step or step.get("status") == "solved":
                last = step
                break
        snap = rpc(core, "calc.snapshot", {"session": sid, "worksheet": "w1"})
        assert snap["snapshot"]["status"] == "solved"
        steps = [c for c in snap["snapshot"]["tree"]["children"]
                 if c["kind"] == "step"]
        assert steps[-1]["formula"] == "x = 3"
        post = rpc(core, "calc.postcondition",
                   {"session": sid, "worksheet": "w1"})
        assert post["status"] == "satisfied"
        audit = rpc(core, "calc.audit", {"session": sid, "worksheet": "w1"})
        assert audit["ok"]

    def test_input_formula_accept_and_reject(self, core):
        sid = new_session(core)
        rpc(core, "calc.init", {"session": sid, "worksheet": "w", "example":
                                "linear-1"})
        for i in range(8):
            rpc(core, "calc.next", {"session": sid, "worksheet": "w"},
                mid=10 + i)
        ok = rpc(core, "calc.input_formula",
                 {"session": sid, "worksheet": "w", "text": "x = 3"})
        assert ok["accepted"] is True
        bad = rpc(core, "calc.input_formula",
                  {"session": sid, "worksheet": "w", "text": "x = 99"})
        assert bad["accepted"] is False

    def test_parse_error_is_distinct_from_rejection(self, core):
        sid = new_session(core)
        rpc(core, "calc.init", {"session": sid, "worksheet": "w",
                                "example": "linear-1"})
        out = rpc(core, "calc.input_formula",
                  {"session": sid, "worksheet": "w", "text": "x + * 2"})
        assert out["error"]["code"] == "parse-error"

    def test_spec_fill_item_feedback(self, core):
        sid = new_session(core)
        rpc(core, "calc.init", {"session": sid, "worksheet": "w",
                                "example": "biegelinie-1"})
        good = rpc(core, "spec.fill_item",
                   {"session": sid, "worksheet": "w", "word": "Traegerlaenge",
                    "text": "L"})
        assert good["status"] == "correct"
        extra = rpc(core, "spec.fill_item",
                    {"session": sid, "worksheet": "w", "word": "Unsinn",
                     "text": "1"})
        assert extra["status"] == "superfluous"

    def test_sequence_endpoint(self, core):
        paths = [["vonBelastungZu", "Biegelinien"],
                 ["setzeRandbedingungen", "Biegelinien"],
                 ["LINEAR", "system"]]
        extra = [{"word": "Unbekannte", "text": "[c, c_2, c_3, c_4]"}]
        ok = rpc(core, "spec.sequence", {"paths": paths,
                                         "example": "biegelinie-1",
                                         "extra_items": extra})
        assert ok["valid"] is True
        bad = rpc(core, "spec.sequence", {"paths": list(reversed(paths)),
                                          "example": "biegelinie-1",
                                          "extra_items": extra})
        assert bad["valid"] is False and bad["cycle"]

    def test_knowledge_browsing(self, core):
        examples = rpc(core, "know.examples", {})
        assert any(e["id"] == "biegelinie-1" for e in examples["examples"])
        tree = rpc(core, "know.tree", {"kind": "problem"})
        names = [n["name"] for n in tree["tree"]]
        assert "Biegelinien" in names and "equation" in names
        rules = rpc(core, "know.rules", {"ruleset": "rat_mult_div_pow"})
        assert len(rules["rules"]) == 7
        entry = rpc(core, "know.entry", {"kind": "method",
                                         "path": ["IntegrierenUndKonstanteBestimmen2"]})
        assert entry["program"]


class TestInputTactic:
    def test_role_swap_over_the_wire(self, core):
        # replay every proposal through calc.input_tactic; the run must
        # reach the same solved result as plain calc.next
        sid = new_session(core)
        rpc(core, "calc.init", {"session": sid, "worksheet": "w",
                                "example": "linear-1"})
        for i in range(40):
            menu = rpc(core, "calc.applicable",
                       {"session": sid, "worksheet": "w"}, mid=100 + i)
            if not menu.get("tactics"):
                break
            out = rpc(core, "calc.input_tactic",
                      {"session": sid, "worksheet": "w",
                       "tactic": menu["tactics"][0]}, mid=500 + i)
            assert out.get("accepted") is True, out
            snap = rpc(core, "calc.snapshot",
                       {"session": sid, "worksheet": "w"}, mid=900 + i)
            if snap["snapshot"]["status"] == "solved":
                break
        snap = rpc(core, "calc.snapshot", {"session": sid, "worksheet": "w"})
        assert snap["snapshot"]["status"] == "solved"
        assert snap["snapshot"]["tree"]["result"] == "x = 3"

    def test_non_applicable_specify_tactic_rejected(self, core):
        sid = new_session(core)
        rpc(core, "calc.init", {"session": sid, "worksheet": "w",
                                "example": "linear-1"})
        out = rpc(core, "calc.input_tactic",
                  {"session": sid, "worksheet": "w",
                   "tactic": {"kind": "AddGiven", "word": "equality",
                              "term": "1 = 2"}})
        assert out["error"]["code"] == "tactic-not-applicable"


class TestNotifications:
    def test_step_shared_notifications_flow(self, core):
        sid = new_session(core)
        rpc(core, "calc.init", {"session": sid, "worksheet": "w",
                                "example": "linear-1"})
        rpc(core, "calc.next", {"session": sid, "worksheet": "w"})
        events = rpc(core, "session.events", {"session": sid})["events"]
        assert any(e["method"] == "step-shared" for e in events)
        # drained
        again = rpc(core, "session.events", {"session": sid})["events"]
        assert again == []


class TestSessionIsolation:
    def run_script(self, core, sid, worksheet, example, mids):
        outs = []
        outs.append(rpc(core, "calc.init", {"session": sid,
                                            "worksheet": worksheet,
                                            "example": example}, next(mids)))
        for _ in range(40):
            out = rpc(core, "calc.next", {"session": sid,
                                          "worksheet": worksheet}, next(mids))
            outs.append(out)
            if "finished" in out or out.get("status") == "solved":
                break
        return outs

    def test_interleaved_equals_serial(self, core, store, content_dir,
                                       tmp_path):
        import itertools
        mids = itertools.count(1)
        sid_a = new_session(core, "a")
        sid_b = new_session(core, "b")
        # serial reference on a fresh core
        manager = SessionManager(str(tmp_path / "ref"),
                                 str(content_dir / "dialog.rules"))
        ref = ServiceCore(store, manager)
        rid_a = new_session(ref, "a")
        rid_b = new_session(ref, "b")
        serial_a = self.run_script(ref, rid_a, "w", "linear-1", mids)
        serial_b = self.run_script(ref, rid_b, "w", "linear-2", mids)

        # interleave the same requests across the two sessions
        inter_a, inter_b = [], []
        inter_a.append(rpc(core, "calc.init", {"session": sid_a,
                                               "worksheet": "w",
                                               "example": "linear-1"}))
        inter_b.append(rpc(core, "calc.init", {"session": sid_b,
                                               "worksheet": "w",
                                               "example": "linear-2"}))
        done_a = done_b = False
        while not (done_a and done_b):
            if not done_a:
                out = rpc(core, "calc.next", {"session": sid_a, "worksheet": "w"})
                inter_a.append(out)
                done_a = "finished" in out or out.get("status") == "solved"
            if not done_b:
                out = rpc(core, "calc.next", {"session": sid_b, "worksheet": "w"})
                inter_b.append(out)
                done_b = "finished" in out or out.get("status") == "solved"
        assert _strip(inter_a) == _strip(serial_a)
        assert _strip(inter_b) == _strip(serial_b)


def _strip(outs):
    return [{k: v for k, v in o.items() if k != "worksheet"} for o in outs]


class TestBindings:
    def test_tcp_round_trip(self, core):
        server = TcpServer(("127.0.0.1", 0), core)
        port = server.server_address[1]
        threading.Thread(target=server.serve_forever, daemon=True).start()
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=5) as s:
                f = s.makefile("rwb")
                write_frame(f, {"v": 1, "kind": "request", "id": 1,
                                "method": "meta.health", "payload": {}})
                resp = read_frame(f)
                assert resp["payload"]["version"] == PROTOCOL_VERSION
        finally:
            server.shutdown()

    def test_http_round_trip(self, core):
        import urllib.request
        server = HttpServer(("127.0.0.1", 0), core)
        port = server.server_address[1]
        threading.Thread(target=server.serve_forever, daemon=True).start()
        try:
            body = json.dumps({"v": 1, "kind": "request", "id": 5,
                               "method": "meta.health",
                               "payload": {}}).encode()
            req = urllib.request.Request(f"http://127.0.0.1:{port}/rpc",
                                         data=body,
                                         headers={"Content-Type":
                                                  "application/json"})
            with urllib.request.urlopen(req, timeout=5) as resp:
                out = json.loads(resp.read())
            assert out["payload"]["version"] == PROTOCOL_VERSION
        finally:
            server.shutdown()


# ---------------------------------------------------------------------------
# payload round-trip properties

_leaf = st.sampled_from(["a", "b", "x", "q_0", "0", "1", "3"])
_op = st.sampled_from(["+", "-", "*", "/", "^", "="])


@st.composite
def formula_text(draw, depth=2):
    if depth == 0:
        return draw(_leaf)
    left = draw(formula_text(depth=depth - 1))
    right = draw(formula_text(depth=depth - 1))
    op = draw(st.sampled_from(["+", "-", "*", "/", "^"]))
    return f"({left} {op} {right})"


@given(formula_text())
@settings(max_examples=150, deadline=None)
def test_term_payload_round_trip(text):
    ctx = Context()
    t = parse(text, ctx)
    payload = term_payload(t)
    wire = json.loads(json.dumps(payload))
    back = ast_to_term(ast_from_json(wire["ast"]), ctx)
    assert alpha_eq(back, t)
    assert wire["text"] == parse_and_pretty(text)


def parse_and_pretty(text):
    from stepcalc.terms import pretty
    return pretty(parse(text, Context()))


@given(st.tuples(st.lists(st.integers(0, 5), max_size=4),
                 st.sampled_from(["model", "references", "steps"]),
                 st.one_of(st.none(), st.integers(0, 9))))
@settings(max_examples=80, deadline=None)
def test_position_payload_round_trip(data):
    path, slot, index = data
    pos = Position(tuple(path), slot, index if slot == "steps" else None)
    wire = json.loads(json.dumps(position_payload(pos)))
    assert position_from_payload(wire) == pos
