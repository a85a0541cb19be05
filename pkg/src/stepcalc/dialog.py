"""Dialog control between front-end and math engine: sessions, user
models, a rule-based intervention table, event logging and exam mode.

Mediation never computes mathematics; it decides what to pass on, what
to withhold and at which level of detail. Authoring dialogue behaviour
is a text file, strictly separate from authoring mathematics.
"""

from __future__ import annotations

import json
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


class DialogError(Exception):
    pass


class StorageUnavailable(DialogError):
    pass


# ---------------------------------------------------------------------------
# user model

BEGINNER = "beginner"
EXPERT = "expert"

FAMILIAR = "familiar"
AWARE = "aware"
NEW = "new"


@dataclass
class UserModel:
    user_id: str
    expertise: str = BEGINNER
    familiarity: dict[str, str] = field(default_factory=dict)
    traits: dict[str, str] = field(default_factory=dict)

    def familiarity_with(self, key: str) -> str:
        return self.familiarity.get(key, NEW)

    def to_json(self) -> dict:
        return {"user": self.user_id, "expertise": self.expertise,
                "familiarity": self.familiarity, "traits": self.traits}

    @staticmethod
    def from_json(d: dict) -> "UserModel":
        return UserModel(d["user"], d.get("expertise", BEGINNER),
                         dict(d.get("familiarity", {})),
                         dict(d.get("traits", {})))


# ---------------------------------------------------------------------------
# events and rules

EVENT_KINDS = ("next-request", "input-result", "explanation-request",
               "idle-timeout", "step-shared")

DETAIL_FORMULA = "formula"
DETAIL_TACTIC = "formula+tactic"
DETAIL_FULL = "full"

# payload keys stripped per detail level
_DETAIL_KEEP = {
    DETAIL_FORMULA: {"formula", "ast", "accepted", "status", "position"},
    DETAIL_TACTIC: {"formula", "ast", "accepted", "status", "position",
                    "tactic", "origin"},
}


@dataclass(frozen=True)
class DialogEvent:
    kind: str
    payload: dict


@dataclass(frozen=True)
class DialogRule:
    rule_id: str
    trigger: str  # event kind or "*"
    guard: tuple[tuple[str, str], ...]  # (key, value) conjuncts
    action: str  # pass | block | transform | insert
    argument: str = ""


@dataclass(frozen=True)
class Decision:
    rule_id: str
    action: str
    argument: str
    payload: dict


@dataclass
class LogEvent:
    timestamp: float
    session_id: str
    worksheet_id: str
    kind: str
    payload: dict

    def to_json(self) -> dict:
        return {"t": self.timestamp, "session": self.session_id,
                "worksheet": self.worksheet_id, "kind": self.kind,
                "payload": self.payload}


_RULE_RE = re.compile(
    r"^rule\s+(?P<id>[\w-]+)\s*:\s*on\s+(?P<trigger>[\w*-]+)"
    r"(?:\s+if\s+(?P<guard>[^-]+?))?\s*->\s*(?P<action>pass|block|transform|insert)"
    r"(?:\s+(?P<arg>.+))?$")


def parse_rule_table(text: str) -> list[DialogRule]:
    rules = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        m = _RULE_RE.match(line)
        if m is None:
            raise DialogError(f"bad dialog rule line: {line!r}")
        guard = []
        if m.group("guard"):
            for part in m.group("guard").split(" and "):
                key, _, value = part.strip().partition("=")
                if not value:
                    raise DialogError(f"bad guard {part!r} in {line!r}")
                guard.append((key.strip(), value.strip()))
        trigger = m.group("trigger")
        if trigger != "*" and trigger not in EVENT_KINDS:
            raise DialogError(f"unknown event kind {trigger!r}")
        rules.append(DialogRule(m.group("id"), trigger, tuple(guard),
                                m.group("action"), (m.group("arg") or "").strip()))
    if not any(r.trigger == "*" and r.action == "pass" and not r.guard
               for r in rules):
        rules.append(DialogRule("default", "*", (), "pass"))
    return rules


def _guard_holds(rule: DialogRule, model: UserModel, mode: str,
                 event: DialogEvent) -> bool:
    for key, value in rule.guard:
        if key == "mode":
            if mode != value:
                return False
        elif key == "expertise":
            if model.expertise != value:
                return False
        elif key == "familiar":
            subject = event.payload.get("ruleset") or event.payload.get("tactic", "")
            if model.familiarity_with(str(subject)) != value:
                return False
        elif key.startswith("trait."):
            if model.traits.get(key[6:]) != value:
                return False
        else:
            return False
    return True


def shape_payload(payload: dict, level: str) -> dict:
    keep = _DETAIL_KEEP.get(level)
    if keep is None:
        return dict(payload)
    return {k: v for k, v in payload.items() if k in keep}


# ---------------------------------------------------------------------------
# sessions

@dataclass
class WorksheetDialog:
    worksheet_id: str
    calc_ref: Optional[object] = None  # owned by the service layer
    last_event_at: float = 0.0


@dataclass
class Session:
    session_id: str
    user_id: str
    user_model: UserModel
    mode: str = "normal"  # normal | exam
    worksheets: dict[str, WorksheetDialog] = field(default_factory=dict)


class SessionManager:
    """One session per user connection; a worksheet dialog per open
    worksheet. Logging is ordered per session."""

    def __init__(self, data_dir: Optional[str] = None,
                 rules_path: Optional[str] = None):
        self.data_dir = Path(data_dir) if data_dir else None
        self.rules_path = Path(rules_path) if rules_path else None
        self._rules: list[DialogRule] = parse_rule_table("")
        self._rules_mtime: Optional[float] = None
        self._sessions: dict[str, Session] = {}
        self._log: list[LogEvent] = []
        self._lock = threading.Lock()
        if self.data_dir is not None:
            try:
                self.data_dir.mkdir(parents=True, exist_ok=True)
            except OSError as e:
                raise StorageUnavailable(str(e)) from None
        self._load_rules()

    # -- rule table (hot reloadable) ----------------------------------------

    def _load_rules(self):
        if self.rules_path is None or not self.rules_path.exists():
            return
        mtime = self.rules_path.stat().st_mtime
        if mtime != self._rules_mtime:
            self._rules = parse_rule_table(self.rules_path.read_text())
            self._rules_mtime = mtime

    @property
    def rules(self) -> list[DialogRule]:
        self._load_rules()
        return self._rules

    # -- persistence ---------------------------------------------------------

    def _users_file(self) -> Optional[Path]:
        return self.data_dir / "users.jsonl" if self.data_dir else None

    def _events_file(self) -> Optional[Path]:
        return self.data_dir / "events.jsonl" if self.data_dir else None

    def _load_user(self, user_id: str) -> UserModel:
        path = self._users_file()
        model = UserModel(user_id)
        if path is not None and path.exists():
            for line in path.read_text().splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                if record.get("user") == user_id:
                    model = UserModel.from_json(record)  # last record wins
        return model

    def save_user(self, model: UserModel):
        path = self._users_file()
        if path is None:
            return
        try:
            with path.open("a") as fh:
                fh.write(json.dumps(model.to_json()) + "\n")
        except OSError as e:
            raise StorageUnavailable(str(e)) from None

    # -- lifecycle -----------------------------------------------------------

    def new_session(self, user_id: str) -> Session:
        session = Session(uuid.uuid4().hex[:12], user_id,
                          self._load_user(user_id))
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def session(self, session_id: str) -> Session:
        s = self._sessions.get(session_id)
        if s is None:
            raise DialogError(f"unknown session {session_id!r}")
        return s

    def close_session(self, session_id: str):
        with self._lock:
            s = self._sessions.pop(session_id, None)
        if s is not None:
            self.save_user(s.user_model)

    def open_worksheet(self, session: Session, worksheet_id: str) -> WorksheetDialog:
        if worksheet_id in session.worksheets:
            raise DialogError(f"worksheet {worksheet_id!r} already open")
        wd = WorksheetDialog(worksheet_id, last_event_at=time.time())
        session.worksheets[worksheet_id] = wd
        return wd

    # -- mediation -----------------------------------------------------------

    def mediate(self, session: Session, worksheet_id: str,
                event: DialogEvent) -> Decision:
        """Apply the first matching rule; every event and decision is
        appended to the log."""
        if worksheet_id not in session.worksheets:
            raise DialogError(f"worksheet {worksheet_id!r} is not open")
        session.worksheets[worksheet_id].last_event_at = time.time()
        decision = None
        for rule in self.rules:
            if rule.trigger not in ("*", event.kind):
                continue
            if not _guard_holds(rule, session.user_model, session.mode, event):
                continue
            decision = self._decide(rule, event)
            break
        if decision is None:
            decision = Decision("default", "pass", "", dict(event.payload))
        self._append_log(session, worksheet_id, event, decision)
        return decision

    def _decide(self, rule: DialogRule, event: DialogEvent) -> Decision:
        if rule.action == "pass":
            return Decision(rule.rule_id, "pass", "", dict(event.payload))
        if rule.action == "block":
            return Decision(rule.rule_id, "block", rule.argument,
                            {"blocked": rule.argument or "blocked"})
        if rule.action == "transform":
            return Decision(rule.rule_id, "transform", rule.argument,
                            shape_payload(event.payload, rule.argument))
        if rule.action == "insert":
            payload = dict(event.payload)
            payload["prompt"] = rule.argument
            return Decision(rule.rule_id, "insert", rule.argument, payload)
        raise DialogError(f"unknown action {rule.action!r}")

    # -- logging -------------------------------------------------------------

    def _append_log(self, session: Session, worksheet_id: str,
                    event: DialogEvent, decision: Decision):
        entry = LogEvent(time.time(), session.session_id, worksheet_id,
                         event.kind,
                         {"event": event.payload, "rule": decision.rule_id,
                          "action": decision.action})
        with self._lock:
            self._log.append(entry)
        path = self._events_file()
        if path is not None:
            try:
                with path.open("a") as fh:
                    fh.write(json.dumps(entry.to_json()) + "\n")
            except OSError:
                pass  # logging must never break the calculation flow

    def log_query(self, session_id: Optional[str] = None,
                  worksheet_id: Optional[str] = None,
                  kind: Optional[str] = None) -> list[LogEvent]:
        with self._lock:
            events = list(self._log)
        if session_id is not None:
            events = [e for e in events if e.session_id == session_id]
        if worksheet_id is not None:
            events = [e for e in events if e.worksheet_id == worksheet_id]
        if kind is not None:
            events = [e for e in events if e.kind == kind]
        return sorted(events, key=lambda e: e.timestamp)
