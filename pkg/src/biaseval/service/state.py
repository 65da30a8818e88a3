"""Event-sourced annotation state.

Every accepted judgment or arbitration appends one JSON line to the event
log; replaying the log reconstructs the exact state. A tuple is complete once
two primary annotators agree, or once an arbiter resolves their conflict.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from biaseval.bws import ComparisonPair, Judgment, Tuple4, expand, kappa

PRIMARY_JUDGMENTS_PER_TUPLE = 2
SNAPSHOT_EVERY = 100


class ServiceError(Exception):
    def __init__(self, code: str, reason: str, status: int = 400):
        super().__init__(reason)
        self.code = code
        self.reason = reason
        self.status = status


@dataclass(frozen=True)
class AnnotatorAccount:
    annotator_id: str
    token: str
    role: str = "primary"      # primary | arbiter


@dataclass
class AnnotationSession:
    session_id: str
    annotator_id: str
    round: int
    served: list[str] = field(default_factory=list)
    completed: int = 0


@dataclass
class ArbitrationItem:
    tuple_id: str
    judgments: list[Judgment]
    resolution: Judgment | None = None


def discourse_text_id(country_id: str, prompt_id: str, temperature: float,
                      language: str) -> str:
    return f"{country_id}:{prompt_id}:{temperature:g}:{language}"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class ServiceState:
    """All annotation state behind one write lock; reads take it briefly too."""

    def __init__(self, tuples: Sequence[Tuple4], bodies: dict[str, str],
                 accounts: Sequence[AnnotatorAccount],
                 log_path: str | Path | None = None,
                 snapshot_every: int = SNAPSHOT_EVERY):
        self.tuples = list(tuples)
        self.by_tuple_id = {t.tuple_id: t for t in self.tuples}
        if len(self.by_tuple_id) != len(self.tuples):
            raise ValueError("duplicate tuple ids in schedule")
        self.bodies = dict(bodies)
        for t in self.tuples:
            for text_id in t.text_ids:
                if text_id not in self.bodies:
                    raise ValueError(f"schedule references unknown text {text_id!r}")
        self.accounts = {a.token: a for a in accounts}
        self.by_annotator = {a.annotator_id: a for a in accounts}
        self.log_path = Path(log_path) if log_path else None
        self.snapshot_every = max(1, snapshot_every)

        self.sessions: dict[str, AnnotationSession] = {}
        # tuple_id -> annotator_id -> Judgment (primary judgments only)
        self.judgments: dict[str, dict[str, Judgment]] = {}
        self.arbitrations: dict[str, ArbitrationItem] = {}
        self._events_applied = 0
        self._lock = threading.Lock()

        if self.log_path and self.log_path.exists():
            self._replay_log()

    # -- authentication -----------------------------------------------------

    def authenticate(self, token: str) -> AnnotatorAccount:
        account = self.accounts.get(token)
        if account is None:
            raise ServiceError("auth", "unknown bearer token", status=401)
        return account

    # -- sessions -----------------------------------------------------------

    def create_session(self, annotator_id: str, round_number: int = 1) -> AnnotationSession:
        with self._lock:
            session = AnnotationSession(session_id=uuid.uuid4().hex,
                                        annotator_id=annotator_id, round=round_number)
            self.sessions[session.session_id] = session
            return session

    def _session(self, session_id: str) -> AnnotationSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise ServiceError("session", f"unknown session {session_id!r}", status=404)
        return session

    # -- tuple dispatch -----------------------------------------------------

    def next_tuple(self, session_id: str) -> Tuple4 | None:
        """Lowest-index tuple of the session's round the annotator has not
        judged, skipping tuples already holding two other primary judgments."""
        with self._lock:
            session = self._session(session_id)
            for t in self.tuples:
                if t.round != session.round:
                    continue
                held = self.judgments.get(t.tuple_id, {})
                if session.annotator_id in held:
                    continue
                if len(held) >= PRIMARY_JUDGMENTS_PER_TUPLE:
                    continue
                if t.tuple_id not in session.served:
                    session.served.append(t.tuple_id)
                return t
            return None

    # -- judgments ----------------------------------------------------------

    def _validate_pick(self, tuple_id: str, best_id: str, worst_id: str) -> Tuple4:
        t = self.by_tuple_id.get(tuple_id)
        if t is None:
            raise ServiceError("tuple", f"unknown tuple {tuple_id!r}", status=404)
        if best_id == worst_id:
            raise ServiceError("distinct-required", "best and worst must differ")
        if best_id not in t.text_ids or worst_id not in t.text_ids:
            raise ServiceError("membership", "best and worst must belong to the tuple")
        return t

    def submit_judgment(self, session_id: str, tuple_id: str, best_id: str,
                        worst_id: str) -> Judgment:
        with self._lock:
            session = self._session(session_id)
            account = self.by_annotator[session.annotator_id]
            if account.role != "primary":
                raise ServiceError("role", "only primary annotators submit judgments",
                                   status=403)
            self._validate_pick(tuple_id, best_id, worst_id)
            held = self.judgments.setdefault(tuple_id, {})
            if session.annotator_id in held:
                raise ServiceError("duplicate", "annotator already judged this tuple",
                                   status=409)
            if len(held) >= PRIMARY_JUDGMENTS_PER_TUPLE:
                raise ServiceError("full", "tuple already has two primary judgments",
                                   status=409)
            judgment = Judgment(tuple_id=tuple_id, annotator_id=session.annotator_id,
                                best_id=best_id, worst_id=worst_id, timestamp=_now())
            self._apply_judgment(judgment)
            self._append_event({"kind": "judgment", **_judgment_record(judgment)})
            session.completed += 1
            return judgment

    def _apply_judgment(self, judgment: Judgment):
        held = self.judgments.setdefault(judgment.tuple_id, {})
        held[judgment.annotator_id] = judgment
        if len(held) == PRIMARY_JUDGMENTS_PER_TUPLE:
            first, second = list(held.values())
            if (first.best_id, first.worst_id) != (second.best_id, second.worst_id):
                self.arbitrations.setdefault(
                    judgment.tuple_id,
                    ArbitrationItem(tuple_id=judgment.tuple_id,
                                    judgments=[first, second]))

    # -- arbitration --------------------------------------------------------

    def arbitration_next(self) -> ArbitrationItem | None:
        with self._lock:
            for t in self.tuples:
                item = self.arbitrations.get(t.tuple_id)
                if item is not None and item.resolution is None:
                    return item
            return None

    def submit_arbitration(self, annotator_id: str, tuple_id: str, best_id: str,
                           worst_id: str) -> Judgment:
        with self._lock:
            account = self.by_annotator.get(annotator_id)
            if account is None or account.role != "arbiter":
                raise ServiceError("role", "only the arbiter may resolve conflicts",
                                   status=403)
            self._validate_pick(tuple_id, best_id, worst_id)
            item = self.arbitrations.get(tuple_id)
            if item is None:
                raise ServiceError("arbitration", f"tuple {tuple_id!r} has no conflict",
                                   status=404)
            resolution = Judgment(tuple_id=tuple_id, annotator_id=annotator_id,
                                  best_id=best_id, worst_id=worst_id, timestamp=_now())
            item.resolution = resolution
            self._append_event({"kind": "arbitration", **_judgment_record(resolution)})
            return resolution

    # -- export and progress ------------------------------------------------

    def resolved_judgments(self) -> tuple[list[Judgment], int, int]:
        """(final judgment per completed tuple, unresolved conflicts, pending)."""
        final: list[Judgment] = []
        unresolved = 0
        pending = 0
        for t in self.tuples:
            held = self.judgments.get(t.tuple_id, {})
            if len(held) < PRIMARY_JUDGMENTS_PER_TUPLE:
                pending += 1
                continue
            first, second = list(held.values())
            if (first.best_id, first.worst_id) == (second.best_id, second.worst_id):
                final.append(first)
                continue
            item = self.arbitrations.get(t.tuple_id)
            if item is not None and item.resolution is not None:
                final.append(item.resolution)
            else:
                unresolved += 1
        return final, unresolved, pending

    def export_pairs(self) -> tuple[list[ComparisonPair], int, int]:
        with self._lock:
            final, unresolved, pending = self.resolved_judgments()
            pairs: list[ComparisonPair] = []
            for judgment in final:
                pairs.extend(expand(judgment, self.by_tuple_id[judgment.tuple_id]))
            return pairs, unresolved, pending

    def agreement_kappa(self) -> float | None:
        """Kappa over tuples judged by two primaries, label = best|worst pick."""
        with self._lock:
            a_labels, b_labels = [], []
            for t in self.tuples:
                held = self.judgments.get(t.tuple_id, {})
                if len(held) != PRIMARY_JUDGMENTS_PER_TUPLE:
                    continue
                ordered = sorted(held.values(), key=lambda j: j.annotator_id)
                a_labels.append(f"{ordered[0].best_id}|{ordered[0].worst_id}")
                b_labels.append(f"{ordered[1].best_id}|{ordered[1].worst_id}")
            if not a_labels:
                return None
            return kappa(a_labels, b_labels)

    def progress(self) -> dict:
        with self._lock:
            final, unresolved, pending = self.resolved_judgments()
            per_annotator = {
                a.annotator_id: sum(1 for held in self.judgments.values()
                                    if a.annotator_id in held)
                for a in self.accounts.values() if a.role == "primary"
            }
            open_arbitrations = sum(1 for item in self.arbitrations.values()
                                    if item.resolution is None)
        return {
            "total_tuples": len(self.tuples),
            "completed_tuples": len(final),
            "pending_tuples": pending,
            "unresolved_conflicts": unresolved,
            "open_arbitrations": open_arbitrations,
            "judgments_per_annotator": per_annotator,
            "agreement_kappa": self.agreement_kappa(),
        }

    # -- event log ----------------------------------------------------------

    def _append_event(self, event: dict):
        self._events_applied += 1
        if self.log_path is None:
            return
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")
        if self._events_applied % self.snapshot_every == 0:
            self.write_snapshot()

    def write_snapshot(self):
        if self.log_path is None:
            return
        snapshot = {
            "events_applied": self._events_applied,
            "judgments": [
                _judgment_record(j)
                for held in self.judgments.values() for j in held.values()
            ],
            "arbitrations": [
                _judgment_record(item.resolution)
                for item in self.arbitrations.values() if item.resolution
            ],
        }
        path = self.log_path.with_suffix(".snapshot.json")
        path.write_text(json.dumps(snapshot, ensure_ascii=False, indent=1),
                        encoding="utf-8")

    def _replay_log(self):
        with open(self.log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                judgment = Judgment(
                    tuple_id=event["tuple_id"], annotator_id=event["annotator_id"],
                    best_id=event["best_id"], worst_id=event["worst_id"],
                    timestamp=event.get("timestamp", ""))
                if event["kind"] == "judgment":
                    self._apply_judgment(judgment)
                elif event["kind"] == "arbitration":
                    item = self.arbitrations.setdefault(
                        judgment.tuple_id,
                        ArbitrationItem(tuple_id=judgment.tuple_id, judgments=[]))
                    item.resolution = judgment
                self._events_applied += 1


def _judgment_record(judgment: Judgment) -> dict:
    return {
        "tuple_id": judgment.tuple_id,
        "annotator_id": judgment.annotator_id,
        "best_id": judgment.best_id,
        "worst_id": judgment.worst_id,
        "timestamp": judgment.timestamp,
    }
