import pytest
from fastapi.testclient import TestClient

from biaseval.bws import Tuple4
from biaseval.service.app import create_app
from biaseval.service.state import AnnotatorAccount, ServiceState

ACCOUNTS = [
    AnnotatorAccount("alice", "tok-alice", "primary"),
    AnnotatorAccount("bob", "tok-bob", "primary"),
    AnnotatorAccount("carol", "tok-carol", "arbiter"),
]


def make_state(n_tuples=3, log_path=None):
    bodies = {f"text{i}": f"[MASK] body number {i}" for i in range(n_tuples * 4)}
    tuples = [
        Tuple4(tuple_id=f"t{i}", text_ids=tuple(f"text{j}" for j in range(i * 4, i * 4 + 4)))
        for i in range(n_tuples)
    ]
    return ServiceState(tuples, bodies, ACCOUNTS, log_path=log_path)


def client_for(state):
    return TestClient(create_app(state))


def auth(token):
    return {"Authorization": f"Bearer {token}"}


def open_session(client, token, round_number=1):
    resp = client.post("/api/session", json={"round": round_number}, headers=auth(token))
    assert resp.status_code == 200
    return resp.json()["session_id"]


def judge_all(client, token, session, pick):
    """Judge every served tuple with pick(tuple_payload) -> (best, worst)."""
    judged = []
    while True:
        resp = client.get("/api/tuple/next", params={"session": session},
                          headers=auth(token))
        body = resp.json()
        if body["done"]:
            return judged
        tup = body["tuple"]
        best, worst = pick(tup)
        resp = client.post("/api/judgment", json={
            "session_id": session, "tuple_id": tup["tuple_id"],
            "best_id": best, "worst_id": worst}, headers=auth(token))
        assert resp.status_code == 200, resp.text
        judged.append(tup["tuple_id"])


class TestAuth:
    def test_unknown_token_rejected(self):
        client = client_for(make_state())
        resp = client.get("/api/progress", headers=auth("nope"))
        assert resp.status_code == 401
        assert resp.json() == {"code": "auth", "reason": "unknown bearer token"}

    def test_missing_header_rejected(self):
        client = client_for(make_state())
        assert client.get("/api/progress").status_code == 401


class TestTupleDispatch:
    def test_fresh_session_gets_first_tuple(self):
        client = client_for(make_state())
        session = open_session(client, "tok-alice")
        body = client.get("/api/tuple/next", params={"session": session},
                          headers=auth("tok-alice")).json()
        assert not body["done"]
        assert body["tuple"]["tuple_id"] == "t0"
        assert len(body["tuple"]["texts"]) == 4
        assert all("body" in t for t in body["tuple"]["texts"])

    def test_unknown_session_404(self):
        client = client_for(make_state())
        resp = client.get("/api/tuple/next", params={"session": "ghost"},
                          headers=auth("tok-alice"))
        assert resp.status_code == 404
        assert resp.json()["code"] == "session"

    def test_done_after_all_judged(self):
        client = client_for(make_state(n_tuples=2))
        session = open_session(client, "tok-alice")
        judged = judge_all(client, "tok-alice", session,
                           lambda t: (t["texts"][0]["text_id"], t["texts"][1]["text_id"]))
        assert judged == ["t0", "t1"]
        body = client.get("/api/tuple/next", params={"session": session},
                          headers=auth("tok-alice")).json()
        assert body["done"]

    def test_two_annotators_both_cover_all_tuples(self):
        state = make_state(n_tuples=3)
        client = client_for(state)
        s_a = open_session(client, "tok-alice")
        s_b = open_session(client, "tok-bob")
        pick = lambda t: (t["texts"][0]["text_id"], t["texts"][3]["text_id"])
        seen_a = judge_all(client, "tok-alice", s_a, pick)
        seen_b = judge_all(client, "tok-bob", s_b, pick)
        assert seen_a == seen_b == ["t0", "t1", "t2"]


class TestJudgments:
    def test_best_equals_worst_rejected(self):
        client = client_for(make_state())
        session = open_session(client, "tok-alice")
        resp = client.post("/api/judgment", json={
            "session_id": session, "tuple_id": "t0",
            "best_id": "text0", "worst_id": "text0"}, headers=auth("tok-alice"))
        assert resp.status_code == 400
        assert resp.json()["code"] == "distinct-required"

    def test_membership_enforced(self):
        client = client_for(make_state())
        session = open_session(client, "tok-alice")
        resp = client.post("/api/judgment", json={
            "session_id": session, "tuple_id": "t0",
            "best_id": "text11", "worst_id": "text0"}, headers=auth("tok-alice"))
        assert resp.status_code == 400
        assert resp.json()["code"] == "membership"

    def test_duplicate_rejected(self):
        client = client_for(make_state())
        session = open_session(client, "tok-alice")
        payload = {"session_id": session, "tuple_id": "t0",
                   "best_id": "text0", "worst_id": "text1"}
        assert client.post("/api/judgment", json=payload,
                           headers=auth("tok-alice")).status_code == 200
        resp = client.post("/api/judgment", json=payload, headers=auth("tok-alice"))
        assert resp.status_code == 409
        assert resp.json()["code"] == "duplicate"

    def test_arbiter_cannot_judge(self):
        client = client_for(make_state())
        session = open_session(client, "tok-carol")
        resp = client.post("/api/judgment", json={
            "session_id": session, "tuple_id": "t0",
            "best_id": "text0", "worst_id": "text1"}, headers=auth("tok-carol"))
        assert resp.status_code == 403


class TestConflictAndArbitration:
    def _drive_conflict(self, client):
        s_a = open_session(client, "tok-alice")
        s_b = open_session(client, "tok-bob")
        judge_all(client, "tok-alice", s_a,
                  lambda t: (t["texts"][0]["text_id"], t["texts"][1]["text_id"]))
        # bob agrees on t0 and t2 but flips worst on t1
        def bob_pick(t):
            if t["tuple_id"] == "t1":
                return (t["texts"][0]["text_id"], t["texts"][2]["text_id"])
            return (t["texts"][0]["text_id"], t["texts"][1]["text_id"])
        judge_all(client, "tok-bob", s_b, bob_pick)

    def test_agreeing_judgments_no_arbitration(self):
        client = client_for(make_state(n_tuples=1))
        s_a = open_session(client, "tok-alice")
        s_b = open_session(client, "tok-bob")
        pick = lambda t: (t["texts"][0]["text_id"], t["texts"][1]["text_id"])
        judge_all(client, "tok-alice", s_a, pick)
        judge_all(client, "tok-bob", s_b, pick)
        progress = client.get("/api/progress", headers=auth("tok-alice")).json()
        assert progress["open_arbitrations"] == 0
        assert progress["completed_tuples"] == 1
        assert progress["agreement_kappa"] == 1.0

    def test_conflict_opens_arbitration_and_resolution_wins(self):
        client = client_for(make_state(n_tuples=3))
        self._drive_conflict(client)

        progress = client.get("/api/progress", headers=auth("tok-alice")).json()
        assert progress["open_arbitrations"] == 1
        assert progress["unresolved_conflicts"] == 1
        assert progress["completed_tuples"] == 2

        # export before arbitration: 2 resolved tuples -> 10 pairs
        export = client.get("/api/export/pairs", headers=auth("tok-alice")).json()
        assert len(export["pairs"]) == 10
        assert export["unresolved_conflicts"] == 1

        queue = client.get("/api/arbitration/next", headers=auth("tok-carol")).json()
        assert not queue["done"]
        assert queue["tuple"]["tuple_id"] == "t1"
        assert len(queue["judgments"]) == 2

        # arbiter picks a third distinct answer; it is final
        resp = client.post("/api/arbitration", json={
            "tuple_id": "t1", "best_id": "text7", "worst_id": "text4"},
            headers=auth("tok-carol"))
        assert resp.status_code == 200

        export = client.get("/api/export/pairs", headers=auth("tok-alice")).json()
        assert len(export["pairs"]) == 15
        assert export["unresolved_conflicts"] == 0
        winners = {(p["winner_id"], p["loser_id"]) for p in export["pairs"]}
        assert ("text7", "text4") in winners

        queue = client.get("/api/arbitration/next", headers=auth("tok-carol")).json()
        assert queue["done"]

    def test_primary_cannot_see_arbitration_queue(self):
        client = client_for(make_state())
        resp = client.get("/api/arbitration/next", headers=auth("tok-alice"))
        assert resp.status_code == 403


class TestExport:
    def test_empty_export(self):
        client = client_for(make_state())
        export = client.get("/api/export/pairs", headers=auth("tok-alice")).json()
        assert export["pairs"] == []
        assert export["pending_tuples"] == 3

    def test_five_pairs_per_resolved_tuple(self):
        client = client_for(make_state(n_tuples=4))
        s_a = open_session(client, "tok-alice")
        s_b = open_session(client, "tok-bob")
        pick = lambda t: (t["texts"][1]["text_id"], t["texts"][2]["text_id"])
        judge_all(client, "tok-alice", s_a, pick)
        judge_all(client, "tok-bob", s_b, pick)
        export = client.get("/api/export/pairs", headers=auth("tok-alice")).json()
        assert len(export["pairs"]) == 20
        assert all(p["source"] == "human" for p in export["pairs"])


class TestEventSourcing:
    def test_replay_reconstructs_state(self, tmp_path):
        log = tmp_path / "events.jsonl"
        state = make_state(n_tuples=3, log_path=log)
        client = client_for(state)
        s_a = open_session(client, "tok-alice")
        s_b = open_session(client, "tok-bob")
        judge_all(client, "tok-alice", s_a,
                  lambda t: (t["texts"][0]["text_id"], t["texts"][1]["text_id"]))
        def bob_pick(t):
            if t["tuple_id"] == "t2":
                return (t["texts"][3]["text_id"], t["texts"][0]["text_id"])
            return (t["texts"][0]["text_id"], t["texts"][1]["text_id"])
        judge_all(client, "tok-bob", s_b, bob_pick)
        client.post("/api/arbitration", json={
            "tuple_id": "t2", "best_id": "text8", "worst_id": "text9"},
            headers=auth("tok-carol"))
        pairs_before, unresolved_before, _ = state.export_pairs()

        replayed = make_state(n_tuples=3, log_path=log)
        pairs_after, unresolved_after, _ = replayed.export_pairs()
        assert [(p.winner_id, p.loser_id) for p in pairs_before] == \
            [(p.winner_id, p.loser_id) for p in pairs_after]
        assert unresolved_before == unresolved_after == 0
        assert replayed.progress()["completed_tuples"] == 3

    def test_snapshot_written(self, tmp_path):
        log = tmp_path / "events.jsonl"
        state = make_state(n_tuples=1, log_path=log)
        state.snapshot_every = 1
        client = client_for(state)
        session = open_session(client, "tok-alice")
        judge_all(client, "tok-alice", session,
                  lambda t: (t["texts"][0]["text_id"], t["texts"][1]["text_id"]))
        assert log.with_suffix(".snapshot.json").exists()


class TestStateValidation:
    def test_schedule_must_reference_known_texts(self):
        with pytest.raises(ValueError):
            ServiceState([Tuple4("t0", ("a", "b", "c", "d"))], {"a": "x"}, ACCOUNTS)

    def test_duplicate_tuple_ids_rejected(self):
        bodies = {f"x{i}": "b" for i in range(8)}
        tuples = [Tuple4("dup", ("x0", "x1", "x2", "x3")),
                  Tuple4("dup", ("x4", "x5", "x6", "x7"))]
        with pytest.raises(ValueError):
            ServiceState(tuples, bodies, ACCOUNTS)
