"""FastAPI wiring for the annotation service.

All endpoints sit under /api, authenticate via a per-annotator bearer token,
and report failures as {code, reason} JSON bodies.
"""

from __future__ import annotations

from fastapi import Depends, FastAPI, Header, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from biaseval.bws import Judgment, Tuple4
from biaseval.service.state import AnnotatorAccount, ServiceError, ServiceState


class SessionRequest(BaseModel):
    round: int = 1


class JudgmentRequest(BaseModel):
    session_id: str
    tuple_id: str
    best_id: str
    worst_id: str


class ArbitrationRequest(BaseModel):
    tuple_id: str
    best_id: str
    worst_id: str


def _tuple_payload(state: ServiceState, t: Tuple4) -> dict:
    return {
        "tuple_id": t.tuple_id,
        "round": t.round,
        "texts": [{"text_id": text_id, "body": state.bodies[text_id]}
                  for text_id in t.text_ids],
    }


def _judgment_payload(j: Judgment) -> dict:
    return {"tuple_id": j.tuple_id, "annotator_id": j.annotator_id,
            "best_id": j.best_id, "worst_id": j.worst_id, "timestamp": j.timestamp}


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="bws-annotation-service")
    app.state.service = state

    def current_account(authorization: str = Header(default="")) -> AnnotatorAccount:
        if not authorization.startswith("Bearer "):
            raise ServiceError("auth", "missing bearer token", status=401)
        return state.authenticate(authorization.removeprefix("Bearer ").strip())

    @app.exception_handler(ServiceError)
    async def service_error_handler(_: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "reason": exc.reason})

    @app.post("/api/session")
    def create_session(body: SessionRequest,
                       account: AnnotatorAccount = Depends(current_account)):
        session = state.create_session(account.annotator_id, round_number=body.round)
        return {
            "session_id": session.session_id,
            "annotator_id": session.annotator_id,
            "role": account.role,
            "round": session.round,
            "total_tuples": sum(1 for t in state.tuples if t.round == session.round),
        }

    @app.get("/api/tuple/next")
    def tuple_next(session: str,
                   account: AnnotatorAccount = Depends(current_account)):
        t = state.next_tuple(session)
        if t is None:
            return {"done": True}
        return {"done": False, "tuple": _tuple_payload(state, t)}

    @app.post("/api/judgment")
    def submit_judgment(body: JudgmentRequest,
                        account: AnnotatorAccount = Depends(current_account)):
        judgment = state.submit_judgment(body.session_id, body.tuple_id,
                                         body.best_id, body.worst_id)
        return {"accepted": True, "judgment": _judgment_payload(judgment)}

    @app.get("/api/progress")
    def progress(account: AnnotatorAccount = Depends(current_account)):
        return state.progress()

    @app.get("/api/arbitration/next")
    def arbitration_next(account: AnnotatorAccount = Depends(current_account)):
        if account.role != "arbiter":
            raise ServiceError("role", "arbitration queue is arbiter-only", status=403)
        item = state.arbitration_next()
        if item is None:
            return {"done": True}
        return {
            "done": False,
            "tuple": _tuple_payload(state, state.by_tuple_id[item.tuple_id]),
            "judgments": [_judgment_payload(j) for j in item.judgments],
        }

    @app.post("/api/arbitration")
    def submit_arbitration(body: ArbitrationRequest,
                           account: AnnotatorAccount = Depends(current_account)):
        resolution = state.submit_arbitration(account.annotator_id, body.tuple_id,
                                              body.best_id, body.worst_id)
        return {"accepted": True, "judgment": _judgment_payload(resolution)}

    @app.get("/api/export/pairs")
    def export_pairs(account: AnnotatorAccount = Depends(current_account)):
        pairs, unresolved, pending = state.export_pairs()
        return {
            "pairs": [{"winner_id": p.winner_id, "loser_id": p.loser_id,
                       "source": p.source, "order_tag": p.order_tag, "round": p.round}
                      for p in pairs],
            "unresolved_conflicts": unresolved,
            "pending_tuples": pending,
        }

    return app
