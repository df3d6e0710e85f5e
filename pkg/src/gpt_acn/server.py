"""Minimal HTTP JSON service exposing interactive dialogue sessions.

One immutable (model, vocab, db) triple is shared read-only across
sessions; each session's history is guarded by a non-blocking lock so a
second in-flight message to the same session is rejected as busy.
"""
from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import codec, dialogue, inference, kb, model as M


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


@dataclass
class Session:
    history: list = field(default_factory=list)   # DialogueTurn per exchange
    transcript: list = field(default_factory=list)  # JSON turn payloads
    lock: threading.Lock = field(default_factory=threading.Lock)


def create_app(model: M.Model, vocab: codec.Vocab, db: kb.Database,
               max_history_turns: int = dialogue.DEFAULT_MAX_HISTORY_TURNS) -> FastAPI:
    app = FastAPI(title="gpt-acn", docs_url=None, redoc_url=None)
    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()

    @app.post("/session")
    def create_session():
        session_id = uuid.uuid4().hex
        with sessions_lock:
            sessions[session_id] = Session()
        return {"session_id": session_id}

    @app.post("/session/{session_id}/message")
    async def post_message(session_id: str, request: Request):
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            return _error(404, "session_not_found", f"no session {session_id}")
        try:
            body = await request.json()
        except Exception:
            return _error(400, "malformed_body", "request body must be JSON")
        text = body.get("text") if isinstance(body, dict) else None
        if not isinstance(text, str) or not text.strip():
            return _error(400, "malformed_body",
                          'body must be {"text": <non-empty string>}')
        if not session.lock.acquire(blocking=False):
            return _error(409, "busy",
                          "a message for this session is already in flight")
        try:
            try:
                result = inference.respond(model, vocab, db, session.history,
                                           text, max_history_turns=max_history_turns)
            except inference.BeliefParseError as e:
                return _error(422, "unparseable_belief",
                              f"{e} (raw: {e.raw_text!r})")
            turn_payload = {
                "user": text,
                "belief": result.belief.slots,
                "db": {"count": result.db_total, "records": result.db_records},
                "action": [[a.domain, a.act_type, a.slot, a.value]
                           for a in result.action.acts],
                "response": result.response,
                "diagnostics": {
                    "gate": result.diagnostics.gate,
                    "copy_share": result.diagnostics.copy_share,
                    # one decoded string per generated response token, so a
                    # client can highlight copied tokens in place
                    "tokens": [codec.decode(vocab, [t])
                               for t in result.response_token_ids],
                },
            }
            session.history.append(dialogue.DialogueTurn(
                user_utterance=text,
                belief=result.belief,
                db_records=result.db_records,
                db_total=result.db_total,
                action=result.action,
                system_response=result.response,
            ))
            session.transcript.append(turn_payload)
            return turn_payload
        finally:
            session.lock.release()

    @app.get("/session/{session_id}/history")
    def get_history(session_id: str):
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            return _error(404, "session_not_found", f"no session {session_id}")
        return {"turns": session.transcript}

    @app.delete("/session/{session_id}")
    def delete_session(session_id: str):
        with sessions_lock:
            if session_id not in sessions:
                return _error(404, "session_not_found", f"no session {session_id}")
            del sessions[session_id]
        return {"deleted": True}

    return app
