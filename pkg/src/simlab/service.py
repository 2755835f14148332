"""HTTP service backing the human-evaluation chat UI.

Endpoints (all under /v1): POST /session, POST /session/{id}/utterance,
POST /session/{id}/questionnaire, GET /session/{id}/transcript,
GET /health.  Sessions pick their policy round-robin in creation order;
questionnaire answers append to a JSONL results file.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import random
import threading
import uuid
from pathlib import Path
from typing import Sequence

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field, model_validator

from .ontology import Ontology, sample_goal
from .policy import PolicyModel
from .session import ChatSession, PatternMatcher


class UtteranceBody(BaseModel):
    text: str | None = None
    acts: list[str] | None = None

    @model_validator(mode="after")
    def _one_of(self):
        if self.text is None and self.acts is None:
            raise ValueError("provide either 'text' or 'acts'")
        return self


class QuestionnaireBody(BaseModel):
    q1: bool
    q2: bool
    q3: int = Field(ge=1, le=6)
    q4: int = Field(ge=1, le=6)
    q5: int = Field(ge=1, le=6)
    q6: int = Field(ge=1, le=6)


class ServiceState:
    def __init__(self, policies: Sequence[tuple[str, PolicyModel]], ontology: Ontology,
                 results_path: str | Path, seed: int = 0):
        if not policies:
            raise ValueError("the service needs at least one policy")
        self.policies = list(policies)
        self.ontology = ontology
        self.results_path = Path(results_path)
        self.matcher = PatternMatcher(ontology)
        self.rng = random.Random(seed)
        self.sessions: dict[str, ChatSession] = {}
        self.session_counter = 0
        self.lock = threading.Lock()

    def create_session(self) -> ChatSession:
        with self.lock:
            index = self.session_counter
            self.session_counter += 1
            policy_id, policy = self.policies[index % len(self.policies)]
            goal = sample_goal(self.ontology, self.rng)
            session = ChatSession(
                session_id=uuid.uuid4().hex,
                policy_id=policy_id,
                policy=policy,
                ontology=self.ontology,
                goal=goal,
                matcher=self.matcher,
            )
            self.sessions[session.session_id] = session
            return session

    def get(self, session_id: str) -> ChatSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    def append_result(self, record: dict) -> None:
        with self.lock:
            with open(self.results_path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def create_app(policies: Sequence[tuple[str, PolicyModel]], ontology: Ontology,
               results_path: str | Path, seed: int = 0,
               static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="simlab chat service", version="1")
    state = ServiceState(policies, ontology, results_path, seed)
    app.state.service = state

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        # malformed JSON is a client framing error, not a validation failure
        if any(e.get("type") == "json_invalid" for e in exc.errors()):
            return JSONResponse(status_code=400, content={"detail": "malformed JSON body"})
        return JSONResponse(status_code=422, content={"detail": exc.errors()})

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "policies": [name for name, _ in state.policies]}

    @app.post("/v1/session", status_code=201)
    def create_session():
        session = state.create_session()
        opening = session.transcript[0]
        return {
            "session_id": session.session_id,
            "policy_id": session.policy_id,
            "scenario": session.scenario,
            "system_text": opening.text,
            "system_acts": opening.acts,
            "done": session.done,
        }

    @app.post("/v1/session/{session_id}/utterance")
    def utterance(session_id: str, body: UtteranceBody):
        session = state.get(session_id)
        if session.done:
            raise HTTPException(status_code=409, detail="session already finished")
        try:
            result = session.utterance(text=body.text, acts=body.acts)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return result

    @app.post("/v1/session/{session_id}/questionnaire", status_code=204)
    def questionnaire(session_id: str, body: QuestionnaireBody):
        session = state.get(session_id)
        if session.questionnaire is not None:
            raise HTTPException(status_code=409, detail="questionnaire already submitted")
        answers = body.model_dump()
        session.questionnaire = answers
        digest = hashlib.sha256(
            json.dumps(session.transcript_dicts(), sort_keys=True).encode()
        ).hexdigest()
        state.append_result(
            {
                "session_id": session.session_id,
                "policy_id": session.policy_id,
                "scenario": session.scenario,
                "goal": session.goal.to_dict(),
                "turns": session.system_turns,
                "success": session.success(),
                "transcript_digest": digest,
                "answers": answers,
                "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            }
        )
        return Response(status_code=204)

    @app.get("/v1/session/{session_id}/transcript")
    def transcript(session_id: str):
        session = state.get(session_id)
        return {
            "session_id": session.session_id,
            "policy_id": session.policy_id,
            "scenario": session.scenario,
            "done": session.done,
            "turns": session.system_turns,
            "transcript": session.transcript_dicts(),
        }

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
