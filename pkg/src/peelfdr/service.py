"""JSON-over-HTTP wrapper around the session engine.

One analyst per session, addressed by an unguessable token.  Requests for
the same token are serialized by a per-token lock; views are built under
the lock and serialized outside it.  Sessions live in memory with optional
JSON snapshots on disk.
"""

from __future__ import annotations

import json
import os
import secrets
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator

from peelfdr import accum, constraints as cons, engine, scores

__all__ = ["create_app", "SessionStore"]


class SessionStore:
    """In-memory sessions keyed by 128-bit random tokens."""

    def __init__(self, snapshot_dir: str | None = None):
        self._sessions: dict = {}
        self._locks: dict = {}
        self._rules: dict = {}
        self._mutex = threading.Lock()
        self.snapshot_dir = snapshot_dir
        if snapshot_dir:
            os.makedirs(snapshot_dir, exist_ok=True)

    def add(self, sess, rule) -> str:
        token = secrets.token_hex(16)
        with self._mutex:
            self._sessions[token] = sess
            self._locks[token] = threading.Lock()
            self._rules[token] = rule
        return token

    def get(self, token):
        with self._mutex:
            return self._sessions.get(token)

    def lock(self, token) -> threading.Lock:
        with self._mutex:
            return self._locks[token]

    def rule(self, token):
        with self._mutex:
            return self._rules[token]

    def snapshot(self, token) -> None:
        if not self.snapshot_dir:
            return
        sess = self.get(token)
        path = os.path.join(self.snapshot_dir, f"{token}.json")
        with open(path, "w") as fh:
            json.dump(engine.session_to_json(sess), fh)


class CreateBody(BaseModel):
    v: int = 1
    covariates: list
    p: list
    spec: dict
    constraint: dict = Field(default_factory=lambda: {"kind": "none"})
    alpha: float = 0.1
    seed: int = 0
    rule: dict = Field(default_factory=lambda: {"kind": "canonical"})
    disclose_on_halt: bool = True

    @field_validator("p")
    @classmethod
    def _check_p(cls, v):
        for i, x in enumerate(v):
            if not isinstance(x, (int, float)) or not 0.0 <= x <= 1.0:
                raise ValueError(f"p[{i}] must lie in [0, 1]")
        return v

    @field_validator("alpha")
    @classmethod
    def _check_alpha(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        return v


class PeelBody(BaseModel):
    v: int = 1
    ids: list[int]


class AutostepBody(BaseModel):
    v: int = 1
    k: int = 1


def _err(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"v": 1, "error": message})


def create_app(snapshot_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="peelfdr service")
    store = SessionStore(snapshot_dir)
    app.state.store = store

    @app.exception_handler(RequestValidationError)
    def bad_payload(request: Request, exc: RequestValidationError):
        # creation-time schema violations are client errors with a field path
        first = exc.errors()[0]
        path = ".".join(str(x) for x in first.get("loc", []) if x != "body")
        msg = f"{path}: {first.get('msg', 'invalid')}"
        status = 400 if request.url.path == "/sessions" else 422
        return _err(status, msg)

    @app.get("/healthz")
    def healthz():
        return {"v": 1, "status": "ok"}

    @app.post("/sessions", status_code=201)
    def create(body: CreateBody):
        try:
            spec = accum.accumulator_from_json(body.spec)
            X = np.asarray(body.covariates, dtype=float)
            constraint = cons.constraint_from_json(body.constraint, points=X)
            rule = scores.make_rule(body.rule)
            sess = engine.create_session(
                (X, np.asarray(body.p, dtype=float)), spec,
                constraint=constraint, alpha=body.alpha, seed=body.seed,
                disclose_on_halt=body.disclose_on_halt)
            rule.reset(sess)
        except (ValueError, KeyError) as exc:
            return _err(400, str(exc))
        token = store.add(sess, rule)
        store.snapshot(token)
        return {"v": 1, "token": token}

    def _with_session(token):
        sess = store.get(token)
        if sess is None:
            return None, _err(404, "unknown session token")
        return sess, None

    @app.get("/sessions/{token}/view")
    def view(token: str):
        sess, err = _with_session(token)
        if err:
            return err
        with store.lock(token):
            v = engine.analyst_view(sess)
        return v.to_json()

    @app.post("/sessions/{token}/peel")
    def do_peel(token: str, body: PeelBody):
        sess, err = _with_session(token)
        if err:
            return err
        with store.lock(token):
            if sess.halted:
                return _err(409, "session already halted")
            try:
                engine.peel(sess, body.ids)
            except ValueError as exc:
                return _err(422, str(exc))
            v = engine.analyst_view(sess)
        store.snapshot(token)
        return v.to_json()

    @app.post("/sessions/{token}/autostep")
    def autostep(token: str, body: AutostepBody):
        sess, err = _with_session(token)
        if err:
            return err
        if body.k < 1:
            return _err(422, "k must be at least 1")
        with store.lock(token):
            if sess.halted:
                return _err(409, "session already halted")
            rule = store.rule(token)
            for _ in range(body.k):
                if sess.halted:
                    break
                v = engine.analyst_view(sess)
                if not v.candidates:
                    engine.peel(sess, v.masked_ids)
                else:
                    engine.peel(sess, rule.choose(v))
            v = engine.analyst_view(sess)
        store.snapshot(token)
        return v.to_json()

    @app.get("/sessions/{token}/result")
    def result(token: str):
        sess, err = _with_session(token)
        if err:
            return err
        with store.lock(token):
            if not sess.halted:
                return _err(409, "session has not halted")
            rej = [int(i) for i in sess.rejection]
            fdp = engine._current_fdp(sess)
        return {"v": 1, "rejection": rej, "fdp_hat": fdp,
                "step": sess.step, "alpha": sess.alpha}

    return app
