"""HTTP chat service: the decoding pipeline behind a session API.

Sessions live in memory; an optional append-only JSON-lines log captures
every mutation so transcripts survive a restart.  Shared model artifacts
are immutable, so concurrent sessions need no coordination beyond a
per-session guard: a second post to a session that is still decoding is
rejected with 409 and a retry signal rather than queued.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import HTMLResponse, JSONResponse
from pydantic import BaseModel, ConfigDict

from .checkpoint import load_classifier, load_lm
from .consistency import ClassifierParams
from .decode import nucleus_decode
from .errors import NumericError, ValidationError
from .harness import first_person_story
from .model import LMParams
from .persona import (DialogHistory, Persona, Turn, attribute_distribution,
                      encode_context, sample_attribute)
from .pipeline import respond
from .retrieval import StoryIndex, load_index
from .soft_decode import DecodeConfig
from .toydata import read_jsonl
from .vocab import Vocabulary

BASELINES = ("nucleus", "retrieval")

_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>backstory</title></head>
<body><h1>backstory service</h1>
<p>The chat UI is not built. POST /sessions to start a session over
plain HTTP, or build the frontend and restart.</p></body></html>
"""


@dataclass
class Session:
    session_id: str
    persona: list[str]
    turns: list[dict] = field(default_factory=list)
    traces: list[dict] = field(default_factory=list)
    created: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


@dataclass
class ServiceState:
    params: LMParams
    cls: ClassifierParams
    index: StoryIndex
    vocab: Vocabulary
    personas: list[list[str]]
    decode: DecodeConfig
    session_log: Path | None = None
    seed: int = 0
    static_dir: Path | None = None
    sessions: dict[str, Session] = field(default_factory=dict)
    _ids: "itertools.count" = field(default_factory=lambda: itertools.count(1))
    _store_lock: threading.Lock = field(default_factory=threading.Lock)
    _log_lock: threading.Lock = field(default_factory=threading.Lock)
    _rng: np.random.Generator = None  # set in __post_init__

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def log(self, record: dict) -> None:
        if self.session_log is None:
            return
        with self._log_lock:
            with open(self.session_log, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def build_state(*, lm_path, classifier_path, index_path, vocab_path,
                personas_path, decode: DecodeConfig | None = None,
                session_log=None, seed: int = 0,
                static_dir=None) -> ServiceState:
    params = load_lm(lm_path)
    vocab = Vocabulary.load(vocab_path)
    cls, fingerprint = load_classifier(classifier_path)
    if fingerprint != params.fingerprint():
        raise ValidationError(
            "classifier was trained against a different model checkpoint")
    index = load_index(index_path, params=params, vocab=vocab)
    personas = [list(row["attributes"]) for row in read_jsonl(personas_path)]
    if not personas:
        raise ValidationError(f"no personas in {personas_path}")
    return ServiceState(params=params, cls=cls, index=index, vocab=vocab,
                        personas=personas, decode=decode or DecodeConfig(),
                        session_log=Path(session_log) if session_log else None,
                        seed=seed,
                        static_dir=Path(static_dir) if static_dir else None)


class CreateSessionBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    persona: list[str] | str | None = None


class MessageBody(BaseModel):
    model_config = ConfigDict(extra="forbid")
    text: str
    baseline: str | None = None
    overrides: dict | None = None


def _error(status: int, error: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": error, "detail": detail})


def _history(session: Session) -> DialogHistory:
    # A failed decode leaves the session ending in a user turn, so a retry
    # produces two user turns in a row.  The stored log keeps them separate;
    # the decode-time view joins runs so the history still alternates.
    turns: list[Turn] = []
    for t in session.turns:
        if turns and turns[-1].speaker == t["speaker"]:
            turns[-1] = Turn(t["speaker"], turns[-1].text + " " + t["text"])
        else:
            turns.append(Turn(t["speaker"], t["text"]))
    return DialogHistory(turns)


def _apply_overrides(base: DecodeConfig, overrides: dict | None,
                     seed: int) -> DecodeConfig:
    cfg = dataclasses.replace(base, seed=seed)
    if not overrides:
        return cfg
    valid = {f.name for f in dataclasses.fields(DecodeConfig)}
    unknown = sorted(set(overrides) - valid)
    if unknown:
        raise ValidationError(f"unknown override keys: {', '.join(unknown)}")
    if "seed" in overrides:
        raise ValidationError("seed cannot be overridden per message")
    try:
        return dataclasses.replace(cfg, **overrides)
    except TypeError as exc:
        raise ValidationError(f"bad override value: {exc}") from exc


def _decode_turn(state: ServiceState, session: Session,
                 baseline: str | None, overrides: dict | None) -> dict:
    """Produce the agent turn for a session whose last turn is the user's."""
    cfg = _apply_overrides(state.decode, overrides,
                           seed=state.seed + len(session.turns))
    history = _history(session)
    persona = Persona(session.persona)

    if baseline is None:
        decoded = respond(state.params, state.cls, state.index, state.vocab,
                          history, persona, cfg)
        trace = {
            "mode": "backstory",
            "attribute": decoded.attribute,
            "story_id": decoded.story_id,
            "story_text": decoded.story_text,
            "iterations": len(decoded.trace),
            "final_loss": decoded.trace[-1].total if decoded.trace else None,
            "losses": [t.total for t in decoded.trace],
            "warning": decoded.warning,
        }
        return {"reply": decoded.text, "trace": trace}

    # Baselines share the pipeline's attribute choice so traces stay
    # comparable side by side.
    dist = attribute_distribution(state.params, history, persona, state.vocab,
                                  window=cfg.history_window)
    idx = sample_attribute(dist, cfg.seed,
                           greedy=cfg.attribute_mode == "argmax")
    attribute = persona.attributes[idx]
    if baseline == "retrieval":
        story = first_person_story(state.index, attribute)
        trace = {"mode": "retrieval", "attribute": attribute,
                 "story_id": story.story_id, "story_text": story.text,
                 "iterations": 0, "final_loss": None, "losses": [],
                 "warning": story.warning}
        return {"reply": story.text, "trace": trace}
    if baseline == "nucleus":
        ctx = encode_context(history, attribute, state.vocab,
                             cfg.history_window)
        ids = nucleus_decode(state.params, ctx, cfg.max_len, p=0.9,
                             seed=cfg.seed)
        trace = {"mode": "nucleus", "attribute": attribute,
                 "story_id": None, "story_text": None,
                 "iterations": 0, "final_loss": None, "losses": [],
                 "warning": None}
        return {"reply": state.vocab.decode(ids), "trace": trace}
    raise ValidationError(
        f"unknown baseline {baseline!r}; expected one of {BASELINES}")


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="backstory chat service")

    @app.exception_handler(ValidationError)
    async def _validation(_req: Request, exc: ValidationError):
        return _error(400, "validation", str(exc))

    @app.exception_handler(NumericError)
    async def _numeric(_req: Request, exc: NumericError):
        return _error(500, "numeric", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _body_shape(_req: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(p) for p in first.get("loc", ()))
        return _error(400, "validation",
                      f"{where}: {first.get('msg', 'invalid request body')}")

    @app.get("/", response_class=HTMLResponse)
    def root():
        if state.static_dir is not None:
            page = state.static_dir / "index.html"
            if page.exists():
                return HTMLResponse(page.read_text(encoding="utf-8"))
        return HTMLResponse(_PLACEHOLDER_PAGE)

    @app.get("/app.js")
    def app_js():
        if state.static_dir is not None:
            bundle = state.static_dir / "app.js"
            if bundle.exists():
                from fastapi.responses import Response
                return Response(bundle.read_text(encoding="utf-8"),
                                media_type="text/javascript")
        return _error(404, "not_found", "frontend bundle is not built")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok",
                "model_version": state.params.fingerprint()}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        spec = body.persona
        if spec is None or spec == "random":
            pick = int(state._rng.integers(len(state.personas)))
            attributes = list(state.personas[pick])
        elif isinstance(spec, str):
            raise ValidationError(
                f"persona must be a list of attributes or \"random\", "
                f"got {spec!r}")
        else:
            attributes = [a for a in (s.strip() for s in spec) if a]
            persona = Persona(attributes)
            persona.check(state.vocab)
        with state._store_lock:
            sid = f"sess-{next(state._ids):06d}"
            state.sessions[sid] = Session(session_id=sid, persona=attributes)
        state.log({"event": "create", "session_id": sid,
                   "persona": attributes})
        return {"session_id": sid, "persona": attributes}

    def _get(sid: str) -> Session | None:
        with state._store_lock:
            return state.sessions.get(sid)

    @app.post("/sessions/{sid}/messages")
    def post_message(sid: str, body: MessageBody):
        session = _get(sid)
        if session is None:
            return _error(404, "unknown_session", f"no session {sid!r}")
        text = body.text.strip()
        if not text:
            raise ValidationError("message text is empty")
        if body.baseline is not None and body.baseline not in BASELINES:
            raise ValidationError(
                f"unknown baseline {body.baseline!r}; "
                f"expected one of {BASELINES}")
        if not session.lock.acquire(blocking=False):
            return _error(409, "busy",
                          "a decode is already in flight for this session; "
                          "retry after it finishes")
        try:
            session.turns.append({"speaker": "user", "text": text})
            state.log({"event": "turn", "session_id": sid, "speaker": "user",
                       "text": text})
            try:
                result = _decode_turn(state, session, body.baseline,
                                      body.overrides)
            except ValidationError:
                # a rejected request must not leave the user turn either
                session.turns.pop()
                raise
            except NumericError:
                raise  # user turn kept, agent turn absent
            session.turns.append({"speaker": "agent",
                                  "text": result["reply"]})
            session.traces.append(result["trace"])
            state.log({"event": "turn", "session_id": sid, "speaker": "agent",
                       "text": result["reply"], "trace": result["trace"]})
            return result
        finally:
            session.lock.release()

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        session = _get(sid)
        if session is None:
            return _error(404, "unknown_session", f"no session {sid!r}")
        return {"session_id": session.session_id,
                "persona": list(session.persona),
                "turns": [dict(t) for t in session.turns],
                "traces": [dict(t) for t in session.traces]}

    return app
