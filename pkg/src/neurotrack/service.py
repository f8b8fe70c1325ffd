"""Session service: HTTP control plane plus a per-session WebSocket stream
for the interactive applications.

Sessions live in process memory and are isolated from each other; the
batch CLI and this service drive the same engine functions, so identical
seeds produce identical trial logs through either path.

The stream is stepped explicitly with {"type": "command", "action":
"step"} or paced by the server at one decode step per ``step_seconds``
after {"action": "start_pacing"}. Gaze samples arrive asynchronously;
each step consumes the latest one. Gaze older than 2 s (or more than 2
steps) counts as stale and the step holds in place instead of drifting.
"""

from __future__ import annotations

import asyncio
import secrets
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse, Response
from pydantic import BaseModel

from .apps import (
    PaintingState,
    SnakeState,
    new_game,
    new_painting,
    paint_step,
    painting_to_json,
    painting_to_svg,
    set_brush,
    snake_step,
    snake_to_json,
)
from .core import SessionConfig, Vec2
from .dsp import FilterBankSpec
from .engine import (
    TASK_CODES,
    DecoderBundle,
    JitterReport,
    TrialRecord,
    _decode_epoch,
    run_fixed_task,
    run_jitter_inspection,
    run_random_task,
    serialize_trial,
    session_wn_bank,
    train_decoder,
)
from .metrics import build_metrics
from .stimulus import bank_to_json
from .synth import SyntheticSubject, subject_from_params
from .trca import correlate, model_blob, model_meta
from .velocity import decay_profile, decode_velocity

STALE_GAZE_SECONDS = 2.0
STALE_GAZE_STEPS = 2
INTERACTIVE_PHASES = ("painting", "snake")
TASKS = ("fixed", "random", "jitter", "painting", "snake")


class CreateSessionBody(BaseModel):
    config: dict = {}
    filter_bank: dict = {}
    subject: dict = {}


class TaskBody(BaseModel):
    task: str
    options: dict = {}


@dataclass
class Session:
    session_id: str
    config: SessionConfig
    filter_bank: FilterBankSpec
    subject: SyntheticSubject
    phase: str = "idle"
    bundle: DecoderBundle | None = None
    regression_residual: float | None = None
    records: list[TrialRecord] = field(default_factory=list)
    jitter: JitterReport | None = None
    # interactive loop state
    cursor: Vec2 = (0.0, 0.0)
    step_index: int = 0
    last_gaze: Vec2 | None = None
    last_gaze_time: float | None = None
    last_gaze_step: int | None = None
    painting: PaintingState | None = None
    snake: SnakeState | None = None

    def gaze_is_stale(self) -> bool:
        if self.last_gaze is None:
            return True
        if time.monotonic() - self.last_gaze_time > STALE_GAZE_SECONDS:
            return True
        return self.step_index - self.last_gaze_step > STALE_GAZE_STEPS

    def state_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "phase": self.phase,
            "trained": self.bundle is not None,
            "n_records": len(self.records),
            "tasks_run": sorted({r.task for r in self.records}),
            "cursor": [self.cursor[0], self.cursor[1]],
            "step_index": self.step_index,
            "snake": None if self.snake is None else self.snake.to_dict(),
            "painting": None if self.painting is None else {
                "n_strokes": len(self.painting.strokes),
                "brush_down": self.painting.brush_down,
            },
        }


def create_app() -> FastAPI:
    app = FastAPI(title="neurotrack")
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions

    def get_session(session_id: str) -> Session:
        sess = sessions.get(session_id)
        if sess is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return sess

    @app.post("/sessions")
    def create_session(body: CreateSessionBody) -> dict:
        try:
            config = SessionConfig.from_dict(body.config)
            spec = FilterBankSpec.from_dict(body.filter_bank)
            subject = subject_from_params(body.subject)
        except (ValueError, TypeError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session_id = secrets.token_hex(8)
        sessions[session_id] = Session(session_id=session_id, config=config,
                                       filter_bank=spec, subject=subject)
        return {"session_id": session_id, "phase": "idle",
                "config": config.to_dict()}

    @app.post("/sessions/{session_id}/train")
    def train(session_id: str) -> dict:
        sess = get_session(session_id)
        if sess.phase != "idle":
            raise HTTPException(status_code=409,
                                detail=f"cannot train in phase {sess.phase}")
        sess.phase = "training"
        try:
            bundle, data = train_decoder(sess.subject, sess.config,
                                         sess.filter_bank)
        finally:
            sess.phase = "idle"
        sess.bundle = bundle
        d_mat, i_mat = data.matrices()
        residual = float(np.linalg.norm(d_mat @ bundle.velocity_weight.matrix - i_mat))
        sess.regression_residual = residual
        return {
            "filter_norms": [float(np.linalg.norm(f)) for f in bundle.trca.filters],
            "regression_residual": residual,
            "n_regression_rows": int(d_mat.shape[0]),
            "n_templates": bundle.trca.n_regions,
        }

    @app.post("/sessions/{session_id}/tasks")
    def start_task(session_id: str, body: TaskBody) -> dict:
        sess = get_session(session_id)
        if body.task == "idle":
            if sess.phase not in INTERACTIVE_PHASES:
                raise HTTPException(status_code=409,
                                    detail=f"not in an interactive phase")
            sess.phase = "idle"
            return {"session_id": session_id, "phase": "idle"}
        if body.task not in TASKS:
            raise HTTPException(status_code=422, detail=f"unknown task {body.task!r}")
        if sess.phase != "idle":
            raise HTTPException(status_code=409,
                                detail=f"busy: phase is {sess.phase}")
        if sess.bundle is None:
            raise HTTPException(status_code=409, detail="train before starting a task")

        if body.task == "fixed":
            sess.phase = "fixed"
            try:
                records = run_fixed_task(sess.subject, sess.bundle, sess.config)
            finally:
                sess.phase = "idle"
            sess.records.extend(records)
            return _task_summary(session_id, "fixed", records)
        if body.task == "random":
            sess.phase = "random"
            try:
                records = run_random_task(sess.subject, sess.bundle, sess.config)
            finally:
                sess.phase = "idle"
            sess.records.extend(records)
            return _task_summary(session_id, "random", records)
        if body.task == "jitter":
            sess.phase = "jitter"
            try:
                sess.jitter = run_jitter_inspection(sess.subject, sess.bundle,
                                                    sess.config)
            finally:
                sess.phase = "idle"
            sess.records.extend(sess.jitter.records)
            return {"session_id": session_id, "task": "jitter",
                    "n_traces": sess.jitter.n_traces, "phase": "idle"}
        if body.task == "painting":
            sess.phase = "painting"
            sess.painting = new_painting(sess.config)
            sess.cursor = (0.0, 0.0)
            return {"session_id": session_id, "phase": "painting"}
        sess.phase = "snake"
        grid = int(body.options.get("grid", 16))
        seed = int(body.options.get("food_seed", sess.config.rng_seed))
        sess.snake = new_game(grid, grid, seed)
        sess.cursor = (0.0, 0.0)
        return {"session_id": session_id, "phase": "snake",
                "snake": sess.snake.to_dict()}

    def _task_summary(session_id: str, task: str, records) -> dict:
        return {
            "session_id": session_id,
            "task": task,
            "n_trials": len(records),
            "n_hits": sum(1 for r in records if r.outcome == "hit"),
            "phase": "idle",
        }

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str) -> dict:
        return get_session(session_id).state_dict()

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str, what: str) -> Response:
        sess = get_session(session_id)
        if what == "metrics":
            if not sess.records:
                raise HTTPException(status_code=409, detail="no trial records yet")
            report = build_metrics(sess.records, sess.config)
            return Response(content=report.to_json(), media_type="application/json")
        if what == "log":
            if not sess.records:
                raise HTTPException(status_code=409, detail="no trial records yet")
            text = "".join(serialize_trial(r) + "\n" for r in sess.records)
            return PlainTextResponse(text)
        if what == "wn_bank":
            bank = sess.bundle.wn_bank if sess.bundle else session_wn_bank(sess.config)
            return Response(content=bank_to_json(bank), media_type="application/json")
        if what == "config":
            import json as _json
            doc = {"session": sess.config.to_dict(),
                   "filter_bank": sess.filter_bank.to_dict()}
            return Response(content=_json.dumps(doc, indent=2, sort_keys=True) + "\n",
                            media_type="application/json")
        if what == "jitter":
            if sess.jitter is None:
                raise HTTPException(status_code=409, detail="jitter inspection not run")
            import json as _json
            return Response(content=_json.dumps(sess.jitter.to_dict(), sort_keys=True),
                            media_type="application/json")
        if what == "painting_svg":
            if sess.painting is None:
                raise HTTPException(status_code=409, detail="no painting state")
            return Response(content=painting_to_svg(sess.painting),
                            media_type="image/svg+xml")
        if what == "painting":
            if sess.painting is None:
                raise HTTPException(status_code=409, detail="no painting state")
            return Response(content=painting_to_json(sess.painting),
                            media_type="application/json")
        if what == "snake":
            if sess.snake is None:
                raise HTTPException(status_code=409, detail="no snake game")
            return Response(content=snake_to_json(sess.snake),
                            media_type="application/json")
        if what == "model":
            if sess.bundle is None:
                raise HTTPException(status_code=409, detail="train first")
            blob = model_blob(sess.bundle.trca, sess.bundle.velocity_weight.matrix)
            return Response(content=blob, media_type="application/octet-stream")
        if what == "model_meta":
            if sess.bundle is None:
                raise HTTPException(status_code=409, detail="train first")
            import json as _json
            meta = model_meta(sess.bundle.trca, sess.bundle.filter_bank,
                              sess.bundle.velocity_weight.kind)
            return Response(content=_json.dumps(meta, indent=2, sort_keys=True) + "\n",
                            media_type="application/json")
        raise HTTPException(status_code=422, detail=f"unknown export {what!r}")

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str) -> None:
        await websocket.accept()
        sess = sessions.get(session_id)
        if sess is None:
            await websocket.send_json({"type": "error",
                                       "message": f"no session {session_id}"})
            await websocket.close(code=4404)
            return
        pacing_task: asyncio.Task | None = None

        async def run_step() -> None:
            frame = _advance_step(sess)
            await websocket.send_json(frame)
            if sess.phase == "snake" and sess.snake is not None:
                await websocket.send_json({"type": "snake_state",
                                           "state": sess.snake.to_dict()})
            elif sess.phase == "painting" and sess.painting is not None:
                last = None
                if sess.painting.strokes and sess.painting.strokes[-1]:
                    p = sess.painting.strokes[-1][-1]
                    last = [p[0], p[1]]
                await websocket.send_json({
                    "type": "paint_state",
                    "n_strokes": len(sess.painting.strokes),
                    "brush_down": sess.painting.brush_down,
                    "last_point": last,
                })

        async def pace() -> None:
            while sess.phase in INTERACTIVE_PHASES:
                await run_step()
                await asyncio.sleep(sess.config.step_seconds)

        try:
            while True:
                try:
                    message = await websocket.receive_json()
                except WebSocketDisconnect:
                    raise
                except Exception:
                    await websocket.send_json({"type": "error",
                                               "message": "malformed message"})
                    continue
                if not isinstance(message, dict) or "type" not in message:
                    await websocket.send_json({"type": "error",
                                               "message": "message needs a type"})
                    continue
                kind = message["type"]
                if kind == "gaze":
                    try:
                        sess.last_gaze = (float(message["x"]), float(message["y"]))
                    except (KeyError, TypeError, ValueError):
                        await websocket.send_json({"type": "error",
                                                   "message": "gaze needs numeric x, y"})
                        continue
                    sess.last_gaze_time = time.monotonic()
                    sess.last_gaze_step = sess.step_index
                elif kind == "brush":
                    if sess.phase != "painting" or sess.painting is None:
                        await websocket.send_json({"type": "error",
                                                   "message": "brush outside painting"})
                        continue
                    set_brush(sess.painting, bool(message.get("down", False)))
                    await websocket.send_json({
                        "type": "paint_state",
                        "n_strokes": len(sess.painting.strokes),
                        "brush_down": sess.painting.brush_down,
                        "last_point": None,
                    })
                elif kind == "command":
                    action = message.get("action")
                    if action == "step":
                        if sess.phase not in INTERACTIVE_PHASES:
                            await websocket.send_json({"type": "error",
                                                       "message": "no interactive task running"})
                            continue
                        await run_step()
                    elif action == "start_pacing":
                        if sess.phase not in INTERACTIVE_PHASES:
                            await websocket.send_json({"type": "error",
                                                       "message": "no interactive task running"})
                            continue
                        if pacing_task is None or pacing_task.done():
                            pacing_task = asyncio.create_task(pace())
                    elif action == "stop_pacing":
                        if pacing_task is not None:
                            pacing_task.cancel()
                            pacing_task = None
                    elif action == "stop":
                        if pacing_task is not None:
                            pacing_task.cancel()
                            pacing_task = None
                        sess.phase = "idle"
                        await websocket.send_json({"type": "trial_event",
                                                   "event": "stopped"})
                    else:
                        await websocket.send_json({"type": "error",
                                                   "message": f"unknown action {action!r}"})
                else:
                    await websocket.send_json({"type": "error",
                                               "message": f"unknown message type {kind!r}"})
        except WebSocketDisconnect:
            pass
        finally:
            if pacing_task is not None:
                pacing_task.cancel()

    return app


def _advance_step(sess: Session) -> dict:
    """Run one interactive decode step and return the frame message."""
    config = sess.config
    n = config.n_regions
    stale = sess.gaze_is_stale()
    rho = np.zeros(n)
    vel = (0.0, 0.0)
    if not stale and sess.bundle is not None:
        bundle = sess.bundle
        epoch = _decode_epoch(sess.subject, sess.last_gaze, sess.cursor,
                              bundle.wn_bank, config, bundle.filter_bank,
                              (TASK_CODES["interactive"], 0, sess.step_index))
        rho = correlate(bundle.trca, epoch, bundle.filter_bank)
        if sess.phase == "snake" and sess.snake is not None:
            if sess.snake.alive:
                sess.snake = snake_step(sess.snake, rho)
        else:
            v = decode_velocity(rho, bundle.velocity_weight,
                                max_speed_px=config.screen_width_px / 2.0)
            vel = (float(v[0]), float(v[1]))
            disp = decay_profile(v, config.frames_per_step)
            x, y = sess.cursor
            for f in range(config.frames_per_step):
                x += float(disp[f, 0])
                y += float(disp[f, 1])
                if sess.painting is not None:
                    paint_step(sess.painting, (x, y))
            sess.cursor = (x, y)
    sess.step_index += 1
    return {
        "type": "frame",
        "step_index": sess.step_index - 1,
        "cursor": [sess.cursor[0], sess.cursor[1]],
        "rho": [float(r) for r in rho],
        "velocity": [vel[0], vel[1]],
        "stale_gaze": stale,
    }


app = create_app()
