"""Live simulation service: HTTP session control, websocket streaming and steering.

One simulation loop thread per session owns the engine; network handlers
talk to it only through a command queue (in) and a latest-snapshot slot
(out, drop-oldest by construction), so slow clients can never stall the
loop. Commands are quantized to the simulation step at which the loop
drains them and logged, making any live session replayable bit for bit.
"""
from __future__ import annotations

import json
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import anyio
import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .diagnostics import theorem2_bounds
from .engine import Engine
from .scenario import InvalidConfig, load_scenario
from .scenarios import field_scenario
from .traceio import export_metrics, summarize


@dataclass
class ServiceSettings:
    snapshot_rate: float = 30.0
    realtime_ratio: float = 1.0
    v_max: float = 5.0
    max_sessions: int = 1
    default_document: dict | None = None
    out_dir: str = "sessions"


class Session:
    """A hosted simulation: loop thread, command queue, snapshot slot."""

    def __init__(self, sid: str, document: dict, settings: ServiceSettings):
        document = dict(document)
        target = dict(document.get("target", {}))
        if target.get("mode") != "external":
            raise InvalidConfig("service sessions need target mode 'external'")
        target.setdefault("v_max", settings.v_max)
        document["target"] = target
        self.sid = sid
        self.config = load_scenario(document)
        self.engine = Engine(self.config)
        self.settings = settings
        self.status = "idle"
        self.clients = 0
        self.seq = 0
        self.snapshot_slot: dict | None = None
        self.commands: deque = deque()
        self.last_command_seq = -1
        self._lock = threading.Lock()
        self._thread: threading.Thread | None = None
        self._stop_flag = threading.Event()
        self._pause_flag = threading.Event()
        self._wall_anchor = 0.0
        self._sim_anchor = 0.0
        self.export_paths: dict | None = None
        self._channel_bounds = self._bounds_table()

    def _bounds_table(self) -> dict:
        table = {}
        for j, ch in enumerate(self.config.channels):
            if ch.adaptive is None:
                continue
            model = self.engine.uncertainty[j]
            try:
                bounds, _ = theorem2_bounds(
                    ch.adaptive, ch.network, self.engine.graph,
                    model.magnitude_norm(), model.rate_norm(),
                )
                table[ch.name] = bounds
            except ValueError:
                continue
        return table

    # ------------------------------------------------------------- control
    def start(self):
        if self._thread is not None:
            raise RuntimeError("already started")
        self.status = "running"
        self._wall_anchor = time.monotonic()
        self._sim_anchor = 0.0
        self._thread = threading.Thread(target=self._loop, daemon=True,
                                        name=f"apnet-session-{self.sid}")
        self._thread.start()

    def pause(self):
        with self._lock:
            if self.status == "running":
                self._pause_flag.set()
                self.status = "paused"

    def resume(self):
        with self._lock:
            if self.status == "paused":
                self._sim_anchor = self.engine.t
                self._wall_anchor = time.monotonic()
                self._pause_flag.clear()
                self.status = "running"

    def stop(self):
        self._stop_flag.set()
        if self._thread is not None:
            self._thread.join(timeout=10.0)

    # ---------------------------------------------------------------- loop
    def _loop(self):
        engine = self.engine
        period = 1.0 / self.settings.snapshot_rate
        dt = self.config.dt
        engine.start()
        self._publish()
        while not self._stop_flag.is_set():
            if self._pause_flag.is_set():
                time.sleep(0.02)
                continue
            self._drain_commands()
            wall = time.monotonic() - self._wall_anchor
            sim_target = self._sim_anchor + wall * self.settings.realtime_ratio
            steps = int(sim_target / dt) - engine.step_index
            if steps > 0:
                engine.advance_steps(steps)
            self._publish()
            if engine.done:
                break
            time.sleep(period)
        self._drain_commands()
        self._export()
        with self._lock:
            self.status = "finished" if engine.done else "stopped"
        self._publish()

    def _drain_commands(self):
        while self.commands:
            x, y, seq = self.commands.popleft()
            self.engine.ingest_command(x, y, seq)

    def _publish(self):
        snap = self.engine.snapshot()
        snap["seq"] = self.seq
        snap["status"] = self.status
        snap["bounds"] = self._bound_status()
        self.snapshot_slot = snap
        self.seq += 1

    def _bound_status(self) -> dict:
        out = {}
        eng = self.engine
        for j, ch in enumerate(self.config.channels):
            if ch.name not in self._channel_bounds:
                continue
            delta_now = eng.uncertainty[j].delta_fn(eng.t)
            ex = np.linalg.norm((eng.X[:, j] + delta_now) - eng.XH[:, j] - eng.DH[:, j])
            bounds = self._channel_bounds[ch.name]
            out[ch.name] = {
                "e_x": float(ex),
                "e_x_bound": bounds["e_x"],
                "ok": bool(ex <= bounds["e_x"]),
            }
        return out

    def _export(self):
        trace = self.engine.trace.finalize()
        out = Path(self.settings.out_dir) / self.sid
        paths = export_metrics(trace, out)
        log_path = out / "commands.json"
        log_path.write_text(json.dumps(self.command_log()))
        self.export_paths = {**{k: str(v) for k, v in paths.items()},
                             "commands": str(log_path)}

    # ------------------------------------------------------------- queries
    def command_log(self) -> list:
        if hasattr(self.engine.track, "command_log"):
            return [list(c) for c in self.engine.track.command_log]
        return []

    def summary(self) -> dict:
        info = {
            "session": self.sid,
            "status": self.status,
            "scenario": self.config.name,
            "sim_time": self.engine.t,
            "steps": self.engine.step_index,
            "total_steps": self.engine.total_steps,
            "clients": self.clients,
            "latest_seq": self.seq - 1,
            "realtime_ratio": self.settings.realtime_ratio,
            "commands_ingested": len(self.command_log()),
        }
        if self.status in ("finished", "stopped"):
            info["trace"] = summarize(self.engine.trace)
            if self.export_paths:
                info["exports"] = self.export_paths
        return info

    def patch_uncertainty(self, patch: dict):
        if self.status != "paused":
            raise RuntimeError("uncertainty can only change while paused")
        from .scenario import UncertaintySpec, build_uncertainty

        name = patch["channel"]
        for j, ch in enumerate(self.config.channels):
            if ch.name == name:
                spec = UncertaintySpec(
                    kind=patch.get("kind", "constant"),
                    bounds=tuple(patch.get("bounds", (0.0, 0.0))),
                    seed=int(patch.get("seed", 0)),
                )
                self.engine.uncertainty[j] = build_uncertainty(
                    spec, self.config.graph_nodes, self.config.seed
                )
                return
        raise KeyError(name)


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings()
    app = FastAPI(title="apnet live service")
    sessions: dict[str, Session] = {}

    def active_count() -> int:
        return sum(1 for s in sessions.values() if s.status in ("idle", "running", "paused"))

    def get_session(sid: str) -> Session:
        if sid not in sessions:
            raise HTTPException(status_code=404, detail="session not found")
        return sessions[sid]

    @app.post("/sessions")
    async def create_session(document: dict | None = None):
        if active_count() >= settings.max_sessions:
            raise HTTPException(status_code=409, detail="session limit reached")
        doc = document or settings.default_document
        if not doc:
            doc = field_scenario()
            doc["target"] = {"mode": "external", "start": [10.0, 10.0],
                             "v_max": settings.v_max}
        sid = uuid.uuid4().hex[:12]
        try:
            session = Session(sid, doc, settings)
        except (InvalidConfig, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        sessions[sid] = session
        session.start()
        return {"session": sid}

    @app.post("/sessions/{sid}/pause")
    async def pause(sid: str):
        get_session(sid).pause()
        return {"status": sessions[sid].status}

    @app.post("/sessions/{sid}/resume")
    async def resume(sid: str):
        get_session(sid).resume()
        return {"status": sessions[sid].status}

    @app.post("/sessions/{sid}/stop")
    async def stop(sid: str):
        session = get_session(sid)
        await anyio.to_thread.run_sync(session.stop)
        return {"status": session.status, "exports": session.export_paths}

    @app.get("/sessions/{sid}/summary")
    async def summary(sid: str):
        return JSONResponse(get_session(sid).summary())

    @app.get("/sessions/{sid}/commands")
    async def commands(sid: str):
        return {"commands": get_session(sid).command_log()}

    @app.post("/sessions/{sid}/config")
    async def patch_config(sid: str, patch: dict):
        session = get_session(sid)
        try:
            session.patch_uncertainty(patch["uncertainty"])
        except RuntimeError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except KeyError as exc:
            raise HTTPException(status_code=400, detail=f"bad patch: {exc}") from exc
        return {"status": "patched"}

    @app.websocket("/sessions/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        if sid not in sessions:
            await ws.close(code=4404)
            return
        session = sessions[sid]
        await ws.accept()
        session.clients += 1
        last_sent = -1
        last_beat = time.monotonic()
        period = 1.0 / settings.snapshot_rate
        try:
            while True:
                snap = session.snapshot_slot
                if snap is not None and snap["seq"] > last_sent:
                    await ws.send_json(snap)
                    last_sent = snap["seq"]
                    last_beat = time.monotonic()
                elif time.monotonic() - last_beat >= 1.0:
                    await ws.send_json({"type": "heartbeat", "status": session.status,
                                        "seq": last_sent})
                    last_beat = time.monotonic()
                await anyio.sleep(period)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            session.clients -= 1

    @app.websocket("/sessions/{sid}/target")
    async def target(ws: WebSocket, sid: str):
        if sid not in sessions:
            await ws.close(code=4404)
            return
        session = sessions[sid]
        await ws.accept()
        dom = session.config.domain
        try:
            while True:
                msg = await ws.receive_json()
                if session.status != "running":
                    await ws.send_json({"error": "session not running",
                                        "ack": session.last_command_seq})
                    continue
                seq = int(msg.get("seq", -1))
                if seq <= session.last_command_seq:
                    await ws.send_json({"stale": True,
                                        "ack": session.last_command_seq})
                    continue
                x, y = float(msg["x"]), float(msg["y"])
                clamped = False
                if dom is not None:
                    cx = min(max(x, dom.x_lo), dom.x_hi)
                    cy = min(max(y, dom.y_lo), dom.y_hi)
                    clamped = (cx != x) or (cy != y)
                    x, y = cx, cy
                session.commands.append((x, y, seq))
                session.last_command_seq = seq
                await ws.send_json({"ack": seq, "clamped": clamped})
        except (WebSocketDisconnect, RuntimeError):
            pass

    app.state.sessions = sessions
    app.state.settings = settings
    return app
