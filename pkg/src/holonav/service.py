"""Long-running navigation service: one session, many operator consoles.

Two transports speak the same protocol: newline-delimited JSON over TCP and
JSON text frames over WebSocket (for browsers). All client messages funnel
through a single ordered queue into the session owner, so command application
is strictly serialized. Every applied event is appended (and flushed) to the
JSON-lines log before any broadcast goes out; restarting the service replays
the log.
"""

from __future__ import annotations

import asyncio
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import websockets

from . import wire
from .errors import StateError, WireError
from .geometry import FiducialSet, invert
from .scene import SimulationRig
from .session import (
    Annotation,
    Command,
    CommandKind,
    NavigationSession,
    replay_events,
    read_log,
)
from .tracking_sim import NoiseModel, sample_to_dict
from .volume import read_volume

__all__ = ["ServiceConfig", "NavigationService", "ENV_PREFIX"]

ENV_PREFIX = "HOLONAV_"

_RIG_COMMANDS = {"move_pointer", "move_glasses"}
_SESSION_COMMANDS = {k.value for k in CommandKind}


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    ws_port: int = 8766
    tick_rate_hz: float = 30.0
    log_path: str | None = None
    sigma_pos_mm: float = 0.5
    sigma_rot_rad: float = 5e-4
    seed: int = 0
    volume_path: str | None = None

    @classmethod
    def load(cls, path=None, env=None) -> "ServiceConfig":
        """Config file (JSON) plus HOLONAV_* environment overrides."""
        env = os.environ if env is None else env
        values = {}
        if path is not None:
            with open(path, "r", encoding="utf-8") as f:
                doc = json.load(f)
            noise = doc.pop("noise", {})
            values.update({k: v for k, v in doc.items() if v is not None})
            if "sigma_pos_mm" in noise:
                values["sigma_pos_mm"] = noise["sigma_pos_mm"]
            if "sigma_rot_rad" in noise:
                values["sigma_rot_rad"] = noise["sigma_rot_rad"]
        casts = {
            "host": str, "port": int, "ws_port": int, "tick_rate_hz": float,
            "log_path": str, "sigma_pos_mm": float, "sigma_rot_rad": float,
            "seed": int, "volume_path": str,
        }
        env_names = {
            "host": "HOST", "port": "PORT", "ws_port": "WS_PORT",
            "tick_rate_hz": "TICK_RATE", "log_path": "LOG",
            "sigma_pos_mm": "SIGMA_POS", "sigma_rot_rad": "SIGMA_ROT",
            "seed": "SEED", "volume_path": "VOLUME",
        }
        for field_name, env_name in env_names.items():
            raw = env.get(ENV_PREFIX + env_name)
            if raw is not None:
                values[field_name] = casts[field_name](raw)
        known = set(casts)
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)


class _Connection:
    """One client on either transport; owns its outbound seq counter."""

    _next_id = 0

    def __init__(self, label: str):
        _Connection._next_id += 1
        self.id = _Connection._next_id
        self.label = label
        self.outbox: asyncio.Queue[bytes | None] = asyncio.Queue()
        self._seq = 0

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq


class NavigationService:
    def __init__(self, config: ServiceConfig | None = None):
        self.config = config or ServiceConfig()
        self.session = NavigationSession()
        self.rig = SimulationRig.default(
            noise=NoiseModel(self.config.sigma_pos_mm, self.config.sigma_rot_rad),
            seed=self.config.seed,
        )
        self.volume = None
        self._log_file = None
        self._connections: set[_Connection] = set()
        self._inbox: asyncio.Queue = asyncio.Queue()
        self._tasks: list[asyncio.Task] = []
        self._tcp_server = None
        self._ws_server = None
        self._sim_time = 0.0

    # -- lifecycle -------------------------------------------------------------

    async def start(self) -> None:
        self._open_log()
        self._tcp_server = await asyncio.start_server(
            self._serve_tcp_client, self.config.host, self.config.port, limit=2**20
        )
        self._ws_server = await websockets.serve(
            self._serve_ws_client, self.config.host, self.config.ws_port, max_size=2**20
        )
        self._tasks.append(asyncio.create_task(self._owner_loop()))
        self._tasks.append(asyncio.create_task(self._tick_loop()))

    @property
    def tcp_port(self) -> int:
        return self._tcp_server.sockets[0].getsockname()[1]

    @property
    def ws_port(self) -> int:
        return next(iter(self._ws_server.sockets)).getsockname()[1]

    async def stop(self) -> None:
        for task in self._tasks:
            task.cancel()
        for task in self._tasks:
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass
        self._tasks.clear()
        if self._tcp_server is not None:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        if self._ws_server is not None:
            self._ws_server.close()
            await self._ws_server.wait_closed()
        for conn in list(self._connections):
            conn.outbox.put_nowait(None)
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None

    async def run_forever(self) -> None:
        await self.start()
        try:
            await asyncio.Event().wait()
        finally:
            await self.stop()

    def _open_log(self) -> None:
        path = self.config.log_path
        if path is None:
            return
        existing = Path(path)
        if existing.exists() and existing.stat().st_size > 0:
            self.session = replay_events(read_log(path))
            self._restore_volume()
        # Unwritable paths must fail startup, never lose events silently.
        self._log_file = open(path, "a", encoding="utf-8")

    def _restore_volume(self) -> None:
        info = self.session.volume_info
        if not info:
            return
        source = info.get("source", "default-phantom")
        self.volume = (
            read_volume(source) if source != "default-phantom" else self.rig.synthesize_volume()
        )

    def _append_log(self, event) -> None:
        if self._log_file is not None:
            self._log_file.write(event.to_json_line() + "\n")
            self._log_file.flush()

    # -- transports --------------------------------------------------------------

    async def _serve_tcp_client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        conn = _Connection("tcp")
        self._register(conn)

        async def pump_out():
            while True:
                chunk = await conn.outbox.get()
                if chunk is None:
                    break
                writer.write(chunk)
                await writer.drain()

        out_task = asyncio.create_task(pump_out())
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                if line.strip():
                    await self._inbox.put((conn, line))
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            self._unregister(conn)
            out_task.cancel()
            writer.close()

    async def _serve_ws_client(self, ws):
        conn = _Connection("ws")
        self._register(conn)

        async def pump_out():
            while True:
                chunk = await conn.outbox.get()
                if chunk is None:
                    break
                await ws.send(chunk.decode("utf-8"))

        out_task = asyncio.create_task(pump_out())
        try:
            async for message in ws:
                await self._inbox.put((conn, message))
        except websockets.ConnectionClosed:
            pass
        finally:
            self._unregister(conn)
            out_task.cancel()

    def _register(self, conn: _Connection) -> None:
        self._connections.add(conn)
        self._send(conn, "state_snapshot", self._snapshot_payload())

    def _unregister(self, conn: _Connection) -> None:
        self._connections.discard(conn)

    # -- message fan-out -----------------------------------------------------------

    def _send(self, conn: _Connection, kind: str, payload: dict, in_reply_to: int | None = None):
        msg = wire.make_message(kind, payload, conn.next_seq(), in_reply_to)
        conn.outbox.put_nowait(wire.encode(msg))

    def _broadcast(self, kind: str, payload: dict, origin: _Connection | None = None,
                   in_reply_to: int | None = None):
        for conn in self._connections:
            self._send(conn, kind, payload, in_reply_to if conn is origin else None)

    def _snapshot_payload(self) -> dict:
        snapshot = self.session.snapshot()
        snapshot["scene"] = self.rig.scene_summary(self.volume)
        return snapshot

    # -- owner loop -------------------------------------------------------------------

    async def _owner_loop(self):
        while True:
            conn, raw = await self._inbox.get()
            if conn not in self._connections:
                continue
            try:
                msg = wire.decode_client_line(raw)
            except WireError as e:
                self._send(conn, "error", {"reason": str(e)})
                continue
            try:
                self._dispatch(conn, msg)
            except Exception as e:  # a bad client must never kill the service
                self._send(conn, "error", {"reason": f"internal error: {e}"}, msg.get("seq"))

    def _dispatch(self, conn: _Connection, msg: dict) -> None:
        client_seq = msg["seq"]
        payload = msg["payload"]
        if msg["kind"] == "annotation_event":
            self._handle_annotation(conn, client_seq, payload)
            return
        name = payload.get("name")
        params = payload.get("params") or {}
        if name in _RIG_COMMANDS:
            getattr(self.rig, name)(
                position_mm=params.get("position_mm"), rotation_wxyz=params.get("rotation_wxyz")
            )
            self._send(conn, "state_snapshot", self._snapshot_payload(), client_seq)
            return
        if name not in _SESSION_COMMANDS:
            self._send(
                conn, "command_rejected",
                {"command": name, "state": self.session.state.value,
                 "reason": f"unknown command {name!r}"},
                client_seq,
            )
            return
        try:
            cmd = self._build_session_command(name, params)
        except (ValueError, StateError, RuntimeError, OSError) as e:
            self._send(
                conn, "command_rejected",
                {"command": name, "state": self.session.state.value, "reason": str(e)},
                client_seq,
            )
            return
        outcome = self.session.handle_command(cmd)
        if not outcome.accepted:
            self._send(
                conn, "command_rejected",
                {"command": name, "state": self.session.state.value, "reason": outcome.reason},
                client_seq,
            )
            return
        self._append_log(outcome.event)
        self._broadcast("state_snapshot", self._snapshot_payload(), origin=conn, in_reply_to=client_seq)

    def _handle_annotation(self, conn: _Connection, client_seq: int, payload: dict) -> None:
        try:
            annotation = Annotation.from_dict(payload)
            outcome = self.session.apply_remote_annotation(annotation)
        except (KeyError, ValueError, StateError) as e:
            self._send(conn, "error", {"reason": f"annotation rejected: {e}"}, client_seq)
            return
        if outcome.event is None:
            return  # duplicate id: idempotent, no second broadcast
        self._append_log(outcome.event)
        self._broadcast("annotation_event", annotation.to_dict(), origin=conn, in_reply_to=client_seq)

    # -- session command construction ----------------------------------------------------

    def _build_session_command(self, name: str, params: dict) -> Command:
        kind = CommandKind(name)
        if kind is CommandKind.LOAD_VOLUME:
            path = params.get("volume_path", self.config.volume_path)
            if path is not None:
                self.volume = read_volume(path)
                source = str(path)
            else:
                self.volume = self.rig.synthesize_volume()
                source = "default-phantom"
            info = {
                "dims": list(self.volume.dims),
                "spacing_mm": list(self.volume.spacing),
                "origin_mm": self.volume.origin.tolist(),
                "source": source,
            }
            return Command(kind, volume_info=info)
        if kind is CommandKind.DETECT_FIDUCIALS:
            if self.volume is None:
                raise StateError("no volume loaded")
            detections = self.rig.detect(self.volume)
            return Command(kind, fiducials_mm=[list(p) for p in detections.points])
        if kind is CommandKind.CALIBRATE:
            sol, accepted, reasons = self.rig.calibrate()
            if not accepted:
                raise ValueError("calibration rejected: " + "; ".join(reasons))
            return Command(kind, calibration=sol)
        if kind is CommandKind.REGISTER:
            if not self.session.fiducials_patient:
                raise StateError("no detected fiducials to register against")
            fiducials = FiducialSet(np.asarray(self.session.fiducials_patient, dtype=float),
                                    frame="patient")
            return Command(kind, registration=self.rig.register(fiducials))
        if kind is CommandKind.SET_OPACITY:
            return Command(kind, opacity=params.get("value"))
        if kind in (CommandKind.MARK_POINT, CommandKind.APPEND_OUTLINE, CommandKind.BEGIN_OUTLINE):
            point = params.get("point_mm")
            if point is None and kind is not CommandKind.BEGIN_OUTLINE:
                point = self._pointer_tip_patient()
            return Command(kind, point_mm=tuple(point) if point is not None else None,
                           label=params.get("label", ""))
        if kind is CommandKind.END_OUTLINE:
            return Command(kind, label=params.get("label", ""))
        return Command(kind)

    def _pointer_tip_patient(self):
        """Current pointer tip mapped into patient coordinates via the registration."""
        if self.session.registration is None:
            raise StateError("pointer marking requires a registration")
        tip_world = self.rig.pointer_tip_world(self.session.calibration)
        return invert(self.session.registration.world_from_patient).apply(tip_world).tolist()

    # -- simulator ticks -------------------------------------------------------------------

    async def _tick_loop(self):
        period = 1.0 / self.config.tick_rate_hz
        while True:
            for sample in self.rig.tick_samples(self._sim_time):
                self._broadcast("tracking_sample", sample_to_dict(sample))
            self._sim_time += period
            await asyncio.sleep(period)
