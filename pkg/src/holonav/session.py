"""Navigation-session workflow: state machine, overlay chain, annotations, log.

The session is event-sourced. A command is validated against the current
state, turned into an event carrying everything needed to re-apply it, then
applied and appended to the log. Replaying a log from scratch reproduces the
final state and annotation set exactly, which is also how persistence works.

The workflow only moves forward (Idle -> VolumeLoaded -> FiducialsDetected ->
PointerCalibrated -> Registered -> Navigating); going back requires an
explicit Reset, which keeps the audit trail honest. Annotations live in the
patient frame so they survive a reset-and-re-register.
"""

from __future__ import annotations

import json
import time as _time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .calibration import PivotSolution
from .errors import ReplayError, StateError
from .geometry import RigidTransform, compose, invert
from .registration import RegistrationResult

__all__ = [
    "SessionState",
    "CommandKind",
    "Command",
    "AnnotationKind",
    "Annotation",
    "SessionEvent",
    "CommandOutcome",
    "NavigationSession",
    "outline_length",
    "replay_events",
    "read_log",
    "WORKFLOW_ORDER",
]


class SessionState(Enum):
    IDLE = "idle"
    VOLUME_LOADED = "volume_loaded"
    FIDUCIALS_DETECTED = "fiducials_detected"
    POINTER_CALIBRATED = "pointer_calibrated"
    REGISTERED = "registered"
    NAVIGATING = "navigating"

    @property
    def display_name(self) -> str:
        return "".join(part.capitalize() for part in self.value.split("_"))


WORKFLOW_ORDER = (
    SessionState.IDLE,
    SessionState.VOLUME_LOADED,
    SessionState.FIDUCIALS_DETECTED,
    SessionState.POINTER_CALIBRATED,
    SessionState.REGISTERED,
    SessionState.NAVIGATING,
)


class CommandKind(Enum):
    LOAD_VOLUME = "load_volume"
    DETECT_FIDUCIALS = "detect_fiducials"
    CALIBRATE = "calibrate"
    REGISTER = "register"
    START_NAVIGATION = "start_navigation"
    TOGGLE_MODEL_VISIBILITY = "toggle_model_visibility"
    SET_OPACITY = "set_opacity"
    MARK_POINT = "mark_point"
    BEGIN_OUTLINE = "begin_outline"
    APPEND_OUTLINE = "append_outline"
    END_OUTLINE = "end_outline"
    RESET = "reset"


# Workflow edges: command -> state it is legal in (forward transitions only).
_TRANSITION_FROM = {
    CommandKind.LOAD_VOLUME: SessionState.IDLE,
    CommandKind.DETECT_FIDUCIALS: SessionState.VOLUME_LOADED,
    CommandKind.CALIBRATE: SessionState.FIDUCIALS_DETECTED,
    CommandKind.REGISTER: SessionState.POINTER_CALIBRATED,
    CommandKind.START_NAVIGATION: SessionState.REGISTERED,
}
_TRANSITION_TO = {
    CommandKind.LOAD_VOLUME: SessionState.VOLUME_LOADED,
    CommandKind.DETECT_FIDUCIALS: SessionState.FIDUCIALS_DETECTED,
    CommandKind.CALIBRATE: SessionState.POINTER_CALIBRATED,
    CommandKind.REGISTER: SessionState.REGISTERED,
    CommandKind.START_NAVIGATION: SessionState.NAVIGATING,
}
# Annotation commands need a registration so points mean something in patient space.
_ANNOTATION_STATES = {SessionState.REGISTERED, SessionState.NAVIGATING}


class AnnotationKind(Enum):
    POINT = "point"
    POLYLINE = "polyline"
    RISK_ZONE = "risk_zone"


_MIN_POINTS = {AnnotationKind.POINT: 1, AnnotationKind.POLYLINE: 2, AnnotationKind.RISK_ZONE: 3}


@dataclass(frozen=True)
class Annotation:
    """A labeled point/polyline/closed-zone in patient coordinates (mm)."""

    id: str
    kind: AnnotationKind
    points: np.ndarray
    label: str = ""
    author: str = "local"

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("annotation points must be finite")
        need = _MIN_POINTS[self.kind]
        if p.shape[0] < need:
            raise ValueError(f"{self.kind.value} annotation needs >= {need} points, got {p.shape[0]}")
        if self.author not in ("local", "remote"):
            raise ValueError(f"author must be local or remote, got {self.author!r}")
        p.flags.writeable = False
        object.__setattr__(self, "points", p)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "points_mm": [[float(v) for v in row] for row in self.points],
            "label": self.label,
            "author": self.author,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Annotation":
        return cls(
            id=str(d["id"]),
            kind=AnnotationKind(d["kind"]),
            points=np.asarray(d["points_mm"], dtype=float),
            label=str(d.get("label", "")),
            author=str(d.get("author", "local")),
        )


def outline_length(a: Annotation) -> float:
    """Length of a polyline annotation: sum of consecutive segment lengths, mm."""
    if a.kind is not AnnotationKind.POLYLINE:
        raise ValueError(f"outline length is defined for polylines, got {a.kind.value}")
    return float(np.sum(np.linalg.norm(np.diff(a.points, axis=0), axis=1)))


@dataclass(frozen=True)
class Command:
    """One operator interaction, as resolved from a gesture or virtual button."""

    kind: CommandKind
    opacity: float | None = None
    point_mm: tuple[float, float, float] | None = None
    label: str = ""
    volume_info: dict | None = None
    fiducials_mm: list | None = None
    calibration: PivotSolution | None = None
    registration: RegistrationResult | None = None

    def __post_init__(self):
        if self.kind is CommandKind.SET_OPACITY:
            if self.opacity is None or not 0.0 <= float(self.opacity) <= 1.0:
                raise ValueError(f"opacity must be in [0, 1], got {self.opacity}")
        if self.kind in (CommandKind.MARK_POINT, CommandKind.APPEND_OUTLINE) and self.point_mm is None:
            raise ValueError(f"{self.kind.value} needs a point")


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    time: float
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "time": self.time, "kind": self.kind, "payload": self.payload}

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "SessionEvent":
        try:
            return cls(
                seq=int(d["seq"]), time=float(d["time"]), kind=str(d["kind"]),
                payload=dict(d["payload"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ReplayError(f"bad event record: {e}") from e


@dataclass(frozen=True)
class CommandOutcome:
    """Result of offering a command: applied with an event, or rejected with a reason."""

    accepted: bool
    reason: str | None = None
    event: SessionEvent | None = None


class NavigationSession:
    """Single-owner workflow aggregate; readers should use snapshot()."""

    def __init__(self):
        self.state = SessionState.IDLE
        self.volume_info: dict | None = None
        self.fiducials_patient: list | None = None
        self.calibration: PivotSolution | None = None
        self.registration: RegistrationResult | None = None
        self.model_visible = True
        self.opacity = 1.0
        self.annotations: dict[str, Annotation] = {}
        self.outline_points: list | None = None
        self.events: list[SessionEvent] = []
        self._local_annotation_count = 0

    # -- command handling ---------------------------------------------------

    def handle_command(self, cmd: Command, now: float | None = None) -> CommandOutcome:
        """Apply one command; illegal commands come back as rejection values."""
        kind = cmd.kind
        if kind in _TRANSITION_FROM:
            required = _TRANSITION_FROM[kind]
            if self.state is not required:
                return CommandOutcome(
                    accepted=False,
                    reason=(
                        f"{kind.value} requires {required.display_name}; "
                        f"session is {self.state.display_name}"
                    ),
                )
            payload = self._transition_payload(cmd)
        elif kind in (CommandKind.MARK_POINT, CommandKind.BEGIN_OUTLINE,
                      CommandKind.APPEND_OUTLINE, CommandKind.END_OUTLINE):
            if self.state not in _ANNOTATION_STATES:
                return CommandOutcome(
                    accepted=False,
                    reason=(
                        f"{kind.value} requires Registered or Navigating; "
                        f"session is {self.state.display_name}"
                    ),
                )
            outcome_payload = self._annotation_payload(cmd)
            if isinstance(outcome_payload, str):
                return CommandOutcome(accepted=False, reason=outcome_payload)
            payload = outcome_payload
        elif kind is CommandKind.TOGGLE_MODEL_VISIBILITY:
            payload = ("model_visibility_toggled", {"visible": not self.model_visible})
        elif kind is CommandKind.SET_OPACITY:
            payload = ("opacity_set", {"value": float(cmd.opacity)})
        elif kind is CommandKind.RESET:
            payload = ("session_reset", {})
        else:  # pragma: no cover - all kinds handled above
            raise ValueError(f"unhandled command kind {kind}")

        event_kind, event_payload = payload
        event = self._append(event_kind, event_payload, now)
        return CommandOutcome(accepted=True, event=event)

    def _transition_payload(self, cmd: Command) -> tuple[str, dict]:
        kind = cmd.kind
        if kind is CommandKind.LOAD_VOLUME:
            return "volume_loaded", {"volume": dict(cmd.volume_info or {})}
        if kind is CommandKind.DETECT_FIDUCIALS:
            pts = [[float(v) for v in p] for p in (cmd.fiducials_mm or [])]
            return "fiducials_detected", {"points_mm": pts}
        if kind is CommandKind.CALIBRATE:
            if cmd.calibration is None:
                raise ValueError("calibrate command needs a pivot solution")
            return "pointer_calibrated", {"calibration": cmd.calibration.to_dict()}
        if kind is CommandKind.REGISTER:
            if cmd.registration is None:
                raise ValueError("register command needs a registration result")
            return "registered", {"registration": cmd.registration.to_dict()}
        return "navigation_started", {}

    def _annotation_payload(self, cmd: Command):
        """Build the event for an annotation command, or a rejection reason string."""
        kind = cmd.kind
        if kind is CommandKind.MARK_POINT:
            annotation = Annotation(
                id=f"a{self._local_annotation_count + 1}",
                kind=AnnotationKind.POINT,
                points=[cmd.point_mm],
                label=cmd.label,
            )
            return "point_marked", {"annotation": annotation.to_dict()}
        if kind is CommandKind.BEGIN_OUTLINE:
            if self.outline_points is not None:
                return "begin_outline rejected: an outline is already in progress"
            pts = [list(map(float, cmd.point_mm))] if cmd.point_mm is not None else []
            return "outline_begun", {"points_mm": pts}
        if kind is CommandKind.APPEND_OUTLINE:
            if self.outline_points is None:
                return "append_outline rejected: no outline in progress"
            return "outline_appended", {"point_mm": list(map(float, cmd.point_mm))}
        # END_OUTLINE
        if self.outline_points is None:
            return "end_outline rejected: no outline in progress"
        if len(self.outline_points) < 2:
            return "end_outline rejected: a polyline needs at least 2 points"
        annotation = Annotation(
            id=f"a{self._local_annotation_count + 1}",
            kind=AnnotationKind.POLYLINE,
            points=self.outline_points,
            label=cmd.label,
        )
        return "outline_ended", {"annotation": annotation.to_dict()}

    def apply_remote_annotation(self, annotation: Annotation, now: float | None = None) -> CommandOutcome:
        """Store an annotation drawn by a remote participant; idempotent on id."""
        if self.state is not SessionState.NAVIGATING:
            raise StateError(
                f"remote annotations require Navigating; session is {self.state.display_name}"
            )
        if annotation.author != "remote":
            raise ValueError("remote annotation must have author=remote")
        if annotation.id in self.annotations:
            return CommandOutcome(accepted=True, event=None)  # duplicate: no change, no broadcast
        event = self._append("remote_annotation_applied", {"annotation": annotation.to_dict()}, now)
        return CommandOutcome(accepted=True, event=event)

    # -- event application (the replayable core) -----------------------------

    def _append(self, kind: str, payload: dict, now: float | None) -> SessionEvent:
        event = SessionEvent(
            seq=len(self.events) + 1,
            time=_time.time() if now is None else now,
            kind=kind,
            payload=payload,
        )
        self._apply(event)
        self.events.append(event)
        return event

    def _apply(self, event: SessionEvent) -> None:
        kind = event.kind
        payload = event.payload
        if kind == "volume_loaded":
            self.state = SessionState.VOLUME_LOADED
            self.volume_info = dict(payload["volume"])
        elif kind == "fiducials_detected":
            self.state = SessionState.FIDUCIALS_DETECTED
            self.fiducials_patient = [list(p) for p in payload["points_mm"]]
        elif kind == "pointer_calibrated":
            self.state = SessionState.POINTER_CALIBRATED
            self.calibration = PivotSolution.from_dict(payload["calibration"])
        elif kind == "registered":
            self.state = SessionState.REGISTERED
            self.registration = RegistrationResult.from_dict(payload["registration"])
        elif kind == "navigation_started":
            self.state = SessionState.NAVIGATING
        elif kind == "model_visibility_toggled":
            self.model_visible = bool(payload["visible"])
        elif kind == "opacity_set":
            self.opacity = float(payload["value"])
        elif kind in ("point_marked", "outline_ended"):
            a = Annotation.from_dict(payload["annotation"])
            self.annotations[a.id] = a
            self._local_annotation_count += 1
            if kind == "outline_ended":
                self.outline_points = None
        elif kind == "outline_begun":
            self.outline_points = [list(p) for p in payload["points_mm"]]
        elif kind == "outline_appended":
            self.outline_points.append(list(payload["point_mm"]))
        elif kind == "remote_annotation_applied":
            a = Annotation.from_dict(payload["annotation"])
            self.annotations[a.id] = a
        elif kind == "session_reset":
            # Annotations survive: they are anchored to patient anatomy, not
            # to the workflow. Everything derived from this run is dropped.
            self.state = SessionState.IDLE
            self.volume_info = None
            self.fiducials_patient = None
            self.calibration = None
            self.registration = None
            self.model_visible = True
            self.opacity = 1.0
            self.outline_points = None
        else:
            raise ReplayError(f"unknown event kind {kind!r}")

    # -- queries --------------------------------------------------------------

    @property
    def world_from_patient(self) -> RigidTransform | None:
        return self.registration.world_from_patient if self.registration else None

    def compute_overlay(self, glasses_pose_world: RigidTransform) -> RigidTransform:
        """view_from_patient: place anatomy in the viewer's frame so holograms line up."""
        if self.state not in (SessionState.REGISTERED, SessionState.NAVIGATING):
            raise StateError(
                f"overlay requires Registered or Navigating; session is {self.state.display_name}"
            )
        return compose(invert(glasses_pose_world), self.registration.world_from_patient)

    def snapshot(self) -> dict:
        """Immutable JSON-ready view of the full session state."""
        return {
            "state": self.state.value,
            "volume": dict(self.volume_info) if self.volume_info else None,
            "fiducials_patient_mm": [list(p) for p in self.fiducials_patient]
            if self.fiducials_patient
            else None,
            "calibration": self.calibration.to_dict() if self.calibration else None,
            "registration": self.registration.to_dict() if self.registration else None,
            "model_visible": self.model_visible,
            "opacity": self.opacity,
            "annotations": [a.to_dict() for a in self.annotations.values()],
            "outline_in_progress_mm": [list(p) for p in self.outline_points]
            if self.outline_points is not None
            else None,
            "last_seq": len(self.events),
        }


def replay_events(events) -> NavigationSession:
    """Rebuild a session by folding its event log from Idle.

    Raises ReplayError on a sequence gap so tampered logs fail loudly.
    """
    session = NavigationSession()
    expected = 1
    for raw in events:
        event = raw if isinstance(raw, SessionEvent) else SessionEvent.from_dict(raw)
        if event.seq != expected:
            raise ReplayError(f"missing event seq {expected} (log jumps to {event.seq})")
        session._apply(event)
        session.events.append(event)
        expected += 1
    return session


def read_log(path) -> list[SessionEvent]:
    """Parse a JSON-lines session log."""
    events = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(SessionEvent.from_dict(json.loads(line)))
            except json.JSONDecodeError as e:
                raise ReplayError(f"log line {lineno} is not valid JSON: {e}") from e
    return events
