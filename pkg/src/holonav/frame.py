"""Adjustable patient headset frame with a removable tracked-marker mount.

The frame clamps to the head at three anchor points (nose bridge and both
ear canals), each on a stepped adjuster so a setting can be dialed back in
exactly for surgery after the CT scan. CT-visible fiducials are fixed to the
frame body; the tracked marker snaps onto a kinematic mount and can be left
off during the scan.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError, StateError
from .geometry import FiducialSet, RigidTransform, from_axis_angle, invert, points_collinear

__all__ = [
    "FrameConfig",
    "FrameState",
    "ADJUSTMENT_STEP_MM",
    "ADJUSTMENT_MAX_STEPS",
    "default_frame_config",
    "new_frame_state",
    "set_adjustment",
    "attach_marker",
    "detach_marker",
    "marker_pose",
    "anchor_points",
    "ct_fiducials_patient",
    "save_config",
    "load_config",
]

ADJUSTMENT_STEP_MM = 1.0
ADJUSTMENT_MAX_STEPS = 40
_CONFIG_FILE_VERSION = 1

# Anchor geometry at zero adjustment, frame coordinates (mm). The nose
# adjuster extends forward (+y), the ear adjusters extend outward (+/-x).
_NOSE_BASE = np.array([0.0, 95.0, 18.0])
_EAR_LEFT_BASE = np.array([-68.0, 0.0, 0.0])
_EAR_RIGHT_BASE = np.array([68.0, 0.0, 0.0])


@dataclass(frozen=True)
class FrameConfig:
    """Dialed-in frame settings plus its fixed fiducial constellation.

    marker_from_frame is the kinematic-mount pose of the removable marker
    expressed in frame coordinates (maps marker-local points into the frame).
    """

    adjustment_steps: tuple[int, int, int]
    ear_screw_locked: tuple[bool, bool]
    fiducials_frame: FiducialSet
    marker_from_frame: RigidTransform
    repeatability_sigma_mm: float = 0.0

    def __post_init__(self):
        steps = tuple(int(s) for s in self.adjustment_steps)
        if len(steps) != 3 or any(s < 0 or s > ADJUSTMENT_MAX_STEPS for s in steps):
            raise ValueError(
                f"adjustment steps must be integers in [0, {ADJUSTMENT_MAX_STEPS}], got {steps}"
            )
        if len(self.fiducials_frame) < 3 or points_collinear(self.fiducials_frame.points):
            raise ValueError("frame needs at least 3 non-collinear fiducials")
        if self.repeatability_sigma_mm < 0:
            raise ValueError("repeatability sigma must be nonnegative")
        object.__setattr__(self, "adjustment_steps", steps)
        object.__setattr__(self, "ear_screw_locked", tuple(bool(b) for b in self.ear_screw_locked))


@dataclass(frozen=True)
class FrameState:
    config: FrameConfig
    marker_attached: bool = False
    attached_marker_from_frame: RigidTransform | None = None


def default_frame_config() -> FrameConfig:
    """Six fiducials in a deliberately non-symmetric constellation.

    Asymmetry breaks correspondence-matching ties; spacing comfortably beats
    the 4x-radius separation the phantom synthesizer requires at r = 3 mm.
    """
    fiducials = FiducialSet(
        points=np.array(
            [
                [0.0, 104.0, 30.0],
                [-62.0, 58.0, 44.0],
                [66.0, 47.0, 38.0],
                [-79.0, -18.0, 12.0],
                [83.0, -6.0, 20.0],
                [18.0, -62.0, 55.0],
            ]
        ),
        labels=("nose", "left-brow", "right-brow", "left-ear", "right-ear", "crown"),
        frame="frame",
    )
    marker_from_frame = from_axis_angle((1.0, 0.0, 0.0), math.radians(25.0), (0.0, 30.0, 85.0))
    return FrameConfig(
        adjustment_steps=(0, 0, 0),
        ear_screw_locked=(False, False),
        fiducials_frame=fiducials,
        marker_from_frame=marker_from_frame,
    )


def new_frame_state(config: FrameConfig | None = None) -> FrameState:
    return FrameState(config=config or default_frame_config())


def _quantize(value_mm: float) -> int:
    # Nearest step with exact half-step ties resolved toward zero.
    return int(math.ceil(value_mm / ADJUSTMENT_STEP_MM - 0.5))


def set_adjustment(state: FrameState, requested_mm) -> FrameState:
    """Dial the three adjusters to the nearest step positions.

    Settings are quantized so a position can be read off and reproduced
    exactly later; out-of-range requests are rejected rather than clamped.
    """
    req = [float(v) for v in requested_mm]
    if len(req) != 3:
        raise ValueError(f"expected 3 adjustment values, got {len(req)}")
    steps = tuple(_quantize(v) for v in req)
    if any(s < 0 or s > ADJUSTMENT_MAX_STEPS for s in steps):
        raise ValueError(
            f"requested adjustment {req} quantizes to {steps}, outside [0, {ADJUSTMENT_MAX_STEPS}]"
        )
    return replace(state, config=replace(state.config, adjustment_steps=steps))


def anchor_points(config: FrameConfig) -> dict[str, np.ndarray]:
    """Anchor-point geometry recomputed deterministically from the step settings."""
    nose, ear_l, ear_r = config.adjustment_steps
    return {
        "nose_bridge": _NOSE_BASE + np.array([0.0, nose * ADJUSTMENT_STEP_MM, 0.0]),
        "left_ear": _EAR_LEFT_BASE + np.array([-ear_l * ADJUSTMENT_STEP_MM, 0.0, 0.0]),
        "right_ear": _EAR_RIGHT_BASE + np.array([ear_r * ADJUSTMENT_STEP_MM, 0.0, 0.0]),
    }


def attach_marker(state: FrameState, rng=None) -> FrameState:
    """Snap the tracked marker onto its mount.

    The mount is idealized as exact: the stored marker_from_frame comes back
    bit-identical. With repeatability noise enabled the attached pose gets a
    fresh Gaussian translation offset instead.
    """
    if state.marker_attached:
        raise StateError("marker is already attached")
    pose = state.config.marker_from_frame
    sigma = state.config.repeatability_sigma_mm
    if sigma > 0:
        rng = np.random.default_rng(rng)
        pose = RigidTransform(pose.rotation, pose.translation + rng.normal(0.0, sigma, size=3))
    return replace(state, marker_attached=True, attached_marker_from_frame=pose)


def detach_marker(state: FrameState) -> FrameState:
    """Remove the marker; fiducials and adjustments are untouched."""
    if not state.marker_attached:
        raise StateError("marker is not attached")
    return replace(state, marker_attached=False, attached_marker_from_frame=None)


def marker_pose(state: FrameState) -> RigidTransform:
    """Current marker mount pose in frame coordinates; requires the marker attached."""
    if not state.marker_attached or state.attached_marker_from_frame is None:
        raise StateError("marker pose queried while marker is detached")
    return state.attached_marker_from_frame


def ct_fiducials_patient(state: FrameState, frame_from_patient: RigidTransform) -> FiducialSet:
    """Frame fiducials mapped into patient (CT) coordinates for phantom seeding."""
    return state.config.fiducials_frame.transformed(invert(frame_from_patient), "patient")


def save_config(config: FrameConfig, path) -> None:
    doc = {
        "version": _CONFIG_FILE_VERSION,
        "adjustment_steps": list(config.adjustment_steps),
        "ear_screw_locked": list(config.ear_screw_locked),
        "fiducials": config.fiducials_frame.to_dict(),
        "marker_from_frame": config.marker_from_frame.to_dict(),
        "repeatability_sigma_mm": config.repeatability_sigma_mm,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_config(path) -> FrameConfig:
    """Restore a saved frame configuration field-by-field (transforms bit-exact)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"bad frame config JSON: {e}") from e
    if not isinstance(doc, dict):
        raise FormatError("frame config must be a JSON object")
    version = doc.get("version")
    if version != _CONFIG_FILE_VERSION:
        raise FormatError(f"unsupported frame config version {version!r}")
    try:
        return FrameConfig(
            adjustment_steps=tuple(doc["adjustment_steps"]),
            ear_screw_locked=tuple(doc["ear_screw_locked"]),
            fiducials_frame=FiducialSet.from_dict(doc["fiducials"]),
            marker_from_frame=RigidTransform.from_dict(doc["marker_from_frame"]),
            repeatability_sigma_mm=float(doc.get("repeatability_sigma_mm", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad frame config: {e}") from e
