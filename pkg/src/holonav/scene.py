"""Default simulated operating scene shared by the service and the CLI.

Ties the pieces together the way a real setup would: a head phantom with a
mounted frame sits somewhere in the tracked room, the removable marker snaps
onto the frame, and the two trackers (glasses, pointer) move around. The rig
knows the ground truth so commands like Calibrate and Register can synthesize
realistic measurement data and the end-to-end error can be audited.
"""

from __future__ import annotations

import math

import numpy as np

from . import frame as frame_mod
from .calibration import PivotSolution, calibration_quality, pivot_calibrate
from .geometry import (
    FiducialSet,
    RigidTransform,
    compose,
    from_axis_angle,
    invert,
)
from .registration import RegistrationResult, register_via_frame_marker
from .tracking_sim import (
    GLASSES,
    POINTER,
    NoiseModel,
    RoomConfig,
    TrackingSample,
    default_room,
    sample_pose,
)
from .volume import PhantomSpec, VoxelVolume, detect_fiducials, synthesize_phantom

__all__ = ["SimulationRig", "default_phantom_spec", "default_phantom_grid", "DEFAULT_TUMOR_SEMIAXES_MM"]

# Default tumor: 70 x 60 x 60 mm bounding ellipsoid.
DEFAULT_TUMOR_SEMIAXES_MM = (35.0, 30.0, 30.0)
DEFAULT_TUMOR_CENTER_MM = (10.0, 20.0, 0.0)

# How the frame sits on the head in patient (CT) coordinates.
DEFAULT_FRAME_FROM_PATIENT = from_axis_angle((0.0, 0.0, 1.0), math.radians(4.0), (2.0, -6.0, -40.0))

# Where the patient lies in the tracked room (head near the table center).
DEFAULT_WORLD_FROM_PATIENT = from_axis_angle((0.0, 0.0, 1.0), math.radians(30.0), (250.0, -150.0, 1100.0))

DEFAULT_POINTER_TIP_MM = (0.0, 0.0, -150.0)


def default_phantom_grid() -> tuple[tuple[int, int, int], tuple[float, float, float], np.ndarray]:
    """Grid covering a head-sized region centered on the patient origin."""
    dims = (160, 160, 160)
    spacing = (1.5, 1.5, 1.5)
    origin = np.array([-(d - 1) * s / 2.0 for d, s in zip(dims, spacing)])
    return dims, spacing, origin


def default_phantom_spec(frame_from_patient: RigidTransform | None = None,
                         frame_config=None) -> PhantomSpec:
    """Phantom with the default tumor and the frame's fiducials in patient space."""
    config = frame_config or frame_mod.default_frame_config()
    state = frame_mod.new_frame_state(config)
    mounting = frame_from_patient or DEFAULT_FRAME_FROM_PATIENT
    fiducials = frame_mod.ct_fiducials_patient(state, mounting)
    return PhantomSpec(
        tumor_semiaxes=DEFAULT_TUMOR_SEMIAXES_MM,
        tumor_center=np.array(DEFAULT_TUMOR_CENTER_MM),
        fiducial_centers=tuple(fiducials.points),
        fiducial_radius_mm=3.0,
    )


class SimulationRig:
    """Ground-truth world for the service's simulation mode."""

    def __init__(
        self,
        room: RoomConfig | None = None,
        frame_config: frame_mod.FrameConfig | None = None,
        frame_from_patient: RigidTransform = DEFAULT_FRAME_FROM_PATIENT,
        world_from_patient_true: RigidTransform = DEFAULT_WORLD_FROM_PATIENT,
        pointer_tip_true=DEFAULT_POINTER_TIP_MM,
        noise: NoiseModel | None = None,
        seed: int = 0,
    ):
        self.room = room or default_room()
        self.frame_config = frame_config or frame_mod.default_frame_config()
        self.frame_from_patient = frame_from_patient
        self.world_from_patient_true = world_from_patient_true
        self.pointer_tip_true = np.asarray(pointer_tip_true, dtype=float)
        self.noise = noise or NoiseModel()
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self.glasses_pose = RigidTransform(
            np.array([1.0, 0.0, 0.0, 0.0]), np.array([0.0, -600.0, 1700.0])
        )
        self.pointer_pose = RigidTransform(
            np.array([1.0, 0.0, 0.0, 0.0]), np.array([150.0, -300.0, 1250.0])
        )

    @classmethod
    def default(cls, noise: NoiseModel | None = None, seed: int = 0) -> "SimulationRig":
        return cls(noise=noise, seed=seed)

    # -- phantom -------------------------------------------------------------

    def phantom_spec(self) -> PhantomSpec:
        return default_phantom_spec(self.frame_from_patient, self.frame_config)

    def synthesize_volume(self) -> VoxelVolume:
        dims, spacing, origin = default_phantom_grid()
        return synthesize_phantom(self.phantom_spec(), dims, spacing, origin)

    def detect(self, volume: VoxelVolume) -> FiducialSet:
        dets = detect_fiducials(volume)
        return FiducialSet(np.array([d.centroid for d in dets]), frame="patient")

    # -- measurements --------------------------------------------------------

    def pivot_poses(self, n: int = 60) -> list[RigidTransform]:
        """Pointer-tracker poses pivoting about a fixed divot, with tracker noise."""
        pivot = np.array([300.0, -200.0, 1150.0])
        poses = []
        for _ in range(n):
            axis = self._rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = self._rng.uniform(0.15, 0.9)
            rot = from_axis_angle(axis, angle)
            translation = pivot - rot.rotation_matrix() @ self.pointer_tip_true
            true_pose = RigidTransform(rot.rotation, translation)
            sample = sample_pose(
                self.room, true_pose, self.noise.sigma_pos_mm, self.noise.sigma_rot_rad,
                self._rng, tracker_id=POINTER,
            )
            if sample.pose is not None:
                poses.append(sample.pose)
        return poses

    def calibrate(self) -> tuple[PivotSolution, bool, tuple[str, ...]]:
        sol = pivot_calibrate(self.pivot_poses())
        quality = calibration_quality(sol)
        return sol, quality.accepted, quality.reasons

    def marker_pose_world_true(self) -> RigidTransform:
        """Tracked-marker pose implied by the mounted frame and the patient's spot."""
        state = frame_mod.attach_marker(frame_mod.new_frame_state(self.frame_config))
        return compose(
            self.world_from_patient_true,
            compose(invert(self.frame_from_patient), frame_mod.marker_pose(state)),
        )

    def marker_pose_world_sampled(self) -> tuple[RigidTransform, int]:
        """Noisy tracked measurement of the frame marker; needs >= 1 station."""
        true_pose = self.marker_pose_world_true()
        sample = sample_pose(
            self.room, true_pose, self.noise.sigma_pos_mm, self.noise.sigma_rot_rad,
            self._rng, tracker_id="frame-marker",
        )
        if sample.pose is None:
            raise RuntimeError("frame marker is not visible to any station")
        return sample.pose, len(sample.visible_station_ids)

    def register(self, ct_fiducials: FiducialSet) -> RegistrationResult:
        marker_pose, _ = self.marker_pose_world_sampled()
        return register_via_frame_marker(ct_fiducials, marker_pose, self.frame_config)

    # -- live trackers ---------------------------------------------------------

    def pointer_tip_world(self, calibration: PivotSolution | None = None) -> np.ndarray:
        tip = calibration.tip_offset if calibration is not None else self.pointer_tip_true
        return self.pointer_pose.apply(tip)

    def move_pointer(self, position_mm=None, rotation_wxyz=None) -> None:
        rot = np.asarray(rotation_wxyz, dtype=float) if rotation_wxyz is not None else self.pointer_pose.rotation
        pos = np.asarray(position_mm, dtype=float) if position_mm is not None else self.pointer_pose.translation
        self.pointer_pose = RigidTransform(rot, pos)

    def move_glasses(self, position_mm=None, rotation_wxyz=None) -> None:
        rot = np.asarray(rotation_wxyz, dtype=float) if rotation_wxyz is not None else self.glasses_pose.rotation
        pos = np.asarray(position_mm, dtype=float) if position_mm is not None else self.glasses_pose.translation
        self.glasses_pose = RigidTransform(rot, pos)

    def tick_samples(self, time_s: float) -> list[TrackingSample]:
        return [
            sample_pose(
                self.room, self.glasses_pose, self.noise.sigma_pos_mm, self.noise.sigma_rot_rad,
                self._rng, time_s=time_s, tracker_id=GLASSES,
            ),
            sample_pose(
                self.room, self.pointer_pose, self.noise.sigma_pos_mm, self.noise.sigma_rot_rad,
                self._rng, time_s=time_s, tracker_id=POINTER,
            ),
        ]

    def scene_summary(self, volume: VoxelVolume | None) -> dict:
        """Static scene facts the operator console renders (all ground-truth-free)."""
        spec = self.phantom_spec()
        summary = {
            "tumor_center_mm": list(spec.tumor_center),
            "tumor_semiaxes_mm": list(spec.tumor_semiaxes),
            "fiducial_radius_mm": spec.fiducial_radius_mm,
            "frame_anchors_mm": {
                k: v.tolist() for k, v in frame_mod.anchor_points(self.frame_config).items()
            },
            "stations_mm": [st.position.tolist() for st in self.room.stations],
            "room_extent_m": list(self.room.extent_m),
        }
        if volume is not None:
            low, high = volume.extent_mm()
            summary["volume_bounds_mm"] = [low.tolist(), high.tolist()]
        return summary
