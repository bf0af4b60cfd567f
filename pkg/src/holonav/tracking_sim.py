"""Multi-base-station pose tracking simulator.

Models a desk-scale version of a room-sized optical tracking volume: up to
four stations with conical fields of view watch two tracked bodies (glasses
and pointer). A sensor is localized whenever at least one station sees it;
fusing k stations is abstracted to Gaussian noise with sigma/sqrt(k).
Axis-aligned occluder boxes block line of sight.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FormatError
from .geometry import (
    RigidTransform,
    compose,
    from_rotation_matrix,
    from_rotation_vector,
    interpolate,
)

__all__ = [
    "BaseStation",
    "Aabb",
    "RoomConfig",
    "TrackingSample",
    "NoiseModel",
    "TrackerScript",
    "Scenario",
    "station_aimed_at",
    "default_room",
    "visible_stations",
    "sample_pose",
    "simulate_trajectory",
    "coverage_fraction",
    "scenario_from_dict",
    "load_scenario",
    "run_scenario",
    "sample_to_dict",
    "write_samples_jsonl",
    "GLASSES",
    "POINTER",
]

GLASSES = "glasses"
POINTER = "pointer"

DEFAULT_STATION_HEIGHT_MM = 2500.0
DEFAULT_FOV_HALF_ANGLE_RAD = math.radians(60.0)
DEFAULT_MAX_RANGE_MM = 7000.0


@dataclass(frozen=True)
class BaseStation:
    """Fixed observer with a view cone about its local -z axis."""

    pose_world: RigidTransform
    fov_half_angle: float = DEFAULT_FOV_HALF_ANGLE_RAD
    max_range: float = DEFAULT_MAX_RANGE_MM

    def __post_init__(self):
        if not 0.0 < self.fov_half_angle < math.pi / 2:
            raise ValueError(f"fov half-angle must be in (0, pi/2), got {self.fov_half_angle}")
        if self.max_range <= 0:
            raise ValueError(f"max range must be positive, got {self.max_range}")

    @property
    def position(self) -> np.ndarray:
        return self.pose_world.translation


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned occluder box, mm."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = np.array(self.min_corner, dtype=np.float64).reshape(3)
        hi = np.array(self.max_corner, dtype=np.float64).reshape(3)
        if np.any(hi < lo):
            raise ValueError("box max corner must be >= min corner on every axis")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)


@dataclass(frozen=True)
class RoomConfig:
    stations: tuple[BaseStation, ...]
    extent_m: tuple[float, float]
    occluders: tuple[Aabb, ...] = ()

    def __post_init__(self):
        if not 1 <= len(self.stations) <= 4:
            raise ValueError(f"room supports 1..4 stations, got {len(self.stations)}")
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "extent_m", tuple(float(e) for e in self.extent_m))
        object.__setattr__(self, "occluders", tuple(self.occluders))

    def with_occluders(self, occluders: Sequence[Aabb]) -> "RoomConfig":
        return RoomConfig(self.stations, self.extent_m, tuple(occluders))


@dataclass(frozen=True)
class TrackingSample:
    """One timestamped pose estimate, or a dropout when nothing saw the sensor."""

    time: float
    tracker_id: str
    pose: RigidTransform | None
    visible_station_ids: frozenset[int]
    position_sigma: float | None

    def __post_init__(self):
        if (self.pose is None) != (len(self.visible_station_ids) == 0):
            raise ValueError("dropout (pose=None) iff no station sees the sensor")
        object.__setattr__(self, "visible_station_ids", frozenset(self.visible_station_ids))

    @property
    def dropout(self) -> bool:
        return self.pose is None


@dataclass(frozen=True)
class NoiseModel:
    sigma_pos_mm: float = 0.5
    sigma_rot_rad: float = 5e-4

    def __post_init__(self):
        if self.sigma_pos_mm < 0 or self.sigma_rot_rad < 0:
            raise ValueError("noise sigmas must be nonnegative")


def station_aimed_at(position, target, fov_half_angle: float = DEFAULT_FOV_HALF_ANGLE_RAD,
                     max_range: float = DEFAULT_MAX_RANGE_MM) -> BaseStation:
    """Station at `position` with its view cone axis (-z) pointing at `target`."""
    position = np.asarray(position, dtype=np.float64).reshape(3)
    target = np.asarray(target, dtype=np.float64).reshape(3)
    aim = target - position
    dist = np.linalg.norm(aim)
    if dist == 0:
        raise ValueError("station cannot aim at its own position")
    z_col = -aim / dist
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(up, z_col))) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    x_col = np.cross(up, z_col)
    x_col /= np.linalg.norm(x_col)
    y_col = np.cross(z_col, x_col)
    r = np.column_stack([x_col, y_col, z_col])
    return BaseStation(from_rotation_matrix(r, position), fov_half_angle, max_range)


def default_room() -> RoomConfig:
    """Default 6 m x 6 m room with 4 corner stations aimed at the floor center.

    Room coordinates: origin at the center of the floor, z up, mm.
    """
    ex_mm, ey_mm = 3000.0, 3000.0
    stations = tuple(
        station_aimed_at((sx * ex_mm, sy * ey_mm, DEFAULT_STATION_HEIGHT_MM), (0.0, 0.0, 0.0))
        for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1))
    )
    return RoomConfig(stations=stations, extent_m=(6.0, 6.0))


def _segment_hits_box(p0: np.ndarray, p1: np.ndarray, box: Aabb) -> bool:
    """Slab test: does the closed segment p0->p1 touch the closed box?"""
    d = p1 - p0
    tmin, tmax = 0.0, 1.0
    for ax in range(3):
        if abs(d[ax]) < 1e-12:
            if p0[ax] < box.min_corner[ax] or p0[ax] > box.max_corner[ax]:
                return False
        else:
            t1 = (box.min_corner[ax] - p0[ax]) / d[ax]
            t2 = (box.max_corner[ax] - p0[ax]) / d[ax]
            lo, hi = min(t1, t2), max(t1, t2)
            tmin = max(tmin, lo)
            tmax = min(tmax, hi)
            if tmin > tmax:
                return False
    return True


def visible_stations(room: RoomConfig, sensor_position) -> frozenset[int]:
    """Indices of stations that see the sensor: in cone, in range, line of sight clear."""
    p = np.asarray(sensor_position, dtype=np.float64).reshape(3)
    seen = set()
    for idx, st in enumerate(room.stations):
        v = p - st.position
        dist = float(np.linalg.norm(v))
        if dist > st.max_range:
            continue
        if dist > 0:
            d_local = st.pose_world.rotation_matrix().T @ v
            cos_angle = -d_local[2] / dist
            if cos_angle < math.cos(st.fov_half_angle):
                continue
        if any(_segment_hits_box(st.position, p, box) for box in room.occluders):
            continue
        seen.add(idx)
    return frozenset(seen)


def sample_pose(
    room: RoomConfig,
    tracker_true_pose: RigidTransform,
    sigma_pos_mm: float,
    sigma_rot_rad: float,
    rng,
    *,
    time_s: float = 0.0,
    tracker_id: str = POINTER,
) -> TrackingSample:
    """Simulate one measurement of a tracker at its true pose.

    With k >= 1 stations in view the pose is perturbed with effective
    sigma/sqrt(k) (per axis for position; small-angle rotation vector for
    orientation). Zero visibility yields a dropout sample.
    """
    if sigma_pos_mm < 0 or sigma_rot_rad < 0:
        raise ValueError("noise sigmas must be nonnegative")
    rng = np.random.default_rng(rng)
    visible = visible_stations(room, tracker_true_pose.translation)
    k = len(visible)
    if k == 0:
        return TrackingSample(time_s, tracker_id, None, frozenset(), None)
    eff_pos = sigma_pos_mm / math.sqrt(k)
    eff_rot = sigma_rot_rad / math.sqrt(k)
    translation = tracker_true_pose.translation + (
        rng.normal(0.0, eff_pos, size=3) if eff_pos > 0 else 0.0
    )
    rotation = tracker_true_pose.rotation
    if eff_rot > 0:
        wobble = from_rotation_vector(rng.normal(0.0, eff_rot, size=3))
        rotation = compose(wobble, RigidTransform(rotation, np.zeros(3))).rotation
    return TrackingSample(
        time=time_s,
        tracker_id=tracker_id,
        pose=RigidTransform(rotation, translation),
        visible_station_ids=visible,
        position_sigma=eff_pos,
    )


def simulate_trajectory(
    room: RoomConfig,
    waypoints: Sequence[tuple[float, RigidTransform]],
    rate_hz: float,
    noise: NoiseModel,
    seed,
    *,
    tracker_id: str = POINTER,
) -> list[TrackingSample]:
    """Sample a piecewise pose trajectory at a fixed rate; deterministic per seed.

    Positions interpolate linearly and rotations spherically between the
    timed waypoints.
    """
    wps = list(waypoints)
    if len(wps) < 2:
        raise ValueError("trajectory needs at least 2 waypoints")
    times = [float(t) for t, _ in wps]
    if any(tb <= ta for ta, tb in zip(times, times[1:])):
        raise ValueError(f"waypoint times must be strictly increasing, got {times}")
    if rate_hz <= 0:
        raise ValueError("sample rate must be positive")

    rng = np.random.default_rng(seed)
    dt = 1.0 / rate_hz
    samples = []
    t = times[0]
    seg = 0
    n = 0
    while t <= times[-1] + 1e-9:
        while seg < len(wps) - 2 and t > times[seg + 1]:
            seg += 1
        ta, pa = wps[seg]
        tb, pb = wps[seg + 1]
        u = min(max((t - ta) / (tb - ta), 0.0), 1.0)
        true_pose = interpolate(pa, pb, u)
        samples.append(
            sample_pose(
                room, true_pose, noise.sigma_pos_mm, noise.sigma_rot_rad, rng,
                time_s=t, tracker_id=tracker_id,
            )
        )
        n += 1
        t = times[0] + n * dt
    return samples


def coverage_fraction(
    room: RoomConfig,
    grid_step_mm: float = 250.0,
    height_mm: float = 1500.0,
    min_stations: int = 1,
) -> float:
    """Fraction of a horizontal grid over the room extent seen by >= min_stations."""
    ex = room.extent_m[0] * 1000.0 / 2.0
    ey = room.extent_m[1] * 1000.0 / 2.0
    xs = np.arange(-ex, ex + 1e-9, grid_step_mm)
    ys = np.arange(-ey, ey + 1e-9, grid_step_mm)
    total = 0
    covered = 0
    for x in xs:
        for y in ys:
            total += 1
            if len(visible_stations(room, (x, y, height_mm))) >= min_stations:
                covered += 1
    return covered / total if total else 0.0


@dataclass(frozen=True)
class TrackerScript:
    tracker_id: str
    waypoints: tuple[tuple[float, RigidTransform], ...]


@dataclass(frozen=True)
class Scenario:
    room: RoomConfig
    trackers: tuple[TrackerScript, ...]
    noise: NoiseModel = field(default_factory=NoiseModel)
    rate_hz: float = 30.0
    seed: int = 0


def _transform_from_dict(d: dict) -> RigidTransform:
    return RigidTransform(
        np.asarray(d.get("rotation_wxyz", (1.0, 0.0, 0.0, 0.0)), dtype=float),
        np.asarray(d["position_mm"], dtype=float),
    )


def scenario_from_dict(d: dict) -> Scenario:
    """Parse the JSON scenario schema (see README); FormatError on bad fields."""
    try:
        room_spec = d.get("room", "default")
        if room_spec == "default":
            room = default_room()
        else:
            stations = tuple(
                station_aimed_at(
                    s["position_mm"],
                    s.get("aim_mm", (0.0, 0.0, 0.0)),
                    math.radians(s.get("fov_half_angle_deg", 60.0)),
                    s.get("max_range_mm", DEFAULT_MAX_RANGE_MM),
                )
                for s in room_spec["stations"]
            )
            room = RoomConfig(stations, tuple(room_spec.get("extent_m", (6.0, 6.0))))
        occluders = tuple(
            Aabb(np.asarray(o["min_mm"], dtype=float), np.asarray(o["max_mm"], dtype=float))
            for o in d.get("occluders", ())
        )
        room = room.with_occluders(occluders)
        trackers = tuple(
            TrackerScript(
                tracker_id=t.get("tracker_id", POINTER),
                waypoints=tuple(
                    (float(w["time_s"]), _transform_from_dict(w)) for w in t["waypoints"]
                ),
            )
            for t in d["trackers"]
        )
        noise_d = d.get("noise", {})
        noise = NoiseModel(
            sigma_pos_mm=float(noise_d.get("sigma_pos_mm", 0.5)),
            sigma_rot_rad=float(noise_d.get("sigma_rot_rad", 5e-4)),
        )
        return Scenario(
            room=room,
            trackers=trackers,
            noise=noise,
            rate_hz=float(d.get("rate_hz", 30.0)),
            seed=int(d.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad scenario: {e}") from e


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"bad scenario JSON: {e}") from e
    return scenario_from_dict(data)


def run_scenario(sc: Scenario) -> list[TrackingSample]:
    """Simulate every tracker script; deterministic given the scenario seed."""
    all_samples: list[TrackingSample] = []
    for idx, script in enumerate(sc.trackers):
        all_samples.extend(
            simulate_trajectory(
                sc.room, script.waypoints, sc.rate_hz, sc.noise,
                seed=np.random.SeedSequence([sc.seed, idx]),
                tracker_id=script.tracker_id,
            )
        )
    all_samples.sort(key=lambda s: s.time)
    return all_samples


def sample_to_dict(s: TrackingSample) -> dict:
    return {
        "time_s": s.time,
        "tracker_id": s.tracker_id,
        "pose": s.pose.to_dict() if s.pose is not None else None,
        "visible_station_ids": sorted(s.visible_station_ids),
        "position_sigma_mm": s.position_sigma,
    }


def write_samples_jsonl(samples: Sequence[TrackingSample], fp) -> None:
    """Write one JSON object per line to an open text stream."""
    for s in samples:
        fp.write(json.dumps(sample_to_dict(s), separators=(",", ":")) + "\n")
