"""Rigid-body math on SE(3).

Rotations are stored as unit quaternions (w, x, y, z) and converted to 3x3
matrices only where a fitting routine needs them. All coordinate frames are
right-handed; translations and points are in millimetres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RigidTransform",
    "FiducialSet",
    "point3",
    "vec3",
    "as_point",
    "from_axis_angle",
    "from_rotation_matrix",
    "from_rotation_vector",
    "compose",
    "invert",
    "apply_point",
    "interpolate",
    "slerp",
    "rotation_angle",
    "rotation_angle_between",
    "random_rotation",
    "random_transform",
    "points_collinear",
]

# Constructors accept quaternions this far from unit norm without rescaling,
# so persisted (already normalized) values reload bit-exactly.
_UNIT_NORM_TOL = 1e-9


def point3(x: float, y: float, z: float) -> np.ndarray:
    """3D point (mm) as a read-only float64 array; rejects NaN/Inf components."""
    p = np.array([x, y, z], dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"point components must be finite, got {p.tolist()}")
    p.flags.writeable = False
    return p


def vec3(x: float, y: float, z: float) -> np.ndarray:
    """3D displacement (mm); same representation and checks as point3."""
    return point3(x, y, z)


def as_point(p) -> np.ndarray:
    """Coerce any length-3 array-like to a validated read-only point."""
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    return point3(a[0], a[1], a[2])


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def _quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _matrix_to_quat(m: np.ndarray) -> np.ndarray:
    # Shepperd's method: pick the largest diagonal combination for stability.
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return q / np.linalg.norm(q)


@dataclass(frozen=True)
class RigidTransform:
    """An element of SE(3): unit-quaternion rotation plus translation in mm.

    Immutable after construction; safe to share between threads.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.array(self.rotation, dtype=np.float64).reshape(4)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise ValueError("transform components must be finite")
        n = float(np.linalg.norm(q))
        if n == 0.0:
            raise ValueError("rotation quaternion must be nonzero")
        if abs(n - 1.0) > _UNIT_NORM_TOL:
            q = q / n
        q.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    def rotation_matrix(self) -> np.ndarray:
        return _quat_to_matrix(self.rotation)

    def apply(self, points) -> np.ndarray:
        """Map a point (3,) or point set (N, 3) through this transform."""
        p = np.asarray(points, dtype=np.float64)
        r = p @ self.rotation_matrix().T + self.translation
        return r

    def to_dict(self) -> dict:
        return {
            "rotation_wxyz": [float(v) for v in self.rotation],
            "translation_mm": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        return cls(np.asarray(d["rotation_wxyz"], dtype=float), np.asarray(d["translation_mm"], dtype=float))


def from_axis_angle(axis, angle_rad: float, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
    """Transform rotating by angle_rad about axis (normalized internally), then translating."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(a))
    if n == 0.0:
        if angle_rad != 0.0:
            raise ValueError("zero axis with nonzero angle")
        return RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), np.asarray(translation, dtype=float))
    a = a / n
    h = 0.5 * angle_rad
    q = np.array([math.cos(h), *(math.sin(h) * a)])
    return RigidTransform(q, np.asarray(translation, dtype=float))


def from_rotation_matrix(m, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
    """Transform from a proper 3x3 rotation matrix plus translation."""
    m = np.asarray(m, dtype=np.float64).reshape(3, 3)
    return RigidTransform(_matrix_to_quat(m), np.asarray(translation, dtype=float))


def from_rotation_vector(w, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
    """Exponential map: rotation vector (axis * angle, rad) to a transform."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    angle = float(np.linalg.norm(w))
    if angle == 0.0:
        return RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), np.asarray(translation, dtype=float))
    return from_axis_angle(w / angle, angle, translation)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """a then-applied-after b: apply(compose(a, b), p) == apply(a, apply(b, p)).

    The product quaternion is renormalized so drift stays bounded over long
    composition chains.
    """
    q = _quat_mul(a.rotation, b.rotation)
    q = q / np.linalg.norm(q)
    t = a.translation + a.rotation_matrix() @ b.translation
    return RigidTransform(q, t)


def invert(t: RigidTransform) -> RigidTransform:
    """Inverse transform: compose(t, invert(t)) is the identity."""
    qc = _quat_conj(t.rotation)
    r_inv = _quat_to_matrix(qc)
    return RigidTransform(qc, -(r_inv @ t.translation))


def apply_point(t: RigidTransform, p) -> np.ndarray:
    """Map one point through t; distance-preserving by construction."""
    return t.apply(np.asarray(p, dtype=np.float64).reshape(3))


def slerp(qa: np.ndarray, qb: np.ndarray, u: float) -> np.ndarray:
    """Spherical interpolation along the shorter arc between unit quaternions."""
    qa = np.asarray(qa, dtype=np.float64)
    qb = np.asarray(qb, dtype=np.float64)
    dot = float(np.dot(qa, qb))
    if dot < 0.0:
        qb = -qb
        dot = -dot
    if dot > 1.0 - 1e-12:
        q = (1.0 - u) * qa + u * qb
        return q / np.linalg.norm(q)
    theta = math.acos(min(dot, 1.0))
    s = math.sin(theta)
    q = (math.sin((1.0 - u) * theta) / s) * qa + (math.sin(u * theta) / s) * qb
    return q / np.linalg.norm(q)


def interpolate(a: RigidTransform, b: RigidTransform, u: float) -> RigidTransform:
    """Pose interpolation: linear in translation, spherical in rotation."""
    return RigidTransform(
        slerp(a.rotation, b.rotation, u),
        (1.0 - u) * a.translation + u * b.translation,
    )


def rotation_angle(t: RigidTransform) -> float:
    """Rotation magnitude in radians, robust for small angles."""
    q = t.rotation
    return 2.0 * math.atan2(float(np.linalg.norm(q[1:])), abs(float(q[0])))


def rotation_angle_between(a: RigidTransform, b: RigidTransform) -> float:
    """Angle of the relative rotation between two transforms, radians."""
    q_rel = _quat_mul(a.rotation, _quat_conj(b.rotation))
    return 2.0 * math.atan2(float(np.linalg.norm(q_rel[1:])), abs(float(q_rel[0])))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed unit quaternion."""
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def random_transform(rng: np.random.Generator, translation_scale_mm: float = 100.0) -> RigidTransform:
    """Random proper rigid transform with translations ~ U(-scale, scale) per axis."""
    return RigidTransform(
        random_rotation(rng),
        rng.uniform(-translation_scale_mm, translation_scale_mm, size=3),
    )


def points_collinear(points, rel_tol: float = 1e-9) -> bool:
    """True when a point set spans less than a plane's worth of directions.

    Rank test on the centered set: collinear (or coincident) iff the second
    singular value falls below rel_tol times the largest. The threshold
    separates true collinearity from round-off.
    """
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 3:
        return True
    centered = p - p.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] == 0.0:
        return True
    return bool(s[1] <= rel_tol * s[0])


@dataclass(frozen=True)
class FiducialSet:
    """Ordered, labeled 3D points (mm) in a named coordinate frame."""

    points: np.ndarray
    labels: tuple[str, ...] = ()
    frame: str = "patient"

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError(f"fiducial points must be (N, 3), got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("fiducial points must be finite")
        labels = tuple(self.labels) if self.labels else tuple(f"f{i}" for i in range(p.shape[0]))
        if len(labels) != p.shape[0]:
            raise ValueError(f"{len(labels)} labels for {p.shape[0]} points")
        p.flags.writeable = False
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def transformed(self, t: RigidTransform, frame: str) -> "FiducialSet":
        return FiducialSet(t.apply(self.points), self.labels, frame)

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "labels": list(self.labels),
            "points_mm": [[float(v) for v in row] for row in self.points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FiducialSet":
        return cls(
            np.asarray(d["points_mm"], dtype=float),
            tuple(d.get("labels") or ()),
            d.get("frame", "patient"),
        )
