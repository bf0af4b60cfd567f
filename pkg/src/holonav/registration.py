"""Rigid patient-to-world registration from fiducial correspondences.

The fit is the closed-form least-squares rigid transform: SVD of the
cross-covariance of the centered point sets, with the determinant sign
corrected so the result is always a proper rotation, never a reflection.
Quality is reported as FRE (RMS residual over fiducial pairs); TRE measures
error at a clinical target point, which is what actually matters.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DegenerateConfigurationError
from .geometry import FiducialSet, RigidTransform, compose, from_rotation_matrix, invert

if TYPE_CHECKING:
    from .frame import FrameConfig

__all__ = [
    "Correspondences",
    "RegistrationResult",
    "fit_rigid",
    "fit_rigid_points",
    "match_correspondences",
    "tre",
    "register_via_frame_marker",
]

# Relative singular-value floor separating true collinearity from round-off.
_DEGENERACY_REL_TOL = 1e-9
# FRE differences below this are treated as ties (broken lexicographically).
_MATCH_TIE_TOL = 1e-9
# Exhaustive permutation search cap; above it, distance signatures prune.
_EXHAUSTIVE_MATCH_LIMIT = 8
_SIGNATURE_TOL_MM = 1.0


@dataclass(frozen=True)
class Correspondences:
    """Paired fiducial sets: source[i] corresponds to target[pairing[i]]."""

    source: FiducialSet
    target: FiducialSet
    pairing: tuple[int, ...]

    def __post_init__(self):
        n = len(self.source)
        if len(self.target) != n:
            raise ValueError(f"source has {n} points, target has {len(self.target)}")
        if n < 3:
            raise ValueError(f"at least 3 correspondences required, got {n}")
        pairing = tuple(int(i) for i in self.pairing)
        if sorted(pairing) != list(range(n)):
            raise ValueError(f"pairing {pairing} is not a bijection on 0..{n - 1}")
        object.__setattr__(self, "pairing", pairing)

    @classmethod
    def paired_in_order(cls, source: FiducialSet, target: FiducialSet) -> "Correspondences":
        return cls(source, target, tuple(range(len(source))))


@dataclass(frozen=True)
class RegistrationResult:
    world_from_patient: RigidTransform
    fre_rms: float
    per_point_residuals: tuple[float, ...]

    def __post_init__(self):
        rms = float(np.sqrt(np.mean(np.square(self.per_point_residuals))))
        if abs(rms - self.fre_rms) > 1e-12:
            raise ValueError("fre_rms does not equal the RMS of the per-point residuals")

    def to_dict(self) -> dict:
        return {
            "world_from_patient": self.world_from_patient.to_dict(),
            "fre_rms_mm": self.fre_rms,
            "per_point_residuals_mm": list(self.per_point_residuals),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegistrationResult":
        return cls(
            RigidTransform.from_dict(d["world_from_patient"]),
            float(d["fre_rms_mm"]),
            tuple(float(r) for r in d["per_point_residuals_mm"]),
        )


def _check_degeneracy(points: np.ndarray) -> None:
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] == 0.0 or s[1] <= _DEGENERACY_REL_TOL * s[0]:
        raise DegenerateConfigurationError(
            "source points are collinear or coincident; the rotation is not determined"
        )


def _kabsch(src: np.ndarray, tgt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares (R, t) with det(R) = +1 mapping src onto tgt."""
    sc = src.mean(axis=0)
    tc = tgt.mean(axis=0)
    h = (src - sc).T @ (tgt - tc)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = tc - r @ sc
    return r, t


def fit_rigid_points(src: np.ndarray, tgt: np.ndarray) -> RegistrationResult:
    """Fit on raw (N, 3) arrays already paired row-for-row."""
    src = np.asarray(src, dtype=np.float64)
    tgt = np.asarray(tgt, dtype=np.float64)
    if src.shape != tgt.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError(f"need matching (N, 3) arrays, got {src.shape} and {tgt.shape}")
    if src.shape[0] < 3:
        raise ValueError(f"at least 3 points required, got {src.shape[0]}")
    _check_degeneracy(src)
    r, t = _kabsch(src, tgt)
    residuals = np.linalg.norm(src @ r.T + t - tgt, axis=1)
    return RegistrationResult(
        world_from_patient=from_rotation_matrix(r, t),
        fre_rms=float(np.sqrt(np.mean(residuals**2))),
        per_point_residuals=tuple(float(x) for x in residuals),
    )


def fit_rigid(corr: Correspondences) -> RegistrationResult:
    """Least-squares rigid transform source -> target under the given pairing."""
    tgt = corr.target.points[list(corr.pairing)]
    return fit_rigid_points(corr.source.points, tgt)


def _distance_signatures(points: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    n = points.shape[0]
    return np.sort(d[~np.eye(n, dtype=bool)].reshape(n, n - 1), axis=1)


def _pruned_pairings(src: np.ndarray, tgt: np.ndarray):
    """Yield pairings whose sorted pairwise-distance multisets agree within tolerance."""
    n = src.shape[0]
    sig_s = _distance_signatures(src)
    sig_t = _distance_signatures(tgt)
    candidates = [
        [j for j in range(n) if np.all(np.abs(sig_s[i] - sig_t[j]) <= _SIGNATURE_TOL_MM)]
        for i in range(n)
    ]
    d_s = np.linalg.norm(src[:, None, :] - src[None, :, :], axis=2)
    d_t = np.linalg.norm(tgt[:, None, :] - tgt[None, :, :], axis=2)
    assignment: list[int] = []
    used = [False] * n

    def backtrack(i: int):
        if i == n:
            yield tuple(assignment)
            return
        for j in candidates[i]:
            if used[j]:
                continue
            if any(abs(d_s[i, k] - d_t[j, assignment[k]]) > _SIGNATURE_TOL_MM for k in range(i)):
                continue
            used[j] = True
            assignment.append(j)
            yield from backtrack(i + 1)
            assignment.pop()
            used[j] = False

    yield from backtrack(0)


def match_correspondences(source: FiducialSet, target: FiducialSet) -> Correspondences:
    """Recover the pairing between unlabeled fiducial sets by minimizing FRE.

    Exhaustive over all permutations up to 8 points; larger sets are pruned
    by distance signatures first. FRE ties go to the lexicographically
    smallest permutation so symmetric constellations resolve deterministically.
    """
    n = len(source)
    if len(target) != n:
        raise ValueError(f"source has {n} fiducials, target has {len(target)}")
    if n < 3:
        raise ValueError(f"at least 3 fiducials required to match, got {n}")
    if n > 10:
        raise ValueError(f"matching supports at most 10 fiducials, got {n}")

    src = source.points
    tgt = target.points
    if n <= _EXHAUSTIVE_MATCH_LIMIT:
        pairings = itertools.permutations(range(n))
    else:
        pairings = _pruned_pairings(src, tgt)

    best_perm: tuple[int, ...] | None = None
    best_fre = np.inf
    for perm in pairings:
        r, t = _kabsch(src, tgt[list(perm)])
        fre = float(np.sqrt(np.mean(np.sum((src @ r.T + t - tgt[list(perm)]) ** 2, axis=1))))
        if fre < best_fre - _MATCH_TIE_TOL:
            best_fre = fre
            best_perm = perm
    if best_perm is None:
        raise ValueError("no pairing consistent with the distance-signature tolerance")
    return Correspondences(source, target, best_perm)


def tre(result: RegistrationResult, target_point_patient, true_point_world) -> float:
    """Target registration error: mapped target vs its true world position, mm."""
    mapped = result.world_from_patient.apply(np.asarray(target_point_patient, dtype=float))
    return float(np.linalg.norm(mapped - np.asarray(true_point_world, dtype=float)))


def register_via_frame_marker(
    ct_frame_fiducials: FiducialSet,
    frame_marker_pose_world: RigidTransform,
    frame_geometry: "FrameConfig",
) -> RegistrationResult:
    """Registration route through the removable tracked marker on the head frame.

    CT detections (patient frame, unlabeled) are matched against the frame's
    known fiducial constellation to get frame_from_patient; the tracked
    marker pose then carries that into world coordinates:

        world_from_patient =
            frame_marker_pose_world . invert(marker_from_frame) . frame_from_patient
    """
    corr = match_correspondences(ct_frame_fiducials, frame_geometry.fiducials_frame)
    fit = fit_rigid(corr)
    world_from_patient = compose(
        frame_marker_pose_world,
        compose(invert(frame_geometry.marker_from_frame), fit.world_from_patient),
    )
    return RegistrationResult(
        world_from_patient=world_from_patient,
        fre_rms=fit.fre_rms,
        per_point_residuals=fit.per_point_residuals,
    )
