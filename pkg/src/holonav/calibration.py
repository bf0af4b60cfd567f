"""Pivot calibration of the tracked pointer.

While the pointer pivots about a fixed point, every pose satisfies
R_i * tip + t_i = pivot. Stacking rows [R_i | -I] gives a 3Nx6 linear system
solved in one shot by SVD; the ratio of extreme singular values doubles as an
observability diagnostic (rotations about a single axis leave the on-axis tip
component free and blow the condition number up).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UnobservableMotionError
from .geometry import RigidTransform

__all__ = [
    "PivotSolution",
    "CalibrationQuality",
    "pivot_calibrate",
    "calibration_quality",
    "UNOBSERVABLE_CONDITION_LIMIT",
    "DEFAULT_MAX_RESIDUAL_MM",
    "DEFAULT_MAX_CONDITION",
]

UNOBSERVABLE_CONDITION_LIMIT = 1e6
# Defaults consistent with a 2 mm end-to-end error budget.
DEFAULT_MAX_RESIDUAL_MM = 0.5
DEFAULT_MAX_CONDITION = 1e4


@dataclass(frozen=True)
class PivotSolution:
    """Tip offset in the pointer-tracker frame plus the fixed pivot in world mm."""

    tip_offset: np.ndarray
    pivot_world: np.ndarray
    residual_rms: float
    condition: float

    def to_dict(self) -> dict:
        return {
            "tip_offset_mm": self.tip_offset.tolist(),
            "pivot_world_mm": self.pivot_world.tolist(),
            "residual_rms_mm": self.residual_rms,
            "condition": self.condition,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PivotSolution":
        return cls(
            np.asarray(d["tip_offset_mm"], dtype=float),
            np.asarray(d["pivot_world_mm"], dtype=float),
            float(d["residual_rms_mm"]),
            float(d["condition"]),
        )


@dataclass(frozen=True)
class CalibrationQuality:
    accepted: bool
    reasons: tuple[str, ...]


def pivot_calibrate(poses: Sequence[RigidTransform]) -> PivotSolution:
    """Solve for (tip, pivot) from pointer-tracker poses collected while pivoting.

    Raises UnobservableMotionError instead of returning a silently wrong
    answer when the stacked system is ill-conditioned.
    """
    poses = list(poses)
    n = len(poses)
    if n < 3:
        raise ValueError(f"pivot calibration needs at least 3 poses, got {n}")

    a = np.zeros((3 * n, 6))
    b = np.zeros(3 * n)
    for i, pose in enumerate(poses):
        a[3 * i : 3 * i + 3, 0:3] = pose.rotation_matrix()
        a[3 * i : 3 * i + 3, 3:6] = -np.eye(3)
        b[3 * i : 3 * i + 3] = -pose.translation

    u, s, vt = np.linalg.svd(a, full_matrices=False)
    condition = float(np.inf) if s[-1] == 0.0 else float(s[0] / s[-1])
    if condition > UNOBSERVABLE_CONDITION_LIMIT:
        raise UnobservableMotionError(
            f"pivot motion is unobservable (condition {condition:.3g} > "
            f"{UNOBSERVABLE_CONDITION_LIMIT:.0e}); rotations must span at least two axes"
        )
    x = vt.T @ ((u.T @ b) / s)
    tip, pivot = x[:3].copy(), x[3:].copy()
    tip.flags.writeable = False
    pivot.flags.writeable = False

    residuals = np.linalg.norm(
        np.stack([p.rotation_matrix() @ tip + p.translation - pivot for p in poses]), axis=1
    )
    return PivotSolution(
        tip_offset=tip,
        pivot_world=pivot,
        residual_rms=float(np.sqrt(np.mean(residuals**2))),
        condition=condition,
    )


def calibration_quality(
    sol: PivotSolution,
    max_residual_mm: float = DEFAULT_MAX_RESIDUAL_MM,
    max_condition: float = DEFAULT_MAX_CONDITION,
) -> CalibrationQuality:
    """Accept or reject a pivot solution, listing every violated bound."""
    reasons = []
    if sol.residual_rms > max_residual_mm:
        reasons.append(f"residual {sol.residual_rms:.3f} mm exceeds {max_residual_mm} mm")
    if sol.condition > max_condition:
        reasons.append(f"condition {sol.condition:.3g} exceeds {max_condition:.3g}")
    return CalibrationQuality(accepted=not reasons, reasons=tuple(reasons))
