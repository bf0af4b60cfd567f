"""Synthetic CT phantoms, volume persistence, and sphere-marker detection.

A VoxelVolume is an axis-aligned scalar grid (Hounsfield-like int16) with
per-axis spacing in mm and a patient-space origin at the center of voxel
(0, 0, 0). Phantoms embed an intensity-contrasted tumor ellipsoid and metal
marker spheres bright enough to threshold out.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import FormatError
from .geometry import point3

__all__ = [
    "VoxelVolume",
    "DetectedFiducial",
    "PhantomSpec",
    "synthesize_phantom",
    "detect_fiducials",
    "voxel_to_patient",
    "patient_to_voxel",
    "write_volume",
    "read_volume",
    "BACKGROUND_INTENSITY",
    "TUMOR_INTENSITY",
    "FIDUCIAL_INTENSITY",
    "DETECTION_THRESHOLD",
]

# Marker contrast mimics bright metal on CT with wide margins to soft tissue.
BACKGROUND_INTENSITY = 0
TUMOR_INTENSITY = 300
FIDUCIAL_INTENSITY = 3000
DETECTION_THRESHOLD = 1000

_MAGIC = b"HNAV"
_FORMAT_VERSION = 1
_MAX_VOXELS = 512**3


@dataclass(frozen=True)
class VoxelVolume:
    """Intensity grid indexed [i, j, k] with i along patient x."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValueError(f"dims must be 3 positive integers, got {dims}")
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        origin = np.array(self.origin, dtype=np.float64).reshape(3)
        data = np.asarray(self.intensities)
        if data.dtype != np.int16:
            raise ValueError(f"intensities must be int16, got {data.dtype}")
        if data.shape != dims:
            raise ValueError(f"intensities shape {data.shape} does not match dims {dims}")
        origin.flags.writeable = False
        data = data.copy() if data.flags.writeable else data
        data.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "intensities", data)

    def voxel_count(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def extent_mm(self) -> tuple[np.ndarray, np.ndarray]:
        """Span of voxel centers: (low corner, high corner) in patient mm."""
        low = self.origin
        high = self.origin + (np.array(self.dims) - 1) * np.array(self.spacing)
        return low, high


@dataclass(frozen=True)
class DetectedFiducial:
    """One bright connected component: weighted centroid in patient mm."""

    centroid: np.ndarray
    voxel_count: int
    peak_intensity: int


@dataclass(frozen=True)
class PhantomSpec:
    """Scene recipe: optional tumor ellipsoid plus marker spheres.

    Fiducial centers must be pairwise >= 4 * radius apart so each sphere
    thresholds out as its own connected component.
    """

    tumor_semiaxes: tuple[float, float, float] | None = None
    tumor_center: np.ndarray = field(default_factory=lambda: point3(0.0, 0.0, 0.0))
    fiducial_centers: tuple = ()
    fiducial_radius_mm: float = 3.0
    background_intensity: int = BACKGROUND_INTENSITY
    tumor_intensity: int = TUMOR_INTENSITY
    fiducial_intensity: int = FIDUCIAL_INTENSITY

    def __post_init__(self):
        if self.tumor_semiaxes is not None:
            axes = tuple(float(a) for a in self.tumor_semiaxes)
            if any(a <= 0 for a in axes):
                raise ValueError(f"tumor semiaxes must be positive, got {axes}")
            object.__setattr__(self, "tumor_semiaxes", axes)
        object.__setattr__(self, "tumor_center", np.asarray(self.tumor_center, dtype=np.float64).reshape(3))
        if self.fiducial_radius_mm <= 0:
            raise ValueError("fiducial radius must be positive")
        centers = tuple(np.asarray(c, dtype=np.float64).reshape(3) for c in self.fiducial_centers)
        min_sep = 4.0 * self.fiducial_radius_mm
        for i in range(len(centers)):
            for j in range(i + 1, len(centers)):
                d = float(np.linalg.norm(centers[i] - centers[j]))
                if d < min_sep:
                    raise ValueError(
                        f"fiducials {i} and {j} are {d:.2f} mm apart; need >= {min_sep:.2f} mm"
                    )
        object.__setattr__(self, "fiducial_centers", centers)

    def to_dict(self) -> dict:
        return {
            "tumor_semiaxes_mm": list(self.tumor_semiaxes) if self.tumor_semiaxes else None,
            "tumor_center_mm": self.tumor_center.tolist(),
            "fiducial_centers_mm": [c.tolist() for c in self.fiducial_centers],
            "fiducial_radius_mm": self.fiducial_radius_mm,
            "background_intensity": self.background_intensity,
            "tumor_intensity": self.tumor_intensity,
            "fiducial_intensity": self.fiducial_intensity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        semiaxes = d.get("tumor_semiaxes_mm")
        return cls(
            tumor_semiaxes=tuple(semiaxes) if semiaxes else None,
            tumor_center=np.asarray(d.get("tumor_center_mm", (0, 0, 0)), dtype=float),
            fiducial_centers=tuple(np.asarray(c, dtype=float) for c in d.get("fiducial_centers_mm", ())),
            fiducial_radius_mm=float(d.get("fiducial_radius_mm", 3.0)),
            background_intensity=int(d.get("background_intensity", BACKGROUND_INTENSITY)),
            tumor_intensity=int(d.get("tumor_intensity", TUMOR_INTENSITY)),
            fiducial_intensity=int(d.get("fiducial_intensity", FIDUCIAL_INTENSITY)),
        )


def _axis_coords(volume_dims, spacing, origin):
    return [origin[a] + np.arange(volume_dims[a]) * spacing[a] for a in range(3)]


def synthesize_phantom(spec: PhantomSpec, dims, spacing, origin) -> VoxelVolume:
    """Rasterize a phantom spec onto a voxel grid; deterministic.

    Fiducial spheres override the tumor, which overrides the background.
    Every fiducial sphere must lie fully inside the volume extent.
    """
    dims = tuple(int(d) for d in dims)
    spacing = tuple(float(s) for s in spacing)
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    low = origin
    high = origin + (np.array(dims) - 1) * np.array(spacing)
    r = spec.fiducial_radius_mm
    for idx, c in enumerate(spec.fiducial_centers):
        if np.any(c - r < low) or np.any(c + r > high):
            raise ValueError(f"fiducial {idx} at {c.tolist()} (r={r} mm) extends outside the volume")

    data = np.full(dims, spec.background_intensity, dtype=np.int16)
    xs, ys, zs = _axis_coords(dims, spacing, origin)

    if spec.tumor_semiaxes is not None:
        cx, cy, cz = spec.tumor_center
        a, b, c = spec.tumor_semiaxes
        ex = ((xs - cx) / a) ** 2
        ey = ((ys - cy) / b) ** 2
        ez = ((zs - cz) / c) ** 2
        inside = ex[:, None, None] + ey[None, :, None] + ez[None, None, :] <= 1.0
        data[inside] = spec.tumor_intensity

    for center in spec.fiducial_centers:
        # Work inside the sphere's bounding box only.
        lo_idx = np.maximum(np.floor((center - r - origin) / spacing).astype(int), 0)
        hi_idx = np.minimum(np.ceil((center + r - origin) / spacing).astype(int) + 1, dims)
        sub = [np.arange(lo_idx[a], hi_idx[a]) * spacing[a] + origin[a] - center[a] for a in range(3)]
        d2 = (
            sub[0][:, None, None] ** 2
            + sub[1][None, :, None] ** 2
            + sub[2][None, None, :] ** 2
        )
        mask = d2 <= r * r
        region = data[lo_idx[0] : hi_idx[0], lo_idx[1] : hi_idx[1], lo_idx[2] : hi_idx[2]]
        region[mask] = spec.fiducial_intensity

    return VoxelVolume(dims, spacing, origin, data)


_CONNECTIVITY_26 = np.ones((3, 3, 3), dtype=bool)


def detect_fiducials(
    v: VoxelVolume,
    threshold: float = DETECTION_THRESHOLD,
    min_voxels: int = 1,
    max_voxels: int | None = None,
) -> list[DetectedFiducial]:
    """Find bright marker blobs: 26-connected components of voxels >= threshold.

    Components outside [min_voxels, max_voxels] are dropped. Centroids are
    intensity-weighted means of voxel centers in patient mm (sub-voxel
    accuracy). Output is sorted by descending voxel count, then by centroid
    lexicographically, so parallel labeling cannot change the order.
    """
    mask = v.intensities >= threshold
    labels, n_components = ndimage.label(mask, structure=_CONNECTIVITY_26)
    spacing = np.array(v.spacing)
    out: list[DetectedFiducial] = []
    for lab in range(1, n_components + 1):
        idx = np.nonzero(labels == lab)
        count = idx[0].size
        if count < min_voxels or (max_voxels is not None and count > max_voxels):
            continue
        w = v.intensities[idx].astype(np.float64)
        total = w.sum()
        centroid_idx = np.array([float(np.dot(w, idx[a])) / total for a in range(3)])
        centroid = v.origin + centroid_idx * spacing
        centroid.flags.writeable = False
        out.append(
            DetectedFiducial(
                centroid=centroid,
                voxel_count=int(count),
                peak_intensity=int(w.max()),
            )
        )
    out.sort(key=lambda f: (-f.voxel_count, tuple(f.centroid)))
    return out


def voxel_to_patient(v: VoxelVolume, ijk) -> np.ndarray:
    """Patient-space position (mm) of the center of voxel (i, j, k)."""
    ijk = np.asarray(ijk)
    if ijk.shape != (3,):
        raise ValueError(f"expected an index triple, got shape {ijk.shape}")
    if np.any(ijk < 0) or np.any(ijk >= np.array(v.dims)):
        raise ValueError(f"voxel index {ijk.tolist()} outside dims {v.dims}")
    p = v.origin + ijk * np.array(v.spacing)
    p.flags.writeable = False
    return p


def patient_to_voxel(v: VoxelVolume, point) -> np.ndarray:
    """Continuous voxel index of a patient-space point (inverse of voxel_to_patient)."""
    p = np.asarray(point, dtype=np.float64).reshape(3)
    return (p - v.origin) / np.array(v.spacing)


def write_volume(v: VoxelVolume, path) -> None:
    """Write the little-endian volume file: HNAV magic, version, header, voxels x-fastest."""
    header = _MAGIC + struct.pack(
        "<I3I3d3d",
        _FORMAT_VERSION,
        *v.dims,
        *v.spacing,
        *(float(c) for c in v.origin),
    )
    payload = np.ascontiguousarray(v.intensities.ravel(order="F"), dtype="<i2").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_volume(path) -> VoxelVolume:
    """Read a volume file; raises FormatError naming the offending field."""
    with open(path, "rb") as f:
        blob = f.read()

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise FormatError(f"unexpected end of data while reading {what}")
        chunk = blob[offset : offset + n]
        offset += n
        return chunk

    offset = 0
    magic = take(4, "magic")
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    (version,) = struct.unpack("<I", take(4, "format version"))
    if version != _FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    dims = struct.unpack("<3I", take(12, "dims"))
    if any(d == 0 for d in dims):
        raise FormatError(f"dims must be positive, got {dims}")
    n_voxels = dims[0] * dims[1] * dims[2]
    if n_voxels > _MAX_VOXELS:
        raise FormatError(f"dims {dims} overflow the supported volume size")
    spacing = struct.unpack("<3d", take(24, "spacing"))
    if any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise FormatError(f"spacing must be positive and finite, got {spacing}")
    origin = struct.unpack("<3d", take(24, "origin"))
    if any(not np.isfinite(c) for c in origin):
        raise FormatError(f"origin must be finite, got {origin}")
    payload = take(2 * n_voxels, "voxel data")
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes after voxel data")
    data = np.frombuffer(payload, dtype="<i2").astype(np.int16).reshape(dims, order="F")
    return VoxelVolume(dims, spacing, np.array(origin), data)
