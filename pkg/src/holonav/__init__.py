"""holonav: desk-scale surgical navigation stack.

Rigid registration from CT-visible fiducials, tracked-pointer pivot
calibration, multi-base-station pose tracking simulation, an adjustable
patient frame with a removable tracked marker, and an event-sourced
navigation session served to operator consoles over NDJSON/WebSocket.
"""

from .calibration import CalibrationQuality, PivotSolution, calibration_quality, pivot_calibrate
from .errors import (
    DegenerateConfigurationError,
    FormatError,
    HolonavError,
    ReplayError,
    StateError,
    UnobservableMotionError,
    WireError,
)
from .frame import FrameConfig, FrameState, default_frame_config, new_frame_state
from .geometry import (
    FiducialSet,
    RigidTransform,
    apply_point,
    compose,
    from_axis_angle,
    invert,
    point3,
    vec3,
)
from .registration import (
    Correspondences,
    RegistrationResult,
    fit_rigid,
    match_correspondences,
    register_via_frame_marker,
    tre,
)
from .session import (
    Annotation,
    AnnotationKind,
    Command,
    CommandKind,
    NavigationSession,
    SessionState,
    outline_length,
    replay_events,
)
from .tracking_sim import (
    BaseStation,
    NoiseModel,
    RoomConfig,
    TrackingSample,
    default_room,
    sample_pose,
    simulate_trajectory,
    visible_stations,
)
from .volume import (
    DetectedFiducial,
    PhantomSpec,
    VoxelVolume,
    detect_fiducials,
    read_volume,
    synthesize_phantom,
    write_volume,
)

__version__ = "0.1.0"
