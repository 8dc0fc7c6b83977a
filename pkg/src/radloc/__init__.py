"""Compton-cone reconstruction and real-time gamma source localization.

Pipeline layout:

- ``events``: pixel hits to tracks, coincidence pairs, and camera-frame cones
- ``geometry`` / ``cones``: frames, poses, and cone surface primitives
- ``initializer``: constrained least-squares position initialization
- ``estimator``: projection-corrected Kalman filter and session lifecycle
- ``simulator``: closed-loop Monte-Carlo flight and detector simulation
- ``io`` / ``cli``: file formats and the command-line front end
"""

from .constants import DEFAULT_CONSTANTS, PhysicalConstants
from .cones import (
    ProjectionCase,
    ProjectionResult,
    distance_to_cone,
    project_to_cone,
    signed_deviation,
)
from .errors import (
    DegenerateGeometryError,
    FilterLifecycleError,
    InfeasibleInitError,
    InvalidScatteringError,
    MalformedInputError,
    OrderingError,
    ParseError,
    PoseExtrapolationError,
    RadlocError,
    SchemaError,
)
from .estimator import (
    Action,
    FilterState,
    NoiseConfig,
    SourceEstimator,
    Status,
    correct,
    is_outlier,
    measurement_covariance,
    predict,
)
from .events import (
    ComptonPair,
    EventClass,
    PixelHit,
    PixelTrack,
    build_cone,
    classify_track,
    cluster_hits,
    delta_z,
    pair_coincident,
    process_hits,
    process_pairs,
    scattered_photon_energy,
    scattering_angle,
    track_centroid,
)
from .geometry import (
    Cone,
    Frame,
    Pose,
    RigidTransform,
    interpolate_pose,
    signed_angle,
    transform_cone,
)
from .initializer import InitProblem, InitSolution, Mode, jacobian, residuals, solve
from .simulator import (
    DetectorModel,
    Scenario,
    SimulationReport,
    metrics,
    run_scenario,
    sample_cones,
    trajectory_waypoints,
)

__version__ = "0.1.0"
