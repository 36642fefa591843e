"""Geodesic engine for the axially symmetric spin metric."""

from .model import (
    DegenerateSpin,
    GeodesicConstants,
    GeodesicState,
    LatitudeForbidden,
    NoTurningPoint,
    OrbitClass,
    RadiusForbidden,
    TimeReversed,
    UndefinedTilt,
    classify_orbit,
    constants_from_state,
    energy_residual,
    eom_rhs,
    metric_norm,
    spin_outcome,
    state_from_constants,
    tilt,
)
from .integrate import (
    StepUnderflow,
    Trajectory,
    TrajectoryEvent,
    available_backends,
    conserved_drift,
    constants_array,
    default_backend,
    integrate,
)
from .analysis import (
    NoNodes,
    export_trajectory,
    node_precession,
    stereogram_svg,
    summary_report,
    trajectory_csv,
)
