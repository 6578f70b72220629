"""Planar four-tendon cable-driven probe positioner: quasi-static simulation,
tension-based contact force sensing, derivative-threshold contact detection
and autonomous surface scanning."""

from .errors import (
    BackStepStuckError,
    CablescanError,
    CalibrationError,
    ConfigurationError,
    DegenerateGeometryError,
    InsufficientDataError,
    SensorFaultError,
    SolverError,
    WorkspaceError,
    WrenchInfeasibleError,
)
from .geometry import (
    ScaffoldConfig,
    ScaffoldGeometry,
    TendonAngles,
    TubePose,
    default_geometry,
    forward_kinematics,
    in_workspace,
    inverse_kinematics,
    structure_matrix,
    tendon_angles,
)
from .statics import (
    Baseline,
    ForceEstimate,
    TensionFrame,
    capture_baseline,
    distribute_tensions,
    equilibrium_baseline,
    estimate_contact_force,
    loadcell_from_tension,
    tension_from_loadcell,
)
from .friction import FrictionModel, apply_capstan_friction, transmit_deviation
from .imaging import QualityModel, image_quality, quality_trace
from .detection import (
    ContactDetector,
    DetectionEvent,
    DetectionFeatures,
    DetectorConfig,
    compute_P,
    compute_Q,
    compute_R,
    ls_gradient,
    moving_average,
    second_derivative,
)
from .plant import (
    CableModel,
    MotorModel,
    Plant,
    PlantState,
    SensorFrame,
    SensorModel,
    StageProfile,
    TissueModel,
    linear_stage_profile,
    quantize_motor,
    tissue_reaction,
)
from .controller import (
    ControllerConfig,
    ForceObserver,
    Phase,
    PointRecord,
    ScanReport,
    run_scan,
)
from .config import ExperimentConfig, build_config, load_config_file
from .calibration import calibrate_thresholds

__version__ = "0.1.0"
