"""Experiment configuration: TOML file loading, scenario presets, defaults.

Config files use the sections [scaffold], [cable], [friction], [tissue],
[sensor], [motor], [statics], [detector], [controller], [quality], [stage],
[sweep] and [run]. Every key has a default; scenario presets adjust a few of
them (e.g. the 2 DoF scan uses the second-derivative detector and six scan
points). Precedence: built-in defaults < scenario preset < config file < CLI
flags.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .controller import ControllerConfig
from .detection import MODE_FIRST, MODE_SECOND, DetectorConfig
from .errors import ConfigurationError
from .friction import FrictionModel
from .geometry import ScaffoldConfig
from .imaging import QualityModel
from .plant import CableModel, MotorModel, SensorModel, StageProfile, TissueModel

SCENARIOS = ("force-sense", "scan-1dof", "scan-2dof", "force-sweep", "calibrate")

SIX_POINT_PATH = (-1.25, -0.75, -0.25, 0.25, 0.75, 1.25)


@dataclass(frozen=True)
class StaticsConfig:
    preset_tension_N: float = 2.0
    min_tension_N: float = 0.5
    baseline_samples: int = 100

    def __post_init__(self):
        if self.preset_tension_N <= 0 or self.min_tension_N <= 0:
            raise ConfigurationError("tension presets must be positive")
        if self.baseline_samples < 1:
            raise ConfigurationError("baseline_samples must be >= 1")


@dataclass(frozen=True)
class SweepConfig:
    max_cf_N: float = 0.16
    settle_samples: int = 10
    start_z_mm: float = 0.0
    max_steps: int = 2000


@dataclass(frozen=True)
class RunSection:
    dt_s: float = 0.01
    seed: int = 0
    out_dir: str = "out"
    quiet: bool = False

    def __post_init__(self):
        if self.dt_s <= 0:
            raise ConfigurationError("dt_s must be positive")


@dataclass(frozen=True)
class DetectorSection:
    """[detector] keys beyond the DetectorConfig fields themselves."""

    auto_calibrate: bool = True
    safety_factor: float = 1.5
    calibration_seeds: int = 3
    calibration_depth_mm: float = 2.0

    def __post_init__(self):
        if self.safety_factor <= 1.0:
            raise ConfigurationError("safety_factor must exceed 1")
        if self.calibration_seeds < 1 or self.calibration_depth_mm <= 0:
            raise ConfigurationError("invalid calibration settings")


@dataclass(frozen=True)
class FrictionSection:
    enabled: bool = True
    mu: float = FrictionModel().mu
    wrap_angle_rad: float = FrictionModel().wrap_angle_rad
    stiction_band_N: float = FrictionModel().stiction_band_N

    def model(self) -> FrictionModel:
        if not self.enabled:
            return FrictionModel.off()
        return FrictionModel(self.mu, self.wrap_angle_rad, self.stiction_band_N)


@dataclass
class ExperimentConfig:
    scenario: str
    scaffold: ScaffoldConfig = field(default_factory=ScaffoldConfig)
    cable: CableModel = field(default_factory=CableModel)
    friction: FrictionSection = field(default_factory=FrictionSection)
    tissue: TissueModel = field(default_factory=TissueModel)
    sensor: SensorModel = field(default_factory=SensorModel)
    motor: MotorModel = field(default_factory=MotorModel)
    statics: StaticsConfig = field(default_factory=StaticsConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    detector_opts: DetectorSection = field(default_factory=DetectorSection)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    quality: QualityModel = field(default_factory=QualityModel)
    stage: StageProfile = field(default_factory=StageProfile)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    run: RunSection = field(default_factory=RunSection)
    explicit_thresholds: bool = False


_SECTION_TYPES = {
    "scaffold": ScaffoldConfig,
    "cable": CableModel,
    "friction": FrictionSection,
    "tissue": TissueModel,
    "sensor": SensorModel,
    "motor": MotorModel,
    "statics": StaticsConfig,
    "detector": None,  # split between DetectorConfig and DetectorSection
    "controller": ControllerConfig,
    "quality": QualityModel,
    "stage": StageProfile,
    "sweep": SweepConfig,
    "run": RunSection,
}

_THRESHOLD_KEYS = {"dt_threshold", "p_threshold", "q_threshold", "r_threshold"}


def _build(cls, overrides: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise ConfigurationError(
            f"unknown {cls.__name__} keys: {sorted(unknown)}")
    coerced = dict(overrides)
    for f in dataclasses.fields(cls):
        if f.name in coerced and isinstance(coerced[f.name], list):
            coerced[f.name] = tuple(coerced[f.name])
    return cls(**coerced)


def _scenario_presets(scenario: str, tissue_kind: str) -> dict:
    """Per-scenario default overrides, keyed by section."""
    if scenario == "force-sense":
        return {"tissue": {"surface_z_mm": 0.5}}
    if scenario == "scan-1dof":
        preset = {
            "detector": {"mode": MODE_FIRST},
            "controller": {"scan_points": (0.0,), "zero_sweep": True},
            "tissue": {"surface_z_mm": 0.5},
        }
        if tissue_kind == "rigid":
            preset["tissue"] = {"surface_z_mm": 0.05, "stiffness_N_per_mm": 100.0}
            preset["controller"]["approach_step_interval"] = 200
            preset["detector_opts"] = {"calibration_depth_mm": 0.3}
        return preset
    if scenario == "scan-2dof":
        d2 = DetectorConfig.default_second_derivative()
        return {
            "detector": {"mode": MODE_SECOND, "ma_window": d2.ma_window,
                         "grad_window": d2.grad_window, "lag_t0": d2.lag_t0,
                         "lag_t1": d2.lag_t1},
            "controller": {"scan_points": SIX_POINT_PATH},
            "tissue": {"surface_z_mm": 0.5},
        }
    if scenario in ("force-sweep", "calibrate"):
        return {"tissue": {"surface_z_mm": 0.5}}
    raise ConfigurationError(f"unknown scenario {scenario!r}")


def load_config_file(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc
    unknown = set(data) - set(_SECTION_TYPES)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    return data


def build_config(scenario: str, file_data: dict | None = None,
                 seed: int | None = None, out_dir: str | None = None,
                 quiet: bool | None = None) -> ExperimentConfig:
    """Merge defaults, scenario presets, config-file data and CLI flags."""
    if scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {scenario!r}")
    file_data = file_data or {}
    tissue_kind = file_data.get("tissue", {}).get("kind", "soft-tissue")
    presets = _scenario_presets(scenario, tissue_kind)

    merged: dict[str, dict] = {}
    for section in _SECTION_TYPES:
        merged[section] = {}
        merged[section].update(presets.get(section, {}))
        merged[section].update(file_data.get(section, {}))
    merged.setdefault("detector_opts", {}).update(presets.get("detector_opts", {}))

    det_keys = {f.name for f in dataclasses.fields(DetectorConfig)}
    det_overrides = {}
    opt_overrides = dict(merged.get("detector_opts", {}))
    for key, value in merged["detector"].items():
        if key in det_keys:
            det_overrides[key] = value
        else:
            opt_overrides[key] = value
    explicit_thresholds = bool(_THRESHOLD_KEYS & set(det_overrides))

    run_overrides = dict(merged["run"])
    if seed is not None:
        run_overrides["seed"] = seed
    if out_dir is not None:
        run_overrides["out_dir"] = out_dir
    if quiet is not None:
        run_overrides["quiet"] = quiet

    run_section = _build(RunSection, run_overrides)

    detector_base = (DetectorConfig.default_second_derivative()
                     if det_overrides.get("mode") == MODE_SECOND
                     else DetectorConfig.default_first_derivative())
    det_fields = {f.name: getattr(detector_base, f.name)
                  for f in dataclasses.fields(DetectorConfig)}
    det_fields.update(det_overrides)
    det_fields.setdefault("dt", run_section.dt_s)
    if "dt" not in det_overrides:
        det_fields["dt"] = run_section.dt_s

    return ExperimentConfig(
        scenario=scenario,
        scaffold=_build(ScaffoldConfig, merged["scaffold"]),
        cable=_build(CableModel, merged["cable"]),
        friction=_build(FrictionSection, merged["friction"]),
        tissue=_build(TissueModel, merged["tissue"]),
        sensor=_build(SensorModel, merged["sensor"]),
        motor=_build(MotorModel, merged["motor"]),
        statics=_build(StaticsConfig, merged["statics"]),
        detector=_build(DetectorConfig, det_fields),
        detector_opts=_build(DetectorSection, opt_overrides),
        controller=_build(ControllerConfig, merged["controller"]),
        quality=_build(QualityModel, merged["quality"]),
        stage=_build(StageProfile, merged["stage"]),
        sweep=_build(SweepConfig, merged["sweep"]),
        run=run_section,
        explicit_thresholds=explicit_thresholds,
    )
