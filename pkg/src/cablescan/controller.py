"""Autonomous scanning state machine.

Per scan point: step the probe toward the surface in 0.01 mm increments until
the contact detector fires, hold, then back-step in 0.01 mm increments until
the regulated contact force is reached; finally retract slightly and traverse
to the next point. Approach stepping is continuous (one step per tick by
default) so contact shows up as a sustained tension-derivative signature;
back-stepping is paced so the smoothed force estimate settles between steps.

Force regulation works on what the instrument can actually see: the
tension-based estimate corrected for the capstan transmission. The correction
is branch-aware because the capstan ratio differs between loading (the sensed
deviation is attenuated by a = exp(-mu*beta)) and unloading (it rides
b = exp(+mu*beta) plus the stiction band); both inverses also remove the
preset-anchoring drift sum(T0_i cos theta_i(q)) that appears once the pose
moves away from the pose where the baseline was captured.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import geometry
from .detection import ContactDetector, DetectionEvent
from .errors import ConfigurationError, SolverError
from .friction import FrictionModel
from .geometry import ScaffoldGeometry, TubePose, in_workspace, inverse_kinematics
from .imaging import QualityModel, image_quality
from .plant import Plant, PlantState
from .statics import Baseline, project_baseline

logger = logging.getLogger(__name__)


class Phase(str, Enum):
    APPROACH = "Approach"
    HOLD = "Hold"
    BACKSTEP = "BackStep"
    TRAVERSE = "Traverse"
    DONE = "Done"
    ABORTED = "Aborted"


# transitions the state machine may take (plus any -> ABORTED)
LEGAL_TRANSITIONS = {
    (Phase.APPROACH, Phase.HOLD),
    (Phase.HOLD, Phase.BACKSTEP),
    (Phase.BACKSTEP, Phase.TRAVERSE),
    (Phase.BACKSTEP, Phase.DONE),
    (Phase.TRAVERSE, Phase.APPROACH),
}

BACKSTEP_MODE_FORCE = "force"
BACKSTEP_MODE_FIXED = "fixed-count"


@dataclass(frozen=True)
class ControllerConfig:
    step_mm: float = 0.01
    backstep_mm: float = 0.01
    target_force_N: float = 0.05
    force_tolerance_N: float = 0.01
    max_force_N: float = 1.0
    scan_points: tuple[float, ...] = (0.0,)
    settle_samples: int = 20
    approach_step_interval: int = 1
    traverse_step_interval: int = 1
    backstep_mode: str = BACKSTEP_MODE_FORCE
    friction_compensation: bool = True
    expected_stiffness_N_per_mm: float = 0.5
    traverse_retract_mm: float = 0.05
    zero_sweep: bool = False
    zero_floor_N: float = 0.01
    stuck_steps: int = 80
    ride_epsilon_N: float = 0.002
    start_z_mm: float = 0.0
    max_samples: int = 300_000

    def __post_init__(self):
        if self.step_mm <= 0 or self.backstep_mm <= 0:
            raise ConfigurationError("step sizes must be positive")
        if not (0 < self.target_force_N < self.max_force_N):
            raise ConfigurationError("need 0 < target force < max force")
        if self.force_tolerance_N <= 0:
            raise ConfigurationError("force tolerance must be positive")
        if self.settle_samples < 1 or self.approach_step_interval < 1 \
                or self.traverse_step_interval < 1:
            raise ConfigurationError("pacing values must be >= 1")
        if self.backstep_mode not in (BACKSTEP_MODE_FORCE, BACKSTEP_MODE_FIXED):
            raise ConfigurationError(f"unknown backstep mode {self.backstep_mode!r}")


@dataclass
class PointRecord:
    point_x_mm: float
    detected_cf_true_N: float
    detected_cf_est_N: float
    backstep_count: int
    final_cf_true_N: float
    final_cf_est_N: float
    quality_at_acquisition: float
    samples: int


@dataclass
class ScanReport:
    points: list[PointRecord] = field(default_factory=list)
    completed: bool = False
    abort_reason: str | None = None
    phase_history: list[tuple[float, str]] = field(default_factory=list)
    zero_sweep_backsteps: int | None = None
    zero_sweep_final_cf_N: float | None = None

    @property
    def detected_cf_true_mean(self) -> float:
        return float(np.mean([p.detected_cf_true_N for p in self.points]))

    @property
    def final_cf_true_mean(self) -> float:
        return float(np.mean([p.final_cf_true_N for p in self.points]))

    @property
    def backstep_count_mean(self) -> float:
        return float(np.mean([p.backstep_count for p in self.points]))

    @property
    def quality_mean(self) -> float:
        return float(np.mean([p.quality_at_acquisition for p in self.points]))


class ForceObserver:
    """Tension-to-contact-force estimate as the deployed instrument computes
    it: captured baseline projected onto the current-pose equilibrium
    manifold, plus an optional capstan-transmission inverse."""

    def __init__(self, geom: ScaffoldGeometry, baseline: Baseline,
                 min_tension_N: float, friction: FrictionModel,
                 compensation: bool = True):
        self.geom = geom
        self.baseline = baseline
        self.min_tension = min_tension_N
        self.friction = friction
        self.compensation = compensation

    def _cos_theta(self, pose: TubePose) -> np.ndarray:
        W = geometry.structure_matrix(pose, self.geom)
        return self.geom.contact_axis @ W[:2]

    def raw_estimate(self, tensions: np.ndarray, pose: TubePose) -> float:
        """Uncompensated estimate sum (T_i - T0_i(q)) cos theta_i(q)."""
        W = geometry.structure_matrix(pose, self.geom)
        T0q = project_baseline(W, self.baseline.T0, self.min_tension)
        cos_t = self.geom.contact_axis @ W[:2]
        return float((np.asarray(tensions, dtype=float) - T0q) @ cos_t)

    def _preset_drift(self, pose: TubePose) -> float:
        return float(np.dot(self.baseline.T0, self._cos_theta(pose)))

    def compensated(self, raw_cf: float, pose: TubePose,
                    unloading: bool = False) -> float:
        """Invert the capstan transmission for the given motion branch."""
        if not self.compensation:
            return raw_cf
        cos_t = self._cos_theta(pose)
        drift = float(np.dot(self.baseline.T0, cos_t))
        fm = self.friction
        if unloading:
            band_term = fm.stiction_band_N * float(np.abs(cos_t).sum())
            b = fm.amplification
            return (raw_cf - (1.0 - b) * drift - band_term) / b
        a = fm.attenuation
        return (raw_cf - (1.0 - a) * drift) / a

    def estimate(self, tensions: np.ndarray, pose: TubePose,
                 unloading: bool = False) -> float:
        return self.compensated(self.raw_estimate(tensions, pose), pose,
                                unloading)


@dataclass
class SampleRecord:
    """Everything the harness needs to log one control-loop tick."""

    t: float
    frame: object
    features: object
    pose: TubePose
    commanded_lengths: np.ndarray
    phase_label: str
    cf_cal: float
    quality: float


class _ScanLoop:
    def __init__(self, plant: Plant, state: PlantState,
                 detector: ContactDetector, cfg: ControllerConfig,
                 baseline: Baseline, quality_model: QualityModel,
                 dt: float, on_sample):
        self.plant = plant
        self.state = state
        self.detector = detector
        self.cfg = cfg
        self.quality_model = quality_model
        self.dt = dt
        self.on_sample = on_sample
        self.observer = ForceObserver(plant.geom, baseline, plant.min_tension,
                                      plant.friction,
                                      compensation=cfg.friction_compensation)
        self.report = ScanReport()
        self.points = list(cfg.scan_points)
        self.phase = Phase.APPROACH
        self.phase_tick = 0
        self.sample_idx = 0
        self.point_idx = 0
        self.point_start_sample = 0
        self.cmd_pose = TubePose(self.points[0] if self.points else 0.0,
                                 cfg.start_z_mm, 0.0)
        self.backstep_count = 0
        self.fixed_count_target: int | None = None
        self.acquisition_done = False
        self.sweeping = False
        self.stuck_best = math.inf
        self.stuck_counter = 0
        self.detection: DetectionEvent | None = None
        self.detected_truth = 0.0
        self.traverse_plan: list[TubePose] = []
        self.last_est_unload = math.inf
        self.prev_boundary_est = math.inf
        self.ride_streak = 0
        self.last_frame = None
        self.last_quality = 0.0

    # ------------------------------------------------------------------

    def _transition(self, new_phase: Phase, t: float):
        if new_phase is not Phase.ABORTED \
                and (self.phase, new_phase) not in LEGAL_TRANSITIONS:
            raise SolverError(
                f"illegal phase transition {self.phase} -> {new_phase}")
        self.phase = new_phase
        self.phase_tick = 0
        self.report.phase_history.append((t, new_phase.value))

    def _abort(self, reason: str, t: float):
        self.report.abort_reason = reason
        self._transition(Phase.ABORTED, t)

    def _build_traverse_plan(self, next_x: float) -> list[TubePose]:
        cfg = self.cfg
        plan = []
        pose = self.cmd_pose
        n_retract = max(1, math.ceil(cfg.traverse_retract_mm / cfg.backstep_mm
                                     - 1e-12))
        for _ in range(n_retract):
            pose = pose.translated(dz=-cfg.backstep_mm)
            plan.append(pose)
        dx = next_x - pose.x
        n_lat = max(1, math.ceil(abs(dx) / cfg.step_mm - 1e-12))
        step = dx / n_lat
        for i in range(1, n_lat + 1):
            plan.append(TubePose(pose.x + i * step, pose.z, pose.phi))
        return plan

    def _finish_point(self, t: float):
        self.point_idx += 1
        if self.point_idx >= len(self.points):
            self._transition(Phase.DONE, t)
            return
        self.traverse_plan = self._build_traverse_plan(
            self.points[self.point_idx])
        self._transition(Phase.TRAVERSE, t)

    # ------------------------------------------------------------------

    def _estimate_trustworthy(self, est: float) -> bool:
        """The unloading inverse only reads the true force once the capstan
        interface is sliding back (the estimate then falls step by step);
        while stuck it reports a stale value. With an ideal transmission the
        estimate is always valid."""
        fm = self.plant.friction
        if not self.cfg.friction_compensation or (
                fm.attenuation == 1.0 and fm.stiction_band_N == 0.0):
            return True
        if est <= self.prev_boundary_est - self.cfg.ride_epsilon_N:
            self.ride_streak += 1
        else:
            self.ride_streak = 0
        return self.ride_streak >= 2

    def _backstep_boundary(self, t: float):
        """Evaluate back-step termination with the settled estimate; called
        just before a step would be commanded."""
        cfg = self.cfg
        est = self.last_est_unload
        trustworthy = self._estimate_trustworthy(est)
        self.prev_boundary_est = est
        if est < self.stuck_best - 1e-4:
            self.stuck_best = est
            self.stuck_counter = 0
        else:
            self.stuck_counter += 1
            if self.stuck_counter >= cfg.stuck_steps:
                self._abort("back-step force estimate stopped decreasing "
                            "(stiction pathology)", t)
                return False
        if not self.acquisition_done:
            if self.fixed_count_target is not None:
                done = self.backstep_count >= self.fixed_count_target
            else:
                done = trustworthy and (
                    est - cfg.target_force_N <= cfg.force_tolerance_N)
            if done:
                frame = self.last_frame
                self.report.points.append(PointRecord(
                    point_x_mm=self.points[self.point_idx],
                    detected_cf_true_N=self.detected_truth,
                    detected_cf_est_N=self.detection.cf_at_detect,
                    backstep_count=self.backstep_count,
                    final_cf_true_N=frame.ground_truth_CF,
                    final_cf_est_N=est,
                    quality_at_acquisition=self.last_quality,
                    samples=self.sample_idx - self.point_start_sample))
                self.acquisition_done = True
                if cfg.zero_sweep:
                    self.sweeping = True
                    self.backstep_count = 0
                else:
                    self._finish_point(t)
                return False
        elif self.sweeping:
            frame = self.last_frame
            if est <= cfg.zero_floor_N or frame.ground_truth_CF <= 0.0 \
                    or self.cmd_pose.z <= cfg.start_z_mm:
                self.report.zero_sweep_backsteps = self.backstep_count
                self.report.zero_sweep_final_cf_N = frame.ground_truth_CF
                self.sweeping = False
                self._finish_point(t)
                return False
        return True

    def _decide_motion(self):
        """Update the commanded pose for this tick. Returns False on abort."""
        cfg = self.cfg
        t = self.state.time_s
        if self.phase is Phase.APPROACH:
            if self.phase_tick % cfg.approach_step_interval == 0:
                nxt = self.cmd_pose.translated(dz=cfg.step_mm)
                if not in_workspace(nxt, self.plant.geom):
                    self._abort("approach left the workspace", t)
                    return False
                self.cmd_pose = nxt
        elif self.phase is Phase.BACKSTEP:
            if self.phase_tick % cfg.settle_samples == 0:
                if not self._backstep_boundary(t):
                    return self.phase not in (Phase.DONE, Phase.ABORTED)
                nxt = self.cmd_pose.translated(dz=-cfg.backstep_mm)
                if not in_workspace(nxt, self.plant.geom):
                    self._abort("back-step left the workspace", t)
                    return False
                self.cmd_pose = nxt
                self.backstep_count += 1
        elif self.phase is Phase.TRAVERSE:
            if self.phase_tick % cfg.traverse_step_interval == 0 \
                    and self.traverse_plan:
                nxt = self.traverse_plan.pop(0)
                if not in_workspace(nxt, self.plant.geom):
                    self._abort("traverse left the workspace", t)
                    return False
                self.cmd_pose = nxt
        return True

    def run(self) -> tuple[ScanReport, PlantState]:
        cfg = self.cfg
        if not self.points:
            self.report.completed = True
            self.report.phase_history.append((self.state.time_s,
                                              Phase.DONE.value))
            return self.report, self.state
        self.report.phase_history.append((self.state.time_s,
                                          Phase.APPROACH.value))
        self.detector.arm()

        while self.phase not in (Phase.DONE, Phase.ABORTED):
            if self.sample_idx >= cfg.max_samples:
                self._abort("sample budget exhausted", self.state.time_s)
                break
            if not self._decide_motion():
                if self.phase in (Phase.DONE, Phase.ABORTED):
                    break

            try:
                lengths = inverse_kinematics(self.cmd_pose, self.plant.geom)
                self.state, frame = self.plant.step(self.state, lengths, self.dt)
            except SolverError as exc:
                self._abort(f"plant solver failed: {exc}", self.state.time_s)
                break

            features, event = self.detector.update(frame.t, frame.T_meas)
            # instantaneous estimate for logging/detection, smoothed for the
            # paced back-step regulation
            cf_inst = self.observer.raw_estimate(frame.T_meas, self.state.pose)
            raw_cf_smooth = self.observer.raw_estimate(features.T_smooth,
                                                       self.state.pose)
            quality = image_quality(frame.ground_truth_CF, self.quality_model)
            self.last_frame = frame
            self.last_quality = quality
            self.last_est_unload = self.observer.compensated(
                raw_cf_smooth, self.state.pose, unloading=True)

            if event is not None:
                if self.phase is Phase.APPROACH:
                    self.detection = DetectionEvent(
                        t_detect=event.t_detect, trigger=event.trigger,
                        cf_at_detect=self.observer.compensated(
                            cf_inst, self.state.pose),
                        tendon_snapshot=event.tendon_snapshot)
                    self.detected_truth = frame.ground_truth_CF
                    self._transition(Phase.HOLD, frame.t)
                else:
                    logger.warning("detection event ignored in phase %s",
                                   self.phase)

            if self.phase is Phase.APPROACH:
                est = self.observer.compensated(cf_inst, self.state.pose)
                if est > cfg.max_force_N:
                    self._abort("max contact force exceeded", frame.t)
            elif self.phase is Phase.HOLD and self.phase_tick >= cfg.settle_samples:
                self.backstep_count = 0
                self.acquisition_done = False
                self.sweeping = False
                self.stuck_best = math.inf
                self.stuck_counter = 0
                self.prev_boundary_est = math.inf
                self.ride_streak = 0
                if cfg.backstep_mode == BACKSTEP_MODE_FIXED:
                    drop = self.detection.cf_at_detect - cfg.target_force_N
                    per_step = cfg.expected_stiffness_N_per_mm * cfg.backstep_mm
                    self.fixed_count_target = max(0, round(drop / per_step))
                else:
                    self.fixed_count_target = None
                self._transition(Phase.BACKSTEP, frame.t)
            elif self.phase is Phase.TRAVERSE and not self.traverse_plan:
                self.point_start_sample = self.sample_idx + 1
                self.detector.arm()
                self._transition(Phase.APPROACH, frame.t)

            if self.on_sample is not None:
                label = "Sweep" if (self.phase is Phase.BACKSTEP
                                    and self.sweeping) else self.phase.value
                self.on_sample(SampleRecord(
                    t=frame.t, frame=frame, features=features,
                    pose=self.state.pose,
                    commanded_lengths=self.state.commanded_lengths,
                    phase_label=label, cf_cal=cf_inst, quality=quality))
            self.phase_tick += 1
            self.sample_idx += 1

        self.report.completed = self.phase is Phase.DONE
        return self.report, self.state


def run_scan(plant: Plant, state: PlantState, detector: ContactDetector,
             cfg: ControllerConfig, baseline: Baseline,
             quality_model: QualityModel, dt: float = 0.01,
             on_sample=None) -> tuple[ScanReport, PlantState]:
    """Execute the scan state machine over all configured points.

    Deterministic for a given plant seed; ``on_sample(SampleRecord)`` is
    invoked once per tick when provided. Ordinary aborts are reported via
    ``ScanReport.completed`` / ``abort_reason`` rather than raised.
    """
    return _ScanLoop(plant, state, detector, cfg, baseline, quality_model,
                     dt, on_sample).run()
