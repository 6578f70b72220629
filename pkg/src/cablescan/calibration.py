"""Detector threshold calibration.

Runs the configured scan motion with the contact surface removed, collects
the worst-case no-contact detection statistics (tension-redistribution drift
from the commanded motion plus sensor noise, filtered through the configured
windows), and sets every threshold a safety factor above them. By
construction the calibration runs themselves produce zero false positives at
the returned thresholds.
"""

from __future__ import annotations

import math

import numpy as np

from .config import ExperimentConfig
from .detection import ContactDetector, DetectorConfig, FeatureStats, \
    thresholds_from_stats
from .errors import CalibrationError
from .geometry import TubePose, default_geometry, inverse_kinematics
from .plant import Plant, TissueModel


def build_plant(cfg: ExperimentConfig, with_tissue: bool = True,
                tissue: TissueModel | None = None) -> Plant:
    geom = default_geometry(cfg.scaffold)
    return Plant(geom,
                 cable=cfg.cable,
                 friction=cfg.friction.model(),
                 tissue=(tissue if tissue is not None
                         else (cfg.tissue if with_tissue else None)),
                 sensor=cfg.sensor,
                 motor=cfg.motor,
                 preset_tension_N=cfg.statics.preset_tension_N,
                 min_tension_N=cfg.statics.min_tension_N)


def _calibration_poses(cfg: ExperimentConfig) -> list[tuple[TubePose, bool]]:
    """(Commanded pose, armed/collect flag) per tick for the no-contact
    replica of the scan motion.

    Per point: approach to depth at the approach pacing, a stretch of
    settle-paced retreat (what precedes a traverse in a real scan and what
    the lag references of the next approach will see), a fast retract of the
    remainder, then the traverse. Statistics are collected only during the
    approach segments, the phases in which the armed detector actually runs;
    the lag references still reach back into the preceding motion through the
    shared feature stream, exactly as in a real scan.
    """
    ctl = cfg.controller
    det = cfg.detector
    depth = cfg.detector_opts.calibration_depth_mm
    n_steps = max(1, math.ceil(depth / ctl.step_mm))
    # paced-retreat tail long enough to fill every filter window and lag
    lookback = det.ma_window + 2 * det.grad_window + max(det.lag_t0, det.lag_t1)
    n_paced = min(n_steps, math.ceil(lookback / ctl.settle_samples) + 2)
    poses: list[tuple[TubePose, bool]] = []
    points = list(ctl.scan_points) or [0.0]
    for idx, x in enumerate(points):
        pose = TubePose(x, ctl.start_z_mm, 0.0)
        for k in range(1, n_steps + 1):
            target = pose.translated(dz=k * ctl.step_mm)
            poses.extend([(target, True)] * ctl.approach_step_interval)
        z_top = n_steps * ctl.step_mm
        for k in range(1, n_paced + 1):
            step_pose = pose.translated(dz=z_top - k * ctl.backstep_mm)
            poses.extend([(step_pose, False)] * ctl.settle_samples)
        z_rem = z_top - n_paced * ctl.backstep_mm
        n_fast = max(0, math.ceil(z_rem / ctl.backstep_mm))
        for k in range(1, n_fast + 1):
            poses.append((pose.translated(dz=max(0.0, z_rem
                                                 - k * ctl.backstep_mm)), False))
        if idx + 1 < len(points):
            dx = points[idx + 1] - x
            n_lat = max(1, math.ceil(abs(dx) / ctl.step_mm))
            for k in range(1, n_lat + 1):
                lat = TubePose(x + dx * k / n_lat, ctl.start_z_mm, 0.0)
                poses.extend([(lat, False)] * ctl.traverse_step_interval)
    return poses


def calibrate_thresholds(cfg: ExperimentConfig, seeds=None,
                         keep_tissue: bool = False,
                         on_sample=None) -> DetectorConfig:
    """Thresholds for the configured detector from seeded no-contact runs.

    keep_tissue leaves the configured contact surface in place (normally the
    surface is removed); calibration aborts if any contact occurs.
    """
    if seeds is None:
        seeds = [cfg.run.seed * 1000 + 500 + k
                 for k in range(cfg.detector_opts.calibration_seeds)]
    stats = FeatureStats()
    group = cfg.detector.loaded_group
    dt = cfg.run.dt_s
    poses = _calibration_poses(cfg)
    for seed in seeds:
        plant = build_plant(cfg, with_tissue=keep_tissue)
        points = list(cfg.controller.scan_points) or [0.0]
        state = plant.init_state(seed, TubePose(points[0],
                                                cfg.controller.start_z_mm, 0.0))
        detector = ContactDetector(cfg.detector)
        n_quiet = max(cfg.statics.baseline_samples,
                      detector.warmup_samples + 5)
        start = TubePose(points[0], cfg.controller.start_z_mm, 0.0)
        quiet = [(start, True)] * n_quiet
        for pose, collect in quiet + poses:
            lengths = inverse_kinematics(pose, plant.geom)
            state, frame = plant.step(state, lengths, dt)
            if frame.ground_truth_CF > 0:
                raise CalibrationError(
                    "contact occurred during a calibration scenario")
            features, _ = detector.update(frame.t, frame.T_meas)
            if collect and detector.ready:
                stats.update(features, group)
            if on_sample is not None and seed == seeds[-1]:
                on_sample(state, frame, features)
    return thresholds_from_stats(cfg.detector, stats,
                                 cfg.detector_opts.safety_factor)


def no_contact_run(cfg: ExperimentConfig, det_cfg: DetectorConfig,
                   seed: int) -> int:
    """Replay the scan motion with no contact surface, detector armed during
    the approach segments; returns the number of (false) detection events."""
    plant = build_plant(cfg, with_tissue=False)
    points = list(cfg.controller.scan_points) or [0.0]
    start = TubePose(points[0], cfg.controller.start_z_mm, 0.0)
    state = plant.init_state(seed, start)
    detector = ContactDetector(det_cfg)
    n_quiet = max(cfg.statics.baseline_samples, detector.warmup_samples + 5)
    events = 0
    armed_prev = False
    for pose, armed in [(start, False)] * n_quiet + _calibration_poses(cfg):
        if armed and not armed_prev:
            detector.arm()
        elif not armed and armed_prev:
            detector.disarm()
        armed_prev = armed
        state, frame = plant.step(state,
                                  inverse_kinematics(pose, plant.geom),
                                  cfg.run.dt_s)
        _, event = detector.update(frame.t, frame.T_meas)
        if event is not None:
            events += 1
            detector.arm()  # keep watching for further spurious events
    return events
