"""The three experiment scenarios plus the force sweep and threshold
calibration, each producing a CSV trace and a JSON summary.

force-sense   -- the probe is held at the scaffold centre while a linear test
                 stage presses a load-cell pad against it through ten
                 advance/hold/retract cycles; compares the tension-based
                 force estimate against ground truth (transmission loss and
                 hysteresis residuals).
scan-1dof     -- single-point vertical approach with first-derivative
                 detection, back-stepping to the optimum force, then a
                 retreat sweep to zero contact.
scan-2dof     -- six-point raster with second-derivative (P/Q/R) detection.
scan thresholds are auto-calibrated from no-contact runs unless the config
pins them explicitly.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .calibration import build_plant, calibrate_thresholds
from .config import ExperimentConfig
from .controller import ForceObserver, run_scan
from .detection import ContactDetector, DetectorConfig
from .errors import CalibrationError, ConfigurationError
from .geometry import TubePose, inverse_kinematics
from .imaging import image_quality
from .plant import linear_stage_profile
from .statics import Baseline, TensionFrame, capture_baseline
from .trace import (
    make_row,
    summarize_scan,
    summarize_sense,
    summarize_sweep,
    write_summary,
    write_trace,
)


def _capture_baseline(plant, state, detector, n_samples, dt):
    """Hold position until the detector filters are warm and at least
    n_samples have been averaged; returns (state, Baseline, pending rows).

    The per-sample rows are returned unfinished because cf_cal needs the
    baseline that only exists once the window completes.
    """
    n_samples = max(n_samples, detector.warmup_samples + 5)
    frames = []
    pending = []
    lengths = state.commanded_lengths
    for _ in range(n_samples):
        state, frame = plant.step(state, lengths, dt)
        features, _ = detector.update(frame.t, frame.T_meas)
        frames.append(TensionFrame(frame.t, frame.T_true, frame.T_meas))
        pending.append((frame, features, state.pose, state.commanded_lengths))
    baseline = capture_baseline(frames, min_frames=n_samples)
    return state, baseline, pending


def _finish_baseline_rows(pending, observer, quality_model):
    rows = []
    for frame, features, pose, commanded in pending:
        cf_cal = observer.raw_estimate(frame.T_meas, pose)
        quality = image_quality(frame.ground_truth_CF, quality_model)
        rows.append(make_row(frame.t, commanded, frame, cf_cal, pose,
                             "Baseline", quality, features))
    return rows


def run_experiment_A(cfg: ExperimentConfig):
    """Force-sensing accuracy against the moving-stage ground truth."""
    plant = build_plant(cfg)
    state = plant.init_state(cfg.run.seed, TubePose())
    detector = ContactDetector(cfg.detector)
    dt = cfg.run.dt_s
    state, baseline, pending = _capture_baseline(
        plant, state, detector, cfg.statics.baseline_samples, dt)
    observer = ForceObserver(plant.geom, baseline, plant.min_tension,
                             plant.friction)
    rows = _finish_baseline_rows(pending, observer, cfg.quality)

    surface0 = cfg.tissue.surface_z_mm
    t0 = state.time_s
    n_ticks = int(round(cfg.stage.total_duration_s / dt))
    lengths = state.commanded_lengths
    for _ in range(n_ticks):
        t_rel = state.time_s + dt - t0
        surface = surface0 - linear_stage_profile(min(t_rel,
                                                      cfg.stage.total_duration_s
                                                      - 1e-12), cfg.stage)
        state, frame = plant.step(state, lengths, dt, surface_z=surface)
        features, _ = detector.update(frame.t, frame.T_meas)
        cf_cal = observer.raw_estimate(frame.T_meas, state.pose)
        quality = image_quality(frame.ground_truth_CF, cfg.quality)
        rows.append(make_row(frame.t, state.commanded_lengths, frame, cf_cal,
                             state.pose, "Sense", quality, features))
    summary = summarize_sense(rows)
    summary["noise_sigma_N"] = cfg.sensor.noise_sigma_N
    summary["friction_enabled"] = cfg.friction.enabled
    return rows, summary


def _resolve_detector(cfg: ExperimentConfig) -> DetectorConfig:
    if cfg.detector_opts.auto_calibrate and not cfg.explicit_thresholds:
        return calibrate_thresholds(cfg)
    return cfg.detector


def run_scan_experiment(cfg: ExperimentConfig):
    """Shared driver for the 1 DoF and 2 DoF scan scenarios."""
    det_cfg = _resolve_detector(cfg)
    plant = build_plant(cfg)
    points = list(cfg.controller.scan_points)
    if not points:
        raise ConfigurationError("scan needs at least one scan point")
    start = TubePose(points[0], cfg.controller.start_z_mm, 0.0)
    state = plant.init_state(cfg.run.seed, start)
    detector = ContactDetector(det_cfg)
    dt = cfg.run.dt_s
    state, baseline, pending = _capture_baseline(
        plant, state, detector, cfg.statics.baseline_samples, dt)
    observer = ForceObserver(plant.geom, baseline, plant.min_tension,
                             plant.friction,
                             compensation=cfg.controller.friction_compensation)
    rows = _finish_baseline_rows(pending, observer, cfg.quality)
    rows_append = rows.append

    def recorder(rec):
        rows_append(make_row(rec.t, rec.commanded_lengths, rec.frame,
                             rec.cf_cal, rec.pose, rec.phase_label,
                             rec.quality, rec.features))

    report, state = run_scan(plant, state, detector, cfg.controller, baseline,
                             cfg.quality, dt, on_sample=recorder)
    summary = summarize_scan(rows)
    summary["completed"] = report.completed
    if report.abort_reason:
        summary["abort_reason"] = report.abort_reason
    summary["thresholds"] = {
        "dt_threshold": det_cfg.dt_threshold,
        "p_threshold": det_cfg.p_threshold,
        "q_threshold": det_cfg.q_threshold,
        "r_threshold": det_cfg.r_threshold,
    }
    return rows, summary, report, det_cfg


run_experiment_B = run_scan_experiment
run_experiment_C = run_scan_experiment


def run_force_sweep(cfg: ExperimentConfig):
    """Step the probe into the tissue while recording (force, quality); the
    quality optimum locates the optimum contact force."""
    plant = build_plant(cfg)
    state = plant.init_state(cfg.run.seed, TubePose(0.0, cfg.sweep.start_z_mm))
    detector = ContactDetector(cfg.detector)
    dt = cfg.run.dt_s
    state, baseline, pending = _capture_baseline(
        plant, state, detector, cfg.statics.baseline_samples, dt)
    observer = ForceObserver(plant.geom, baseline, plant.min_tension,
                             plant.friction)
    rows = _finish_baseline_rows(pending, observer, cfg.quality)

    cmd_pose = TubePose(0.0, cfg.sweep.start_z_mm)
    contacted = False
    for step_idx in range(cfg.sweep.max_steps):
        cmd_pose = cmd_pose.translated(dz=cfg.controller.step_mm)
        lengths = inverse_kinematics(cmd_pose, plant.geom)
        frame = None
        for _ in range(cfg.sweep.settle_samples):
            state, frame = plant.step(state, lengths, dt)
            features, _ = detector.update(frame.t, frame.T_meas)
            cf_cal = observer.raw_estimate(frame.T_meas, state.pose)
            quality = image_quality(frame.ground_truth_CF, cfg.quality)
            rows.append(make_row(frame.t, state.commanded_lengths, frame,
                                 cf_cal, state.pose, "Sweep", quality,
                                 features))
        if frame.ground_truth_CF > 0:
            contacted = True
        if frame.ground_truth_CF >= cfg.sweep.max_cf_N:
            break
    if cfg.quality.contact_required and not contacted:
        raise CalibrationError("force sweep ended before tissue contact; "
                               "no quality optimum exists")
    summary = summarize_sweep(rows)
    return rows, summary


def run_calibrate(cfg: ExperimentConfig):
    """Calibration scenario: compute thresholds and trace the final pass."""
    rows = []
    quality = 0.0

    def on_sample(state, frame, features):
        rows.append(make_row(frame.t, state.commanded_lengths, frame, 0.0,
                             state.pose, "Calibrate", quality, features))

    det_cfg = calibrate_thresholds(cfg, on_sample=on_sample)
    summary = {
        "mode": det_cfg.mode,
        "dt_threshold": det_cfg.dt_threshold,
        "p_threshold": det_cfg.p_threshold,
        "q_threshold": det_cfg.q_threshold,
        "r_threshold": det_cfg.r_threshold,
        "safety_factor": cfg.detector_opts.safety_factor,
        "calibration_seeds": cfg.detector_opts.calibration_seeds,
        "samples": len(rows),
    }
    return rows, summary, det_cfg


def execute(cfg: ExperimentConfig) -> dict:
    """Run the configured scenario and write trace + summary files."""
    out = Path(cfg.run.out_dir)
    report = None
    if cfg.scenario == "force-sense":
        rows, summary = run_experiment_A(cfg)
    elif cfg.scenario in ("scan-1dof", "scan-2dof"):
        rows, summary, report, _ = run_scan_experiment(cfg)
    elif cfg.scenario == "force-sweep":
        rows, summary = run_force_sweep(cfg)
    elif cfg.scenario == "calibrate":
        rows, summary, _ = run_calibrate(cfg)
    else:
        raise ConfigurationError(f"unknown scenario {cfg.scenario!r}")
    stem = cfg.scenario.replace("-", "_")
    trace_path = write_trace(out / f"{stem}_trace.csv", rows)
    summary_path = write_summary(out / f"{stem}_summary.json", summary)
    return {"rows": rows, "summary": summary, "report": report,
            "trace_path": trace_path, "summary_path": summary_path}
