"""CSV trace and JSON summary output.

One trace row per simulation tick with a fixed column order. Summaries are
pure functions of the trace rows, so an independent reader can recompute
every summary number from the CSV alone; floats are written with repr
(shortest round-trip form), which makes re-reading bit-exact and repeated
runs byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError

TRACE_COLUMNS = (
    ["t_s"]
    + [f"cmd_L{i}_mm" for i in (1, 2, 3, 4)]
    + [f"T_true{i}_N" for i in (1, 2, 3, 4)]
    + [f"T_meas{i}_N" for i in (1, 2, 3, 4)]
    + [f"F{i}_N" for i in (1, 2, 3, 4)]
    + ["cf_cal_N", "cf_true_N", "pose_x_mm", "pose_z_mm", "pose_phi_rad",
       "phase", "quality"]
    + [f"dT{i}_Nps" for i in (1, 2, 3, 4)]
    + ["P_Nps"]
    + [f"Q{i}" for i in (1, 2, 3, 4)]
    + [f"R{i}_Nps2" for i in (1, 2, 3, 4)]
)

_FLOAT_COLUMNS = [c for c in TRACE_COLUMNS if c != "phase"]


def make_row(t, commanded, frame, cf_cal, pose, phase, quality, features) -> dict:
    row = {"t_s": float(t), "cf_cal_N": float(cf_cal),
           "cf_true_N": float(frame.ground_truth_CF),
           "pose_x_mm": float(pose.x), "pose_z_mm": float(pose.z),
           "pose_phi_rad": float(pose.phi), "phase": str(phase),
           "quality": float(quality), "P_Nps": float(features.P)}
    for i in range(4):
        row[f"cmd_L{i + 1}_mm"] = float(commanded[i])
        row[f"T_true{i + 1}_N"] = float(frame.T_true[i])
        row[f"T_meas{i + 1}_N"] = float(frame.T_meas[i])
        row[f"F{i + 1}_N"] = float(frame.loadcell_F[i])
        row[f"dT{i + 1}_Nps"] = float(features.dT[i])
        row[f"Q{i + 1}"] = float(features.Q[i])
        row[f"R{i + 1}_Nps2"] = float(features.R[i])
    return row


def write_trace(path: str | Path, rows: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([repr(row[c]) if c != "phase" else row[c]
                             for c in TRACE_COLUMNS])
    return path


def read_trace(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {c: (raw[c] if c == "phase" else float(raw[c]))
                   for c in TRACE_COLUMNS}
            rows.append(row)
    return rows


def write_summary(path: str | Path, summary: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ----------------------------------------------------------------------
# summary builders (pure functions of the rows)

def _baseline_tensions(rows) -> np.ndarray:
    base = [r for r in rows if r["phase"] == "Baseline"]
    if not base:
        raise InsufficientDataError("trace holds no baseline rows")
    return np.array([[r[f"T_meas{i}_N"] for i in (1, 2, 3, 4)] for r in base]
                    ).mean(axis=0)


def _commanded_changed(rows, idx) -> bool:
    if idx == 0:
        return False
    return any(rows[idx][f"cmd_L{i}_mm"] != rows[idx - 1][f"cmd_L{i}_mm"]
               for i in (1, 2, 3, 4))


def summarize_sense(rows, plateau_fraction: float = 0.95,
                    residual_window_s: float = 1.0) -> dict:
    """Force-sensing run: loaded-plateau underestimate ratio and post-cycle
    tension residuals."""
    T0 = _baseline_tensions(rows)
    cf_true = np.array([r["cf_true_N"] for r in rows])
    cf_cal = np.array([r["cf_cal_N"] for r in rows])
    cf_max = float(cf_true.max())
    plateau = cf_true >= plateau_fraction * cf_max
    if not plateau.any():
        raise InsufficientDataError("no loaded plateau found")
    ratio = float(np.mean(1.0 - cf_cal[plateau] / cf_true[plateau]))

    t_end = rows[-1]["t_s"]
    tail = [r for r in rows if r["t_s"] > t_end - residual_window_s]
    tail_mean = np.array([[r[f"T_meas{i}_N"] for i in (1, 2, 3, 4)]
                          for r in tail]).mean(axis=0)
    residual = float(np.max(np.abs(tail_mean - T0)))
    return {
        "samples": len(rows),
        "cf_true_max_N": cf_max,
        "plateau_samples": int(plateau.sum()),
        "underestimate_ratio": ratio,
        "residual_max_N": residual,
        "cf_err_max_N": float(np.max(np.abs(cf_cal - cf_true))),
        "baseline_T0_N": [float(v) for v in T0],
    }


def _split_points(rows) -> list[dict]:
    """Recover per-scan-point segments from the phase column."""
    points = []
    current = None
    prev_phase = None
    for idx, row in enumerate(rows):
        phase = row["phase"]
        if phase == "Approach" and prev_phase not in ("Approach", "Hold",
                                                      "BackStep", "Sweep"):
            current = {"start": idx, "detect": None, "backsteps": 0,
                       "sweep_steps": 0, "last_backstep": None,
                       "last_sweep": None}
            points.append(current)
        if current is not None:
            if phase == "Hold" and current["detect"] is None:
                current["detect"] = idx
            elif phase == "BackStep":
                if _commanded_changed(rows, idx):
                    current["backsteps"] += 1
                current["last_backstep"] = idx
            elif phase == "Sweep":
                if _commanded_changed(rows, idx):
                    current["sweep_steps"] += 1
                current["last_sweep"] = idx
        prev_phase = phase
    return points


def summarize_scan(rows) -> dict:
    """Scan run: per-point detected/final forces, back-step counts, quality."""
    segments = _split_points(rows)
    points = []
    for seg in segments:
        if seg["detect"] is None or seg["last_backstep"] is None:
            continue
        det = rows[seg["detect"]]
        fin = rows[seg["last_backstep"]]
        points.append({
            "detected_cf_true_N": det["cf_true_N"],
            "detected_t_s": det["t_s"],
            "backstep_count": seg["backsteps"],
            "final_cf_true_N": fin["cf_true_N"],
            "quality_at_acquisition": fin["quality"],
            "samples": seg["last_backstep"] - seg["start"] + 1,
        })
    cf_true = np.array([r["cf_true_N"] for r in rows])
    summary = {
        "samples": len(rows),
        "points_completed": len(points),
        "cf_true_max_N": float(cf_true.max()) if len(rows) else 0.0,
        "points": points,
    }
    if points:
        summary["detected_cf_true_mean_N"] = float(
            np.mean([p["detected_cf_true_N"] for p in points]))
        summary["final_cf_true_mean_N"] = float(
            np.mean([p["final_cf_true_N"] for p in points]))
        summary["backstep_count_mean"] = float(
            np.mean([p["backstep_count"] for p in points]))
        summary["quality_mean"] = float(
            np.mean([p["quality_at_acquisition"] for p in points]))
    last = segments[-1] if segments else None
    if last is not None and last["last_sweep"] is not None:
        summary["zero_sweep_backsteps"] = last["sweep_steps"]
        summary["zero_sweep_final_cf_N"] = rows[last["last_sweep"]]["cf_true_N"]
    return summary


def summarize_sweep(rows) -> dict:
    """Force sweep: quality-vs-force curve and its maxima, from the settled
    sample before each commanded step."""
    sweep_idx = [i for i, r in enumerate(rows) if r["phase"] == "Sweep"]
    if not sweep_idx:
        raise InsufficientDataError("trace holds no sweep rows")
    settled = []
    for pos, idx in enumerate(sweep_idx):
        nxt = sweep_idx[pos + 1] if pos + 1 < len(sweep_idx) else None
        if nxt is None or _commanded_changed(rows, nxt):
            settled.append((rows[idx]["cf_true_N"], rows[idx]["quality"]))
    cf = np.array([s[0] for s in settled])
    q = np.array([s[1] for s in settled])
    best = int(np.argmax(q))
    maxima = []
    for i in range(len(settled)):
        left = q[i - 1] if i > 0 else -np.inf
        right = q[i + 1] if i + 1 < len(settled) else -np.inf
        if q[i] > left and q[i] >= right and q[i] > 0:
            maxima.append({"cf_true_N": float(cf[i]), "quality": float(q[i])})
    return {
        "samples": len(rows),
        "optimum_cf_N": float(cf[best]),
        "quality_max": float(q[best]),
        "cf_true_max_N": float(cf.max()),
        "local_maxima": maxima,
        "unimodal": len(maxima) <= 1,
    }
