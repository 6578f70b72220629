"""Tension statics: load-cell conversion, redundant tension distribution and
the tension-based contact force estimate.

Sign convention used throughout: the estimated contact force is positive when
the tissue pushes against the probe, i.e. the reaction on the tube points
along -contact_axis while the tendon tensions rebalance so that
sum(T_i cos theta_i) rises above its no-contact value.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import (
    ConfigurationError,
    InsufficientDataError,
    SensorFaultError,
    WrenchInfeasibleError,
)
from .geometry import ScaffoldGeometry, TendonAngles, TubePose, structure_matrix

# Load-cell wrap geometry: the cable passes over the cell with a symmetric
# 90 degree wrap, so the cell reads F = 2 sin(pi/4) T.
LOADCELL_WRAP_FACTOR = 2.0 * np.sin(np.pi / 4.0)

_EQ_TOL = 1e-9


@dataclass(frozen=True)
class TensionFrame:
    """Timestamped tension sample: tube-side true values and sensor-side
    measured values, N."""

    t: float
    T_true: np.ndarray
    T_meas: np.ndarray


@dataclass(frozen=True)
class Baseline:
    """Preset/baseline tension per tendon, N."""

    T0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "T0", np.asarray(self.T0, dtype=float))
        if self.T0.shape != (4,):
            raise ConfigurationError("baseline must hold 4 tensions")
        if np.any(self.T0 <= 0):
            raise ConfigurationError("baseline tensions must be positive")


@dataclass(frozen=True)
class ForceEstimate:
    cf_cal: float
    per_tendon_contribution: np.ndarray


def tension_from_loadcell(force, wrap_factor: float = LOADCELL_WRAP_FACTOR):
    """Cable tension from a load-cell reading: T = F / (2 sin(pi/4))."""
    force = np.asarray(force, dtype=float)
    if np.any(force < 0):
        raise SensorFaultError("negative load-cell reading")
    result = force / wrap_factor
    return float(result) if result.ndim == 0 else result


def loadcell_from_tension(tension, wrap_factor: float = LOADCELL_WRAP_FACTOR):
    """Inverse of :func:`tension_from_loadcell` (sensor model side)."""
    tension = np.asarray(tension, dtype=float)
    if np.any(tension < 0):
        raise ConfigurationError("tension cannot be negative")
    result = tension * wrap_factor
    return float(result) if result.ndim == 0 else result


def capture_baseline(frames, min_frames: int = 100) -> Baseline:
    """Per-tendon mean of measured tensions over a quiescent window."""
    frames = list(frames)
    if len(frames) < min_frames:
        raise InsufficientDataError(
            f"baseline capture needs >= {min_frames} frames, got {len(frames)}")
    stack = np.stack([f.T_meas for f in frames])
    return Baseline(T0=stack.mean(axis=0))


def _solve_active_set(W: np.ndarray, T0: np.ndarray, b: np.ndarray,
                      t_min: float, active: tuple[int, ...]):
    """Minimize ||T - T0|| with W T = b, T_i = t_min on the active set.
    Returns the candidate or None when the subsystem is inconsistent."""
    free = [i for i in range(4) if i not in active]
    T = np.full(4, t_min)
    rhs = b - W[:, list(active)] @ T[list(active)] if active else b.copy()
    if not free:
        return T if np.max(np.abs(W @ T - b)) < _EQ_TOL else None
    Wf = W[:, free]
    T0f = T0[free]
    gram = Wf @ Wf.T
    resid = rhs - Wf @ T0f
    try:
        nu = np.linalg.solve(gram, resid)
        Tf = T0f + Wf.T @ nu
    except np.linalg.LinAlgError:
        Tf = T0f + np.linalg.pinv(Wf) @ resid
    T[free] = Tf
    if np.max(np.abs(W @ T - b)) >= _EQ_TOL:
        return None
    return T


def distribute_tensions(pose: TubePose, external_wrench: np.ndarray,
                        baseline: Baseline, t_min: float,
                        geom: ScaffoldGeometry) -> np.ndarray:
    """Tension set closest to the baseline that balances the external wrench.

    Solves min ||T - T0||_2 subject to W T + w_ext = 0 and T_i >= t_min by
    exhaustive active-set enumeration (16 candidate sets; exact at this size).
    """
    W = structure_matrix(pose, geom)
    b = -np.asarray(external_wrench, dtype=float)
    T0 = baseline.T0
    best = None
    best_cost = np.inf
    for n_active in range(5):
        for active in combinations(range(4), n_active):
            T = _solve_active_set(W, T0, b, t_min, active)
            if T is None or np.any(T < t_min - 1e-12):
                continue
            cost = float(np.dot(T - T0, T - T0))
            if cost < best_cost - 1e-15:
                best_cost = cost
                best = T
        if best is not None and n_active == 0:
            # interior optimum dominates every bound-constrained candidate
            return best
    if best is None:
        raise WrenchInfeasibleError(
            "no nonnegative tension set balances the requested wrench")
    return best


def project_baseline(W: np.ndarray, T0: np.ndarray, t_min: float) -> np.ndarray:
    """Nearest zero-wrench tension set to T0 for a given structure matrix
    (fast path of :func:`distribute_tensions` for the no-contact case)."""
    try:
        nu = np.linalg.solve(W @ W.T, -W @ T0)
        T = T0 + W.T @ nu
    except np.linalg.LinAlgError:
        T = T0 + np.linalg.pinv(W) @ (-W @ T0)
    if np.all(T >= t_min - 1e-12):
        return T
    # a bound became active; fall back to the exact enumeration
    best = None
    best_cost = np.inf
    for n_active in range(1, 5):
        for active in combinations(range(4), n_active):
            cand = _solve_active_set(W, T0, np.zeros(3), t_min, active)
            if cand is None or np.any(cand < t_min - 1e-12):
                continue
            cost = float(np.dot(cand - T0, cand - T0))
            if cost < best_cost:
                best_cost = cost
                best = cand
    if best is None:
        raise WrenchInfeasibleError("no feasible baseline projection")
    return best


def equilibrium_baseline(pose: TubePose, baseline: Baseline, t_min: float,
                         geom: ScaffoldGeometry) -> np.ndarray:
    """Expected no-contact tensions at a pose: the baseline projected onto the
    zero-wrench equilibrium manifold. Equals the captured baseline at the pose
    where it was captured."""
    return project_baseline(structure_matrix(pose, geom), baseline.T0, t_min)


def estimate_contact_force(T_meas: np.ndarray, baseline: Baseline,
                           angles: TendonAngles) -> ForceEstimate:
    """Contact-force estimate CF = sum_i (T_i - T0_i) cos theta_i."""
    contrib = (np.asarray(T_meas, dtype=float) - baseline.T0) * angles.cos_theta
    return ForceEstimate(cf_cal=float(contrib.sum()),
                         per_tendon_contribution=contrib)
