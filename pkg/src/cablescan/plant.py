"""Quasi-static plant: motor quantization, elastic cables with a preset
tension, capstan/stiction transmission to the load cells, a linear-spring
tissue (or test-stage pad), and seeded sensor noise.

Each tick solves the pose at which the net planar wrench vanishes, given the
commanded cable lengths: cable tensions are elastic in the geometric-length
error, T_i = max(0, k_cable * (L_geom,i(q) - L_cmd,i) + T0_i), and the tissue
pushes back along -contact_axis with k_tissue times the tip indentation. The
load-cell path applies the capstan transmission to the tension deviation from
the settled pretensioned state and adds Gaussian noise on the cell reading.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, SolverError
from .friction import FrictionModel, transmit_deviation
from .geometry import (
    ScaffoldGeometry,
    TubePose,
    cable_lengths_unchecked,
    lengths_and_structure,
)
from .statics import LOADCELL_WRAP_FACTOR


@dataclass(frozen=True)
class MotorModel:
    counts_per_rev: int = 3000
    gear_ratio: int = 25
    spool_diameter_mm: float = 10.0

    def __post_init__(self):
        if self.counts_per_rev <= 0 or self.gear_ratio <= 0 \
                or self.spool_diameter_mm <= 0:
            raise ConfigurationError("motor constants must be positive")

    @property
    def length_resolution_mm(self) -> float:
        """Tendon length per encoder count: pi*d / (counts * gear)."""
        return np.pi * self.spool_diameter_mm / (self.counts_per_rev
                                                 * self.gear_ratio)


def quantize_motor(target_length_mm, model: MotorModel):
    """Round a commanded length to the nearest motor count."""
    res = model.length_resolution_mm
    target = np.asarray(target_length_mm, dtype=float)
    if np.any(target < 0):
        raise ConfigurationError("commanded length cannot be negative")
    out = np.round(target / res) * res
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TissueModel:
    """Linear-spring contact surface normal to the contact axis."""

    surface_z_mm: float = 0.5
    stiffness_N_per_mm: float = 0.5
    kind: str = "soft-tissue"

    def __post_init__(self):
        if self.stiffness_N_per_mm <= 0:
            raise ConfigurationError("tissue stiffness must be positive")
        if self.kind not in ("soft-tissue", "rigid"):
            raise ConfigurationError(f"unknown tissue kind {self.kind!r}")
        if self.kind == "rigid" and self.stiffness_N_per_mm < 100.0:
            raise ConfigurationError("rigid surfaces require >= 100 N/mm")


def tissue_reaction(tip_z: float, tm: TissueModel,
                    surface_z: float | None = None) -> float:
    """Reaction magnitude (N, along -contact_axis); zero above the surface."""
    z_s = tm.surface_z_mm if surface_z is None else surface_z
    return tm.stiffness_N_per_mm * max(0.0, tip_z - z_s)


@dataclass(frozen=True)
class StageProfile:
    """Repeated advance/hold/retract/hold cycles of the test stage."""

    amplitude_mm: float = 2.0
    speed_mm_s: float = 2.0
    hold_s: float = 1.0
    cycles: int = 10

    def __post_init__(self):
        if self.amplitude_mm <= 0 or self.speed_mm_s <= 0 or self.cycles < 1:
            raise ConfigurationError("stage profile values must be positive")
        if self.hold_s < 0:
            raise ConfigurationError("stage hold time cannot be negative")

    @property
    def cycle_duration_s(self) -> float:
        return 2.0 * self.amplitude_mm / self.speed_mm_s + 2.0 * self.hold_s

    @property
    def total_duration_s(self) -> float:
        return self.cycles * self.cycle_duration_s


def linear_stage_profile(t: float, profile: StageProfile) -> float:
    """Stage displacement (mm) at time t >= 0."""
    if t < 0:
        raise ConfigurationError("time must be nonnegative")
    if t >= profile.total_duration_s:
        return 0.0
    tau = t % profile.cycle_duration_s
    t_adv = profile.amplitude_mm / profile.speed_mm_s
    if tau < t_adv:
        return profile.speed_mm_s * tau
    if tau < t_adv + profile.hold_s:
        return profile.amplitude_mm
    if tau < 2.0 * t_adv + profile.hold_s:
        return profile.amplitude_mm - profile.speed_mm_s * (tau - t_adv
                                                            - profile.hold_s)
    return 0.0


@dataclass(frozen=True)
class CableModel:
    stiffness_N_per_mm: float = 20.0

    def __post_init__(self):
        if self.stiffness_N_per_mm <= 0:
            raise ConfigurationError("cable stiffness must be positive")


@dataclass(frozen=True)
class SensorModel:
    noise_sigma_N: float = 0.005
    gain_error_pct: float = 0.0  # per-channel fixed spread, 0 disables

    def __post_init__(self):
        if self.noise_sigma_N < 0 or self.gain_error_pct < 0:
            raise ConfigurationError("sensor model values must be nonnegative")


@dataclass
class PlantState:
    pose: TubePose
    commanded_lengths: np.ndarray
    friction_memory: np.ndarray  # sensor-side tension deviation per tendon, N
    friction_ref: np.ndarray     # tensions at which the interface last relaxed
    indentation_mm: float
    time_s: float
    rng: np.random.Generator
    loadcell_gains: np.ndarray


@dataclass(frozen=True)
class SensorFrame:
    t: float
    loadcell_F: np.ndarray
    ground_truth_CF: float
    T_meas: np.ndarray
    T_true: np.ndarray
    slack_warning: bool


class Plant:
    """Deterministic quasi-static simulator for one instrument."""

    WRENCH_TOL = 1e-9
    MAX_ITER = 200

    def __init__(self, geom: ScaffoldGeometry,
                 cable: CableModel | None = None,
                 friction: FrictionModel | None = None,
                 tissue: TissueModel | None = None,
                 sensor: SensorModel | None = None,
                 motor: MotorModel | None = None,
                 preset_tension_N: float = 2.0,
                 min_tension_N: float = 0.5):
        if preset_tension_N <= 0 or min_tension_N <= 0:
            raise ConfigurationError("preset and minimum tension must be positive")
        self.geom = geom
        self.cable = cable or CableModel()
        self.friction = friction if friction is not None else FrictionModel()
        self.tissue = tissue
        self.sensor = sensor or SensorModel()
        self.motor = motor or MotorModel()
        self.preset = np.full(4, float(preset_tension_N))
        self.min_tension = float(min_tension_N)

    # ------------------------------------------------------------------
    # state handling

    def init_state(self, seed: int, pose: TubePose | None = None) -> PlantState:
        """Settle the plant at the requested pose and take the settled
        tensions as the friction interface's relaxed reference (the state the
        pretensioning procedure leaves behind)."""
        pose = pose or TubePose()
        rng = np.random.default_rng(seed)
        gains = np.ones(4)
        if self.sensor.gain_error_pct > 0:
            gains = 1.0 + rng.uniform(-1.0, 1.0, 4) * self.sensor.gain_error_pct / 100.0
        commanded = quantize_motor(cable_lengths_unchecked(pose, self.geom),
                                   self.motor)
        eq_pose, _, T_ref, _ = self._solve_pose(pose, commanded, None)
        return PlantState(pose=eq_pose, commanded_lengths=commanded,
                          friction_memory=np.zeros(4), friction_ref=T_ref,
                          indentation_mm=0.0, time_s=0.0, rng=rng,
                          loadcell_gains=gains)

    # ------------------------------------------------------------------
    # physics

    def _tissue_force(self, pose: TubePose, surface_z: float | None) -> float:
        if self.tissue is None:
            return 0.0
        return tissue_reaction(pose.z, self.tissue, surface_z)

    def _residual(self, pose: TubePose, commanded: np.ndarray,
                  surface_z: float | None):
        lengths, W = lengths_and_structure(pose, self.geom)
        T = np.maximum(0.0, self.cable.stiffness_N_per_mm * (lengths - commanded)
                       + self.preset)
        f_t = self._tissue_force(pose, surface_z)
        axis = self.geom.contact_axis
        wrench = W @ T + np.array([-axis[0] * f_t, -axis[1] * f_t, 0.0])
        return wrench, W, T, f_t

    def _jacobian(self, W: np.ndarray, T: np.ndarray, in_contact: bool):
        taut = (T > 0).astype(float)
        J = -self.cable.stiffness_N_per_mm * (W * taut) @ W.T
        if in_contact and self.tissue is not None:
            axis = self.geom.contact_axis
            J -= self.tissue.stiffness_N_per_mm * np.outer(
                np.array([axis[0], axis[1], 0.0]), np.array([0.0, 1.0, 0.0]))
        return J

    def _solve_pose(self, start: TubePose, commanded: np.ndarray,
                    surface_z: float | None) -> tuple[TubePose, np.ndarray,
                                                      np.ndarray, float]:
        q = np.array([start.x, start.z, start.phi])
        pose = start
        wrench, W, T, f_t = self._residual(pose, commanded, surface_z)
        for _ in range(self.MAX_ITER):
            err = np.max(np.abs(wrench))
            if err < self.WRENCH_TOL:
                return pose, W, T, f_t
            J = self._jacobian(W, T, f_t > 0.0)
            try:
                dq = np.linalg.solve(J, -wrench)
            except np.linalg.LinAlgError:
                # slack cables can leave a DoF momentarily unconstrained
                # (e.g. pitch with only the front pair taut); damp the step
                lam = 1e-6 * max(1.0, np.abs(J).max())
                dq = np.linalg.solve(J.T @ J + lam * np.eye(3), -J.T @ wrench)
            step = 1.0
            for _ in range(12):
                trial = TubePose(*(q + step * dq))
                t_wrench, t_W, t_T, t_ft = self._residual(trial, commanded,
                                                          surface_z)
                if np.max(np.abs(t_wrench)) < err:
                    q = q + step * dq
                    pose, wrench, W, T, f_t = trial, t_wrench, t_W, t_T, t_ft
                    break
                step *= 0.5
            else:
                raise SolverError("equilibrium line search stalled")
        raise SolverError(f"no equilibrium within {self.MAX_ITER} iterations")

    # ------------------------------------------------------------------

    def step(self, state: PlantState, commanded_lengths: np.ndarray, dt: float,
             surface_z: float | None = None) -> tuple[PlantState, SensorFrame]:
        """Advance one tick: settle the pose, transmit tensions through the
        friction stage, read the (noisy) load cells."""
        if np.any(np.asarray(commanded_lengths) <= 0):
            raise ConfigurationError("commanded lengths must be positive")
        commanded = quantize_motor(np.asarray(commanded_lengths, dtype=float),
                                   self.motor)
        pose, _, T_true, f_t = self._solve_pose(state.pose, commanded, surface_z)

        deviation = T_true - state.friction_ref
        memory = transmit_deviation(deviation, state.friction_memory,
                                    self.friction)
        T_sensor = np.maximum(0.0, state.friction_ref + memory)

        forces = T_sensor * LOADCELL_WRAP_FACTOR * state.loadcell_gains
        if self.sensor.noise_sigma_N > 0:
            forces = forces + state.rng.normal(0.0, self.sensor.noise_sigma_N, 4)
        forces = np.maximum(0.0, forces)
        T_meas = forces / LOADCELL_WRAP_FACTOR

        t_next = state.time_s + dt
        indentation = 0.0
        if self.tissue is not None:
            z_s = self.tissue.surface_z_mm if surface_z is None else surface_z
            indentation = max(0.0, pose.z - z_s)
        frame = SensorFrame(t=t_next, loadcell_F=forces, ground_truth_CF=f_t,
                            T_meas=T_meas, T_true=T_true,
                            slack_warning=bool(np.any(T_true < self.min_tension)))
        new_state = replace(state, pose=pose, commanded_lengths=commanded,
                            friction_memory=memory, indentation_mm=indentation,
                            time_s=t_next)
        return new_state, frame
