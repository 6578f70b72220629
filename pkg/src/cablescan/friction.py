"""Capstan friction with stiction memory between the tube-side and
sensor-side cable segments.

The tendons change direction once over a PTFE-lined corner between the load
cells and the scaffold. Transmission across the corner follows the capstan
law: while the cable slips toward the sensor the sensed tension is attenuated
by a = exp(-mu*beta); while it slips the other way it is amplified by
b = exp(+mu*beta); in between, static friction holds the sensed value at its
last slip level. A small additive stiction band widens the stick region.

The plant applies this transmission to the tension *deviation* from the
settled pretensioned state (the tensions at which the interface was last
relaxed), which reproduces the observed behaviour: deviations transmit at the
attenuated ratio while loading, and a residual offset equal to the stiction
band is left behind after a full load/unload cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

# Attenuation calibrated so exp(-mu*beta) = 0.853 for a single 90 degree
# wrap, matching the observed ~14.7% low bias of the tension-based estimate.
DEFAULT_MU = 0.10119
DEFAULT_WRAP_ANGLE = np.pi / 2.0
DEFAULT_STICTION_BAND = 0.02


@dataclass(frozen=True)
class FrictionModel:
    """Capstan coefficient mu, wrap angle beta (rad), stiction band (N)."""

    mu: float = DEFAULT_MU
    wrap_angle_rad: float = DEFAULT_WRAP_ANGLE
    stiction_band_N: float = DEFAULT_STICTION_BAND

    def __post_init__(self):
        if self.mu < 0 or self.wrap_angle_rad < 0 or self.stiction_band_N < 0:
            raise ConfigurationError("friction parameters must be nonnegative")

    @property
    def attenuation(self) -> float:
        """exp(-mu*beta): tension ratio when slipping toward the sensor."""
        return float(np.exp(-self.mu * self.wrap_angle_rad))

    @property
    def amplification(self) -> float:
        """exp(+mu*beta): tension ratio when slipping away from the sensor."""
        return float(np.exp(self.mu * self.wrap_angle_rad))

    @classmethod
    def off(cls) -> "FrictionModel":
        return cls(mu=0.0, wrap_angle_rad=0.0, stiction_band_N=0.0)


def apply_capstan_friction(T_tube: float, slip_direction: int,
                           fm: FrictionModel, memory: float):
    """One stick/slip update of the sensor-side tension.

    slip_direction: +1 when the cable slips toward the sensor (tube tension
    rising), -1 when it slips away, 0 for no relative motion. The candidate
    sensed tension is T_tube * exp(-mu*beta) (toward) or T_tube * exp(+mu*beta)
    (away); when the candidate stays within the stiction band of the held
    value the interface sticks and the memory is unchanged.

    Returns (T_sensor, new_memory).
    """
    if T_tube < 0:
        raise ConfigurationError("tube-side tension cannot be negative")
    if slip_direction > 0:
        candidate = T_tube * fm.attenuation
    elif slip_direction < 0:
        candidate = T_tube * fm.amplification
    else:
        return memory, memory
    if abs(candidate - memory) <= fm.stiction_band_N:
        return memory, memory
    return candidate, candidate


def transmit_deviation(deviation: np.ndarray, memory: np.ndarray,
                       fm: FrictionModel) -> np.ndarray:
    """Vectorized play operator mapping tube-side tension deviations to
    sensor-side deviations.

    The admissible sensed band is [min(a*d, b*d - s), max(a*d, b*d + s)]
    (a = attenuation, b = amplification, s = stiction band); the memory
    sticks while inside and is clipped to the violated edge otherwise. Both
    envelopes are continuous in d, giving:

    * loading well past the band tracks the attenuated virgin curve a*d
      exactly (the transmission-loss plateau);
    * small deviations (|b*d| < s) are swallowed whole (stiction dead band);
    * unloading rides b*d +- s and parks at +-s when the load is removed
      (the post-cycle hysteresis residual).

    Returns the new memory (= sensed deviation).
    """
    d = np.asarray(deviation, dtype=float)
    m = np.asarray(memory, dtype=float)
    a = fm.attenuation
    b = fm.amplification
    s = fm.stiction_band_N
    lo = np.minimum(a * d, b * d - s)
    hi = np.maximum(a * d, b * d + s)
    return np.minimum(np.maximum(m, lo), hi)
