"""Streaming signal pipeline over the four measured tensions: trailing
moving-average smoothing, least-squares first and second derivatives, and the
threshold statistics used for contact detection.

Detection statistics (per sample, all causal):
  P = (dT1 + dT2) - (dT3 + dT4)            front/rear first-derivative split
  Q_n = dT_n(t) / dT_n(t - t0)             first-derivative increase ratio
  R_n = d2T_n(t) - d2T_n(t - t1)           second-derivative increase

First-derivative mode fires when every loaded-group dT exceeds its threshold
for `persistence` consecutive samples; second-derivative mode additionally
requires |P|, Q and R above their thresholds, which rejects the tension
transients that lateral (2 DoF) motion produces without any contact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError

MODE_FIRST = "first-derivative"
MODE_SECOND = "second-derivative"

# Threshold floors guard against degenerate (noise-free, motion-free)
# calibration collapsing a threshold to exactly zero.
_THRESHOLD_FLOOR = 1e-9


def moving_average(stream, window: int) -> np.ndarray:
    """Causal trailing mean; the first window-1 samples average the prefix."""
    if window < 1:
        raise ConfigurationError("moving-average window must be >= 1")
    x = np.asarray(stream, dtype=float)
    out = np.empty_like(x)
    csum = np.cumsum(x, axis=0)
    n = x.shape[0]
    for k in range(n):
        if k < window:
            out[k] = csum[k] / (k + 1)
        else:
            out[k] = (csum[k] - csum[k - window]) / window
    return out


def _slope_coeffs(n: int, dt: float) -> np.ndarray:
    """OLS slope weights for n uniformly spaced samples."""
    t = np.arange(n) * dt
    t = t - t.mean()
    return t / np.dot(t, t)


def ls_gradient(stream, window: int, dt: float) -> np.ndarray:
    """Trailing least-squares slope, exact on linear signals.

    Units: input per second. Samples with fewer than two points of history
    report zero slope.
    """
    if window < 2:
        raise ConfigurationError("gradient window must be >= 2")
    x = np.asarray(stream, dtype=float)
    out = np.zeros_like(x)
    coeffs = {n: _slope_coeffs(n, dt) for n in range(2, window + 1)}
    for k in range(1, x.shape[0]):
        n = min(k + 1, window)
        c = coeffs[n]
        seg = x[k - n + 1:k + 1]
        out[k] = c @ seg if x.ndim == 1 else seg.T @ c
    return out


def second_derivative(dT_stream, window: int, dt: float) -> np.ndarray:
    """Least-squares slope of the first-derivative stream (exact on
    quadratics of the original signal once windows are filled)."""
    return ls_gradient(dT_stream, window, dt)


def compute_P(dT: np.ndarray) -> float:
    """Front-pair minus rear-pair first-derivative sum."""
    return float(dT[0] + dT[1] - dT[2] - dT[3])


def compute_Q(dT_now: np.ndarray, dT_ref: np.ndarray, epsilon: float) -> np.ndarray:
    """Element-wise derivative ratio with the denominator clamped away from
    zero (magnitude floor epsilon, sign preserved; sign(0) counts positive)."""
    ref = np.asarray(dT_ref, dtype=float)
    sign = np.where(ref < 0, -1.0, 1.0)
    denom = sign * np.maximum(np.abs(ref), epsilon)
    return np.asarray(dT_now, dtype=float) / denom


def compute_R(d2T_now: np.ndarray, d2T_ref: np.ndarray) -> np.ndarray:
    """Element-wise second-derivative increase over the lagged reference."""
    return np.asarray(d2T_now, dtype=float) - np.asarray(d2T_ref, dtype=float)


@dataclass(frozen=True)
class DetectorConfig:
    ma_window: int = 50
    grad_window: int = 50
    lag_t0: int = 30
    lag_t1: int = 30
    dt_threshold: float = 0.08
    p_threshold: float = 0.45
    q_threshold: float = 4.0
    r_threshold: float = 0.5
    mode: str = MODE_FIRST
    persistence: int = 3
    loaded_group: tuple[int, ...] = (0, 1)  # tendon indices, zero-based
    q_epsilon: float = 0.02
    dt: float = 0.01

    def __post_init__(self):
        if self.ma_window < 2 or self.grad_window < 2:
            raise ConfigurationError("detector windows must be >= 2")
        if self.lag_t0 < 1 or self.lag_t1 < 1:
            raise ConfigurationError("detector lags must be >= 1")
        for name in ("dt_threshold", "p_threshold", "q_threshold", "r_threshold"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.mode not in (MODE_FIRST, MODE_SECOND):
            raise ConfigurationError(f"unknown detector mode {self.mode!r}")
        if self.persistence < 1:
            raise ConfigurationError("persistence must be >= 1")
        if not self.loaded_group:
            raise ConfigurationError("loaded group cannot be empty")

    @classmethod
    def default_first_derivative(cls) -> "DetectorConfig":
        return cls(mode=MODE_FIRST)

    @classmethod
    def default_second_derivative(cls) -> "DetectorConfig":
        return cls(mode=MODE_SECOND, ma_window=90, grad_window=90,
                   lag_t0=150, lag_t1=150)


@dataclass(frozen=True)
class DetectionFeatures:
    t: float
    T_smooth: np.ndarray
    dT: np.ndarray
    d2T: np.ndarray
    P: float
    Q: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class DetectionEvent:
    t_detect: float
    trigger: dict
    cf_at_detect: float
    tendon_snapshot: np.ndarray


@dataclass
class FeatureStats:
    """Running maxima of the firing statistics, for threshold calibration."""

    max_group_dT: float = 0.0
    max_abs_P: float = 0.0
    max_group_Q: float = 0.0
    max_group_R: float = 0.0

    def update(self, features: DetectionFeatures, group) -> None:
        g = list(group)
        self.max_group_dT = max(self.max_group_dT, float(np.min(features.dT[g])))
        self.max_abs_P = max(self.max_abs_P, abs(features.P))
        self.max_group_Q = max(self.max_group_Q, float(np.min(features.Q[g])))
        self.max_group_R = max(self.max_group_R, float(np.min(features.R[g])))

    def merge(self, other: "FeatureStats") -> None:
        self.max_group_dT = max(self.max_group_dT, other.max_group_dT)
        self.max_abs_P = max(self.max_abs_P, other.max_abs_P)
        self.max_group_Q = max(self.max_group_Q, other.max_group_Q)
        self.max_group_R = max(self.max_group_R, other.max_group_R)


def thresholds_from_stats(cfg: DetectorConfig, stats: FeatureStats,
                          safety_factor: float = 1.5) -> DetectorConfig:
    """Thresholds at safety_factor times the worst no-contact statistic."""
    return replace(
        cfg,
        dt_threshold=max(safety_factor * stats.max_group_dT, _THRESHOLD_FLOOR),
        p_threshold=max(safety_factor * stats.max_abs_P, _THRESHOLD_FLOOR),
        q_threshold=max(safety_factor * stats.max_group_Q, _THRESHOLD_FLOOR),
        r_threshold=max(safety_factor * stats.max_group_R, _THRESHOLD_FLOOR),
    )


class ContactDetector:
    """Stateful streaming detector; feed one 4-tension sample per tick.

    The detector only fires while armed, and at most once per arming (one
    event per approach). The Q and R lag references are floored at zero
    before use: a slope or curvature that has collapsed or reversed since the
    reference time counts as quiescent, not as an inverted baseline.
    """

    def __init__(self, cfg: DetectorConfig):
        self.cfg = cfg
        self._raw: list[np.ndarray] = []
        self._smooth: list[np.ndarray] = []
        self._dT: list[np.ndarray] = []
        self._d2T: list[np.ndarray] = []
        self._raw_sum = np.zeros(4)
        self._slope_coeffs = {n: _slope_coeffs(n, cfg.dt)
                              for n in range(2, max(cfg.grad_window, 2) + 1)}
        self._armed = False
        self._fired = False
        self._consecutive = 0
        # prefix-window derivative estimates are noise-amplified; suppress
        # firing until every filter stage and lag reference is filled
        self.warmup_samples = (cfg.ma_window + 2 * cfg.grad_window
                               + max(cfg.lag_t0, cfg.lag_t1))

    @property
    def armed(self) -> bool:
        return self._armed

    @property
    def ready(self) -> bool:
        return len(self._raw) >= self.warmup_samples

    def arm(self) -> None:
        """Enable firing for a new approach phase."""
        self._armed = True
        self._fired = False
        self._consecutive = 0

    def disarm(self) -> None:
        self._armed = False
        self._consecutive = 0

    def _trailing_slope(self, history: list[np.ndarray]) -> np.ndarray:
        k = len(history) - 1
        if k < 1:
            return np.zeros(4)
        n = min(k + 1, self.cfg.grad_window)
        seg = np.stack(history[-n:])
        return seg.T @ self._slope_coeffs[n]

    def update(self, t: float, T_meas: np.ndarray,
               cf_estimate: float = 0.0):
        """Process one sample; returns (features, event-or-None)."""
        cfg = self.cfg
        x = np.asarray(T_meas, dtype=float)
        self._raw.append(x)
        self._raw_sum += x
        if len(self._raw) > cfg.ma_window:
            self._raw_sum -= self._raw[len(self._raw) - cfg.ma_window - 1]
            smooth = self._raw_sum / cfg.ma_window
        else:
            smooth = self._raw_sum / len(self._raw)
        self._smooth.append(smooth)
        dT = self._trailing_slope(self._smooth)
        self._dT.append(dT)
        d2T = self._trailing_slope(self._dT)
        self._d2T.append(d2T)

        # reference slopes/curvatures are floored at zero: a reference that
        # has collapsed or gone negative counts as quiescent, so decaying
        # transients from earlier motion cannot masquerade as an increase
        k = len(self._raw) - 1
        ref_dT = self._dT[max(0, k - cfg.lag_t0)]
        ref_d2T = self._d2T[max(0, k - cfg.lag_t1)]
        Q = compute_Q(dT, np.maximum(ref_dT, 0.0), cfg.q_epsilon)
        R = compute_R(d2T, np.maximum(ref_d2T, 0.0))
        features = DetectionFeatures(t=t, T_smooth=smooth, dT=dT, d2T=d2T,
                                     P=compute_P(dT), Q=Q, R=R)
        return features, self._check(features, cf_estimate)

    def _check(self, f: DetectionFeatures, cf_estimate: float):
        if not self._armed or self._fired or not self.ready:
            return None
        cfg = self.cfg
        g = list(cfg.loaded_group)
        if cfg.mode == MODE_FIRST:
            hit = bool(np.min(f.dT[g]) > cfg.dt_threshold)
            trigger = {"dT": float(np.min(f.dT[g]))}
        else:
            hit = (abs(f.P) > cfg.p_threshold
                   and bool(np.min(f.Q[g]) > cfg.q_threshold)
                   and bool(np.min(f.R[g]) > cfg.r_threshold))
            trigger = {"P": f.P, "Q": float(np.min(f.Q[g])),
                       "R": float(np.min(f.R[g]))}
        self._consecutive = self._consecutive + 1 if hit else 0
        if self._consecutive >= cfg.persistence:
            self._fired = True
            self._armed = False
            return DetectionEvent(t_detect=f.t, trigger=trigger,
                                  cf_at_detect=cf_estimate,
                                  tendon_snapshot=f.T_smooth.copy())
        return None
