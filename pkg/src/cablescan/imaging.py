"""Scalar stand-in for endomicroscope image quality as a function of the
probe-tissue contact force.

Quality peaks at the optimum force and falls off symmetrically on a Gaussian
profile; with ``contact_required`` no image forms at zero force. This
reproduces the qualitative ordering seen experimentally: blurred images well
above the optimum, none without contact, best contrast at the optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class QualityModel:
    f_opt_N: float = 0.05
    width_N: float = 0.10
    contact_required: bool = True

    def __post_init__(self):
        if self.f_opt_N <= 0 or self.width_N <= 0:
            raise ConfigurationError("quality model parameters must be positive")


def image_quality(cf_true, qm: QualityModel):
    """Quality in [0, 1] for a (nonnegative) true contact force in N."""
    cf = np.asarray(cf_true, dtype=float)
    q = np.exp(-(((cf - qm.f_opt_N) / qm.width_N) ** 2))
    if qm.contact_required:
        q = np.where(cf <= 0.0, 0.0, q)
    return float(q) if q.ndim == 0 else q


def quality_trace(cf_samples, qm: QualityModel) -> np.ndarray:
    """Per-sample quality for a ground-truth contact-force trace."""
    return np.asarray(image_quality(np.asarray(cf_samples, dtype=float), qm))
