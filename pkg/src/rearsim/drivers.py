"""Driver response models: brake-onset timing for the glance-based model
and the brake-light reaction model, and the jerk-ramp braking profile."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelUndefinedError, ValidationError

REACTION_BIN_STEP = 0.2    # s
REACTION_BIN_FIRST = 0.2   # s, lowest bin center
REACTION_BIN_LAST = 5.0    # s, distribution is cut here
DEFAULT_REACTION_M = 1.275   # s, mean of the underlying reaction time
DEFAULT_REACTION_V = 0.36    # s^2, its variance (0.6^2)


@dataclass(frozen=True)
class CbmConfig:
    """Parameters of the glance-based crash-causation model."""

    inv_tau_threshold: float = 0.2   # 1/s, glance anchor level
    response_delay: float = 0.5      # s, look-back to brake onset
    jerk_mean: float = -23.04        # m/s^3, brake ramp-up
    jerk_sd: float = 0.74            # m/s^3, measured spread (not sampled)
    no_response_fraction: float = 0.10

    def __post_init__(self):
        if self.response_delay < 0:
            raise ValidationError("response_delay must be >= 0")
        if self.jerk_mean >= 0:
            raise ValidationError("jerk_mean must be negative")
        if not 0 <= self.no_response_fraction < 1:
            raise ValidationError("no_response_fraction must be in [0, 1)")
        if self.inv_tau_threshold <= 0:
            raise ValidationError("inv_tau_threshold must be positive")


@dataclass(frozen=True)
class BrakeProfile:
    """Jerk ramp to a plateau: decel(t) = clamp(|jerk|*(t-onset), 0, d_max).

    onset may be math.inf for a driver who never responds.
    """

    onset: float   # s
    jerk: float    # m/s^3, negative
    d_max: float   # m/s^2, magnitude of the plateau

    def __post_init__(self):
        if self.d_max <= 0:
            raise ValidationError("d_max must be positive")
        if self.jerk >= 0:
            raise ValidationError("jerk must be negative")


def brake_deceleration(profile: BrakeProfile, t):
    """Deceleration magnitude at time t (scalar or array)."""
    t = np.asarray(t, dtype=float)
    if math.isinf(profile.onset):
        out = np.zeros_like(t)
    else:
        out = np.clip(abs(profile.jerk) * (t - profile.onset), 0.0, profile.d_max)
    return float(out) if out.ndim == 0 else out


def cbm_onset(anchor: float | None, overshoot: float, cfg: CbmConfig) -> float:
    """Brake onset = glance anchor + glance overshoot + response delay.
    An overshoot of 0 encodes the attentive (eyes on road) driver."""
    if anchor is None:
        raise ModelUndefinedError(
            "no looming anchor: route this case to the no-response path")
    if overshoot < 0:
        raise ValidationError("overshoot must be >= 0")
    return anchor + overshoot + cfg.response_delay


def blom_onset(brake_light_onset: float | None, t_react: float) -> float:
    """Brake onset = lead brake-light onset + sampled reaction time."""
    if brake_light_onset is None:
        raise ModelUndefinedError(
            "brake-light model is undefined when the lead vehicle never "
            "brakes or stands still for the whole event")
    return brake_light_onset + t_react


@dataclass(eq=False)
class ReactionTimeDistribution:
    """Log-normal reaction time discretized on 0.2 s bins up to 5 s."""

    centers: np.ndarray  # s
    probs: np.ndarray    # sum to 1 after tail truncation
    m: float
    v: float
    mu: float
    sigma: float


def _lognorm_cdf(x: float, mu: float, sigma: float) -> float:
    if x <= 0:
        return 0.0
    return 0.5 * (1.0 + math.erf((math.log(x) - mu) / (sigma * math.sqrt(2.0))))


def discretize_reaction_time(m: float = DEFAULT_REACTION_M,
                             v: float = DEFAULT_REACTION_V) -> ReactionTimeDistribution:
    """Discretize the log-normal with mean m and variance v into 25 bins of
    0.2 s (centers 0.2..5.0). Bin mass is the density integrated over
    center +/- 0.1 s; the last bin is truncated at 5 s, and everything cut
    away is recovered by renormalization."""
    if m <= 0 or v <= 0:
        raise ValidationError("reaction-time m and v must be positive")
    mu = math.log(m * m / math.sqrt(v + m * m))
    sigma = math.sqrt(math.log(v / (m * m) + 1.0))

    n = int(round((REACTION_BIN_LAST - REACTION_BIN_FIRST) / REACTION_BIN_STEP)) + 1
    centers = REACTION_BIN_FIRST + REACTION_BIN_STEP * np.arange(n)
    half = REACTION_BIN_STEP / 2.0
    masses = np.empty(n)
    for i, c in enumerate(centers):
        lo = c - half
        hi = min(c + half, REACTION_BIN_LAST)
        masses[i] = _lognorm_cdf(hi, mu, sigma) - _lognorm_cdf(lo, mu, sigma)
    masses /= masses.sum()
    return ReactionTimeDistribution(centers, masses, m, v, mu, sigma)
