"""Distribution comparison statistics, percentile-uniformity assessment,
injury-risk integration, and crash-avoidance rates."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .engine import OutcomeMatrix
from .errors import ValidationError
from .outcome import DeltaVDistribution, align_bins

BELOW_MIN = "below-min"
ABOVE_MAX = "above-max"


@dataclass(frozen=True)
class ComparisonStats:
    """Summary statistics between two binned delta-v distributions."""

    abs_mean_diff: float           # km/h, |mean(p) - mean(q)|
    mean_abs_diff: float           # mean per-bin |p - q|
    weighted_mean_abs_diff: float  # per-bin |p - q| weighted by bin mass
    max_abs_diff: float
    tv_distance: float             # 0.5 * L1
    kl_divergence: float           # nats, after half-count smoothing
    ks_distance: float             # max CDF gap


def compare(p: DeltaVDistribution, q: DeltaVDistribution) -> ComparisonStats:
    """Compare two histograms on a shared binning.

    The KL divergence cannot handle empty bins, so each histogram is
    rescaled to its effective crash count, half a count is added to every
    bin, and the result renormalized; weights for the weighted mean
    absolute difference are the average of the two bins' masses.
    """
    pw, qw = align_bins(p, q)
    diff = np.abs(pw - qw)
    avg = 0.5 * (pw + qw)

    n_p = max(p.count, 1)
    n_q = max(q.count, 1)
    ps = pw * n_p + 0.5
    qs = qw * n_q + 0.5
    ps /= ps.sum()
    qs /= qs.sum()
    kl = float((ps * np.log(ps / qs)).sum())

    cdf_gap = np.abs(np.cumsum(pw) - np.cumsum(qw))
    return ComparisonStats(
        abs_mean_diff=abs(p.mean - q.mean),
        mean_abs_diff=float(diff.mean()),
        weighted_mean_abs_diff=float((avg * diff).sum()),
        max_abs_diff=float(diff.max()),
        tv_distance=float(0.5 * diff.sum()),
        kl_divergence=max(kl, 0.0),
        ks_distance=float(cdf_gap.max()),
    )


def seed_percentile(seed_dv: float, dvs, weights) -> float | str:
    """Mid-rank percentile of the seed's delta-v inside its generated
    crashes: 100 * (mass strictly below + half the mass equal). Seeds
    outside the generated support return a marker instead."""
    dvs = np.asarray(list(dvs), dtype=float)
    weights = np.asarray(list(weights), dtype=float)
    if dvs.size == 0 or weights.sum() <= 0:
        raise ValidationError("generated samples must be non-empty")
    if np.any(weights < 0):
        raise ValidationError("weights must be >= 0")
    keep = weights > 0
    dvs, weights = dvs[keep], weights[keep]
    weights = weights / weights.sum()
    if seed_dv < dvs.min():
        return BELOW_MIN
    if seed_dv > dvs.max():
        return ABOVE_MAX
    below = weights[dvs < seed_dv].sum()
    equal = weights[dvs == seed_dv].sum()
    return float(100.0 * (below + 0.5 * equal))


@dataclass(eq=False)
class PercentileReport:
    """Histogram of per-seed percentiles plus a chi-square uniformity
    check over the in-range seeds."""

    n_bins: int
    counts: np.ndarray
    below_min: int
    above_max: int
    chi2: float
    p_value: float

    @property
    def n_in_range(self) -> int:
        return int(self.counts.sum())


def percentile_histogram(percentiles, n_bins: int = 10) -> PercentileReport:
    """Bin percentile values (and markers) and test the in-range part
    against uniformity. The statistic is reported, not gated."""
    if n_bins < 2:
        raise ValidationError("n_bins must be >= 2")
    counts = np.zeros(n_bins, dtype=int)
    below = above = 0
    for value in percentiles:
        if value == BELOW_MIN:
            below += 1
        elif value == ABOVE_MAX:
            above += 1
        else:
            idx = min(int(float(value) / 100.0 * n_bins), n_bins - 1)
            counts[idx] += 1
    n = counts.sum()
    if n > 0:
        expected = n / n_bins
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        p_value = float(stats.chi2.sf(chi2, df=n_bins - 1))
    else:
        chi2, p_value = math.nan, math.nan
    return PercentileReport(n_bins, counts, below, above, chi2, p_value)


@dataclass(eq=False)
class InjuryRiskCurve:
    """Risk of at least one occupant reaching an injury level, as a
    nondecreasing function of delta-v. Either tabulated (linear
    interpolation, clamped ends) or logistic."""

    level: str
    dv: np.ndarray | None = None
    risk: np.ndarray | None = None
    logistic: tuple[float, float] | None = None  # (intercept, slope)

    def __post_init__(self):
        if (self.dv is None) == (self.logistic is None):
            raise ValidationError("curve needs either a table or logistic parameters")
        if self.dv is not None:
            self.dv = np.asarray(self.dv, dtype=float)
            self.risk = np.asarray(self.risk, dtype=float)
            if np.any(np.diff(self.dv) <= 0):
                raise ValidationError("curve delta-v values must be increasing")
            if np.any(self.risk < 0) or np.any(self.risk > 1):
                raise ValidationError("risk values must be in [0, 1]")
            if np.any(np.diff(self.risk) < 0):
                raise ValidationError("risk must be nondecreasing in delta-v")
        else:
            a, b = self.logistic
            if b < 0:
                raise ValidationError("logistic slope must be >= 0")

    def __call__(self, dv):
        dv = np.asarray(dv, dtype=float)
        if self.logistic is not None:
            a, b = self.logistic
            out = 1.0 / (1.0 + np.exp(-(a + b * dv)))
        else:
            out = np.interp(dv, self.dv, self.risk)
        return float(out) if out.ndim == 0 else out


def injury_risk(h: DeltaVDistribution, curve: InjuryRiskCurve) -> float:
    """Expected injured proportion: the risk curve integrated against the
    normalized delta-v histogram."""
    if not h.normalized:
        raise ValidationError("histogram must be normalized")
    return float((curve(h.centers) * h.weights).sum())


def crash_avoidance_rate(baseline: list[OutcomeMatrix],
                         treatment: list[OutcomeMatrix]) -> tuple[float, dict[str, float]]:
    """Per-seed avoidance 1 - P_treatment/P_baseline and their mean.

    Seeds are matched by id; a treatment seed that no longer crashes at
    all scores 1. Raw ratios are reported (no clamping), and baseline
    seeds with zero crash probability are skipped."""
    treat = {m.seed_id: m for m in treatment}
    missing = [m.seed_id for m in baseline if m.seed_id not in treat]
    if missing:
        raise ValidationError(f"treatment is missing seeds: {missing[:5]}")
    per_seed: dict[str, float] = {}
    for m in baseline:
        p_base = m.crash_mass
        if p_base <= 0:
            continue
        p_treat = treat[m.seed_id].crash_mass
        per_seed[m.seed_id] = 1.0 - p_treat / p_base
    if not per_seed:
        raise ValidationError("no baseline seed has crash probability > 0")
    rate = float(np.mean(list(per_seed.values())))
    return rate, per_seed


# ---------------------------------------------------------------- file I/O

def load_injury_curve(path: str | Path, level: str | None = None) -> InjuryRiskCurve:
    """Load a curve from CSV (delta_v_kmh,risk) or JSON logistic parameters
    {"level", "intercept", "slope"}."""
    path = Path(path)
    if path.suffix == ".json":
        with open(path) as fh:
            raw = json.load(fh)
        return InjuryRiskCurve(level=raw.get("level", level or path.stem),
                               logistic=(float(raw["intercept"]), float(raw["slope"])))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["delta_v_kmh", "risk"]:
            raise ValidationError(f"{path}: expected delta_v_kmh,risk header")
        rows = [(float(a), float(b)) for a, b in reader]
    dv, risk = zip(*rows)
    return InjuryRiskCurve(level=level or path.stem, dv=np.array(dv),
                           risk=np.array(risk))
