"""Delta-v estimation, prevalence weighting with trimming, no-response
mixing, and histogram construction.

Delta-v follows a 1-D inelastic collision: both vehicles leave the
impact at the common momentum-conserving speed, so the follower's speed
change is m2*(v1 - v2)/(m1 + m2).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import OutcomeMatrix
from .errors import ValidationError

MS_TO_KMH = 3.6
DEFAULT_BIN_WIDTH_KMH = 2.0
TRIM_LOW_PCT = 5.0
TRIM_HIGH_PCT = 95.0
DEFAULT_NO_RESPONSE_FRACTION = 0.10


def delta_v(v1: float, v2: float, m1: float, m2: float) -> float:
    """Follower speed change over the collision, km/h. v1/v2 are the
    follower/lead speeds at first overlap (m/s), m1/m2 their masses."""
    if m1 <= 0 or m2 <= 0:
        raise ValidationError("masses must be positive")
    if v1 < v2:
        raise ValidationError("follower must be at least as fast as the lead")
    return m2 * (v1 - v2) / (m1 + m2) * MS_TO_KMH


@dataclass(eq=False)
class DeltaVDistribution:
    """Weighted delta-v histogram on fixed-width bins starting at 0.

    `mean` is computed from the unbinned weighted samples where available;
    transforms that only see bins fall back to the bin-center mean.
    `count` is the number of underlying crashes, used as the effective
    count for pseudo-count corrections.
    """

    bin_width: float
    weights: np.ndarray
    mean: float
    count: int
    normalized: bool = True

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0):
            raise ValidationError("histogram weights must be >= 0")
        if self.normalized and self.weights.size:
            total = self.weights.sum()
            if abs(total - 1.0) > 1e-9:
                raise ValidationError(f"normalized histogram sums to {total}")

    @property
    def centers(self) -> np.ndarray:
        return self.bin_width * (np.arange(len(self.weights)) + 0.5)

    @property
    def edges(self) -> np.ndarray:
        return self.bin_width * np.arange(len(self.weights) + 1)

    def binned_mean(self) -> float:
        w = self.weights.sum()
        return float((self.centers * self.weights).sum() / w) if w else 0.0


def build_histogram(samples, bin_width: float = DEFAULT_BIN_WIDTH_KMH) -> DeltaVDistribution:
    """Weighted histogram of (delta_v, weight) pairs; the mean is taken on
    the unbinned samples."""
    samples = [(float(dv), float(w)) for dv, w in samples]
    if any(w < 0 for _, w in samples):
        raise ValidationError("weights must be >= 0")
    samples = [(dv, w) for dv, w in samples if w > 0]
    if not samples:
        raise ValidationError("no samples with positive weight")
    dvs = np.array([dv for dv, _ in samples])
    ws = np.array([w for _, w in samples])
    if np.any(dvs < 0):
        raise ValidationError("delta-v must be >= 0")
    # canonical accumulation order makes the histogram exactly invariant
    # to sample permutations
    order = np.lexsort((ws, dvs))
    dvs, ws = dvs[order], ws[order]
    total = ws.sum()
    idx = np.floor(dvs / bin_width).astype(int)
    weights = np.bincount(idx, weights=ws, minlength=int(idx.max()) + 1)
    return DeltaVDistribution(
        bin_width, weights / total, float((dvs * ws).sum() / total), len(samples))


def align_bins(p: DeltaVDistribution, q: DeltaVDistribution):
    """Common-length weight arrays for two histograms on the same binning."""
    if abs(p.bin_width - q.bin_width) > 1e-12:
        raise ValidationError("histograms must share the bin width")
    n = max(len(p.weights), len(q.weights))
    pad = lambda w: np.pad(w, (0, n - len(w)))
    return pad(p.weights), pad(q.weights)


@dataclass(frozen=True)
class SeedWeight:
    """Prevalence weight of one seed: q is its summed crash-cell
    probability, w the (trimmed) inverse used to balance seeds."""

    seed_id: str
    q_raw: float
    q_norm: float
    w_untrimmed: float
    w: float


def _nearest_rank(sorted_values: np.ndarray, pct: float) -> float:
    n = len(sorted_values)
    rank = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_values[rank - 1])


def prevalence_weights(matrices: list[OutcomeMatrix]) -> tuple[list[SeedWeight], list[str]]:
    """Inverse-crash-probability weights per seed, trimmed to the nearest-rank
    5th/95th percentiles of the untrimmed weights. Seeds without any crash
    cell cannot be weighted and are reported separately."""
    kept, excluded = [], []
    for m in matrices:
        q = m.crash_mass
        if q > 0:
            kept.append((m.seed_id, q))
        else:
            excluded.append(m.seed_id)
    if not kept:
        raise ValidationError("no seed produced any crash cell")
    q_raw = np.array([q for _, q in kept])
    q_norm = q_raw / q_raw.sum()
    w_unt = 1.0 / q_norm
    w_sorted = np.sort(w_unt)
    lo = _nearest_rank(w_sorted, TRIM_LOW_PCT)
    hi = _nearest_rank(w_sorted, TRIM_HIGH_PCT)
    w_trim = np.clip(w_unt, lo, hi)
    return ([SeedWeight(sid, float(qr), float(qn), float(wu), float(wt))
             for (sid, qr), qn, wu, wt in zip(kept, q_norm, w_unt, w_trim)],
            excluded)


def weighted_crash_samples(matrices: list[OutcomeMatrix],
                           masses: dict[str, tuple[float, float]],
                           weights: list[SeedWeight]) -> list[tuple[str, float, float]]:
    """Flatten crash cells into (seed_id, delta_v, weight) samples with the
    prevalence weights applied; the weights are renormalized to sum to 1.
    `masses` maps seed id to (follower, lead) mass in kg."""
    w_by_seed = {w.seed_id: w.w for w in weights}
    rows = []
    for m in matrices:
        if m.seed_id not in w_by_seed:
            continue
        w_i = w_by_seed[m.seed_id]
        m1, m2 = masses[m.seed_id]
        p = m.p_cell
        ii, jj = np.nonzero(m.crashed)
        for i, j in zip(ii, jj):
            dv = delta_v(float(m.v1[i, j]), float(m.v2[i, j]), m1, m2)
            rows.append((m.seed_id, dv, w_i * float(p[i, j])))
    total = sum(w for _, _, w in rows)
    if total <= 0:
        raise ValidationError("no weighted crash samples")
    return [(sid, dv, w / total) for sid, dv, w in rows]


def mix_no_response(base: DeltaVDistribution, no_resp_dvs,
                    fraction: float = DEFAULT_NO_RESPONSE_FRACTION) -> DeltaVDistribution:
    """Blend the sub-model histogram with the no-response (sleepy driver)
    delta-vs: (1-fraction) of the mass stays with `base`, `fraction` goes
    to the normalized no-response histogram (one delta-v per seed)."""
    if not base.normalized:
        raise ValidationError("base histogram must be normalized")
    if not 0 <= fraction <= 1:
        raise ValidationError("fraction must be in [0, 1]")
    no_resp_dvs = [float(d) for d in no_resp_dvs]
    if fraction > 0 and not no_resp_dvs:
        raise ValidationError("no-response delta-vs required when fraction > 0")
    if fraction == 0:
        return DeltaVDistribution(base.bin_width, base.weights.copy(),
                                  base.mean, base.count)
    nr = build_histogram([(dv, 1.0) for dv in no_resp_dvs], base.bin_width)
    bw, nw = align_bins(base, nr)
    mixed = (1.0 - fraction) * bw + fraction * nw
    mean = (1.0 - fraction) * base.mean + fraction * nr.mean
    return DeltaVDistribution(base.bin_width, mixed, mean,
                              base.count + nr.count)


# ---------------------------------------------------------------- file I/O

def save_histogram(h: DeltaVDistribution, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low_kmh", "bin_high_kmh", "weight"])
        edges = h.edges
        for i, w in enumerate(h.weights):
            writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])),
                             repr(float(w))])


def load_histogram(h_path: str | Path, mean: float | None = None,
                   count: int = 1) -> DeltaVDistribution:
    with open(h_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["bin_low_kmh", "bin_high_kmh", "weight"]:
            raise ValidationError(f"{h_path}: unexpected histogram header")
        rows = [(float(a), float(b), float(w)) for a, b, w in reader]
    if not rows:
        raise ValidationError(f"{h_path}: empty histogram")
    width = rows[0][1] - rows[0][0]
    weights = np.array([w for _, _, w in rows])
    dist = DeltaVDistribution(width, weights, 0.0, count,
                              normalized=abs(weights.sum() - 1.0) <= 1e-9)
    dist.mean = dist.binned_mean() if mean is None else mean
    return dist
