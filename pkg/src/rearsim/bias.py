"""Selection-bias correction: builds a property-damage-only (PDO)
augmented all-severity reference, fits an exponential PDO shape and a
logistic censoring transfer function, and applies the transfer to model
histograms.

Injury databases miss PDO crashes while generated crash populations span
every severity; the logistic transfer P(dv) maps all-severity histograms
onto the injury-database selection so the two become comparable.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FitError, ParseError, ValidationError
from .outcome import DEFAULT_BIN_WIDTH_KMH, DeltaVDistribution, align_bins

DEFAULT_P_PDO = 0.7
DEFAULT_N_FILL_BINS = 6

C1_GRID = np.round(np.arange(-10.0, -0.1 + 1e-9, 0.05), 10)
C2_GRID = np.round(np.arange(0.001, 5.0 + 1e-9, 0.001), 10)


@dataclass(frozen=True)
class OccupantRecord:
    """One occupant from the insurance data: delta-v and worst injury."""

    delta_v: float  # km/h
    mais: int       # 0..6, 0 = uninjured (PDO proxy)
    role: str = "driver"

    def __post_init__(self):
        if not 0 <= self.mais <= 6:
            raise ValidationError("mais must be in 0..6")
        if self.delta_v < 0:
            raise ValidationError("delta_v must be >= 0")


@dataclass(frozen=True)
class PdoModel:
    """Exponential PDO shape f(dv) = B1 * exp(-B2 * dv), in units of
    probability density over the complete (PDO-augmented) occupant set."""

    B1: float
    B2: float

    def __post_init__(self):
        if self.B1 <= 0 or self.B2 <= 0:
            raise ValidationError("B1 and B2 must be positive")

    def density(self, dv) -> np.ndarray:
        return self.B1 * np.exp(-self.B2 * np.asarray(dv, dtype=float))


@dataclass(frozen=True)
class TransferFunction:
    """Logistic censoring model P(dv) = sigmoid(C1 + C2*dv)."""

    C1: float
    C2: float

    def __call__(self, dv):
        z = self.C1 + self.C2 * np.asarray(dv, dtype=float)
        out = 1.0 / (1.0 + np.exp(-z))
        return float(out) if out.ndim == 0 else out

    @property
    def midpoint(self) -> float:
        """Delta-v where P = 0.5."""
        return -self.C1 / self.C2


def _counts_histogram(dvs: np.ndarray, bin_width: float, n_bins: int) -> np.ndarray:
    idx = np.floor(dvs / bin_width).astype(int)
    n = max(n_bins, (int(idx.max()) + 1) if idx.size else 0)
    return np.bincount(idx, minlength=n).astype(float)


def _fit_exponential(centers: np.ndarray, density: np.ndarray) -> PdoModel:
    """Log-linear least squares on strictly positive bins, weighted by bin
    mass (the inverse-variance weight for log counts), so sparse tail bins
    do not dominate the fit."""
    mask = density > 0
    if mask.sum() < 2:
        raise FitError("exponential fit needs at least two positive bins")
    x = centers[mask]
    y = np.log(density[mask])
    slope, intercept = np.polyfit(x, y, 1, w=np.sqrt(density[mask]))
    if slope >= 0 or not math.isfinite(slope):
        raise FitError(f"exponential fit produced a non-decaying shape "
                       f"(slope {slope:.4g})")
    return PdoModel(B1=float(math.exp(intercept)), B2=float(-slope))


def _allocate(deficit: float, present: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Nonnegative allocation summing to `deficit` that brings
    present+allocation as close as possible (least squares) to `target`:
    a_i = max(0, target_i - present_i + lam) with lam solving the budget."""
    gap = target - present
    lo = -max(gap.max(), 0.0) - deficit
    hi = deficit + max(-gap.min(), 0.0)
    for _ in range(200):
        lam = 0.5 * (lo + hi)
        total = np.maximum(gap + lam, 0.0).sum()
        if total > deficit:
            hi = lam
        else:
            lo = lam
    return np.maximum(gap + 0.5 * (lo + hi), 0.0)


def build_pdo(records: list[OccupantRecord], p_pdo: float = DEFAULT_P_PDO,
              n_fill_bins: int = DEFAULT_N_FILL_BINS,
              bin_width: float = DEFAULT_BIN_WIDTH_KMH,
              max_iter: int = 100, tol: float = 1e-10):
    """Complete the censored PDO data and fit the exponential shape.

    The complete occupant set must be `p_pdo` PDO, so the PDO total is
    injured * p_pdo / (1 - p_pdo); whatever is missing from the records
    (the crashes below the repair-cost threshold) is allocated to the
    `n_fill_bins` lowest delta-v bins (at or below the observed PDO mode
    for threshold-censored data) by nonnegative least squares against the
    fitted exponential, iterating allocation and fit until the allocation
    stabilizes.

    Returns (PdoModel, augmented PDO histogram, diagnostics).
    """
    if not 0 < p_pdo < 1:
        raise ValidationError("p_pdo must be in (0, 1)")
    pdo_dvs = np.array([r.delta_v for r in records if r.mais == 0])
    n_injured = sum(1 for r in records if r.mais > 0)
    if pdo_dvs.size == 0 or n_injured == 0:
        raise ValidationError("records must contain both MAIS0 and MAIS1-6 mass")

    present = _counts_histogram(pdo_dvs, bin_width, n_fill_bins)
    n_bins = len(present)
    centers = bin_width * (np.arange(n_bins) + 0.5)
    mode_idx = int(np.argmax(present))

    pdo_target = n_injured * p_pdo / (1.0 - p_pdo)
    deficit = pdo_target - pdo_dvs.size
    if deficit < -1e-9:
        raise ValidationError(
            f"PDO share already exceeds p_pdo={p_pdo}: nothing to add "
            f"(deficit {deficit:.3f})")
    deficit = max(deficit, 0.0)
    n_complete = n_injured / (1.0 - p_pdo)
    to_density = 1.0 / (n_complete * bin_width)

    fill = slice(0, n_fill_bins)
    alloc = np.zeros(n_bins)
    if deficit > 0:
        alloc[fill] = deficit / n_fill_bins  # flat start, reshaped below
    model = _fit_exponential(centers, (present + alloc) * to_density)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if deficit == 0:
            break
        target_counts = model.density(centers[fill]) / to_density
        new_fill = _allocate(deficit, present[fill], target_counts)
        change = np.abs(new_fill - alloc[fill]).max()
        alloc[fill] = new_fill
        model = _fit_exponential(centers, (present + alloc) * to_density)
        if change <= tol * max(deficit, 1.0):
            break

    full = present + alloc
    residual = float(np.sqrt(np.mean(
        (full[fill] * to_density - model.density(centers[fill])) ** 2)))
    pdo_hist = DeltaVDistribution(
        bin_width, full / full.sum(), 0.0, int(round(full.sum())))
    pdo_hist.mean = pdo_hist.binned_mean()
    diagnostics = {
        "deficit": float(deficit),
        "pdo_present": int(pdo_dvs.size),
        "n_injured": int(n_injured),
        "mode_bin": mode_idx,
        "iterations": iterations,
        "fit_residual": residual,
        "allocation": alloc[fill].tolist(),
    }
    return model, pdo_hist, diagnostics


def augment_reference(injury_dist: DeltaVDistribution, pdo: PdoModel,
                      p_pdo: float = DEFAULT_P_PDO) -> DeltaVDistribution:
    """Mix the fitted PDO shape under the injury-only reference so the PDO
    mass fraction of the result equals p_pdo."""
    if not injury_dist.normalized:
        raise ValidationError("injury distribution must be normalized")
    if not 0 <= p_pdo < 1:
        raise ValidationError("p_pdo must be in [0, 1)")
    if p_pdo == 0:
        return DeltaVDistribution(injury_dist.bin_width,
                                  injury_dist.weights.copy(),
                                  injury_dist.mean, injury_dist.count)
    shape = pdo.density(injury_dist.centers)
    shape = shape / shape.sum()
    weights = p_pdo * shape + (1.0 - p_pdo) * injury_dist.weights
    out = DeltaVDistribution(injury_dist.bin_width, weights, 0.0,
                             injury_dist.count)
    out.mean = out.binned_mean()
    return out


def fit_transfer(with_pdo: DeltaVDistribution,
                 original: DeltaVDistribution) -> tuple[TransferFunction, dict]:
    """Exhaustive grid search for the logistic (C1, C2) minimizing the
    summed absolute bin difference between `original` and the transformed
    `with_pdo`, the latter rescaled to the original's total mass before
    differencing. Ties resolve to the smallest C1, then C2."""
    wp, orig = align_bins(with_pdo, original)
    centers = with_pdo.bin_width * (np.arange(len(wp)) + 0.5)
    orig_mass = orig.sum()
    if orig_mass <= 0 or wp.sum() <= 0:
        raise FitError("both histograms need positive mass")

    best_cost = math.inf
    best = (C1_GRID[0], C2_GRID[0])
    cost_by_c1 = np.empty(len(C1_GRID))
    zx = np.outer(C2_GRID, centers)
    for r, c1 in enumerate(C1_GRID):
        p = 1.0 / (1.0 + np.exp(-(c1 + zx)))          # (n_c2, n_bins)
        t = p * wp
        scale = orig_mass / t.sum(axis=1)
        cost = np.abs(orig - scale[:, None] * t).sum(axis=1)
        k = int(np.argmin(cost))
        cost_by_c1[r] = cost[k]
        if cost[k] < best_cost:
            best_cost = float(cost[k])
            best = (float(c1), float(C2_GRID[k]))
    tf = TransferFunction(*best)
    # a fit pinned to the grid edge usually means the inputs already share
    # a selection process (P saturates toward 1 over the whole support)
    saturated = (best[0] == float(C1_GRID[-1])
                 or best[1] in (float(C2_GRID[0]), float(C2_GRID[-1])))
    diagnostics = {"cost": best_cost, "saturated": bool(saturated),
                   "cost_by_c1": cost_by_c1.tolist()}
    return tf, diagnostics


def apply_transfer(dist: DeltaVDistribution, tf: TransferFunction) -> DeltaVDistribution:
    """Censor an all-severity histogram like the injury database: multiply
    each bin by P(dv) and renormalize."""
    if not dist.normalized:
        raise ValidationError("distribution must be normalized")
    weights = dist.weights * tf(dist.centers)
    total = weights.sum()
    if total <= 0:
        raise ValidationError("transfer removed all mass")
    out = DeltaVDistribution(dist.bin_width, weights / total, 0.0, dist.count)
    out.mean = out.binned_mean()
    return out


def fill_sensitivity(records: list[OccupantRecord],
                     injury_dist: DeltaVDistribution,
                     model_hist: DeltaVDistribution,
                     p_pdo: float = DEFAULT_P_PDO,
                     n_fill_bins: int = DEFAULT_N_FILL_BINS,
                     n_variants: int = 18, rel: float = 0.3,
                     rng: np.random.Generator | None = None) -> dict:
    """Sensitivity of the downstream transformed mean to the fill shape.

    Each variant perturbs every fill-bin allocation by a uniform +/-`rel`
    relative amount, refits the exponential and the transfer, applies the
    transfer to `model_hist`, and reports the shift of the transformed
    mean against the unperturbed pipeline.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    model, pdo_hist, diag = build_pdo(records, p_pdo, n_fill_bins,
                                      injury_dist.bin_width)
    alloc = np.array(diag["allocation"])

    def downstream(pdo_model: PdoModel) -> float:
        ref = augment_reference(injury_dist, pdo_model, p_pdo)
        tf, _ = fit_transfer(ref, injury_dist)
        return apply_transfer(model_hist, tf).mean

    base_mean = downstream(model)
    pdo_dvs = np.array([r.delta_v for r in records if r.mais == 0])
    present = _counts_histogram(pdo_dvs, injury_dist.bin_width, n_fill_bins)
    centers = injury_dist.bin_width * (np.arange(len(present)) + 0.5)
    n_injured = sum(1 for r in records if r.mais > 0)
    to_density = (1.0 - p_pdo) / (n_injured * injury_dist.bin_width)

    shifts = []
    for _ in range(n_variants):
        perturbed = alloc * (1.0 + rng.uniform(-rel, rel, size=len(alloc)))
        full = present.copy()
        full[: len(perturbed)] += perturbed
        variant = _fit_exponential(centers, full * to_density)
        shifts.append(downstream(variant) - base_mean)
    return {"base_mean": base_mean, "shifts": shifts,
            "max_abs_shift": float(np.max(np.abs(shifts)))}


# ---------------------------------------------------------------- file I/O

def load_occupants(path: str | Path) -> list[OccupantRecord]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["delta_v_kmh", "mais", "role"]:
                raise ParseError(f"{path}: expected delta_v_kmh,mais,role header")
            return [OccupantRecord(float(a), int(b), c) for a, b, c in reader]
    except (ValueError, StopIteration) as exc:
        raise ParseError(f"{path}: malformed occupant file: {exc}") from exc


def save_occupants(records: list[OccupantRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta_v_kmh", "mais", "role"])
        for r in records:
            writer.writerow([repr(float(r.delta_v)), r.mais, r.role])


def save_model_json(obj, path: str | Path, extra: dict | None = None) -> None:
    payload = dict(vars(obj))
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_transfer(path: str | Path) -> TransferFunction:
    with open(path) as fh:
        raw = json.load(fh)
    return TransferFunction(float(raw["C1"]), float(raw["C2"]))


def load_pdo_model(path: str | Path) -> PdoModel:
    with open(path) as fh:
        raw = json.load(fh)
    return PdoModel(float(raw["B1"]), float(raw["B2"]))
