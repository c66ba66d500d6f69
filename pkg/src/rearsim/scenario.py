"""Seed pre-crash scenarios: records, file I/O, synthesis, and the
counterfactual transform that removes the follower's evasive maneuver.

Geometry is 1-D along a common path. The lead vehicle's position is its
rear bumper, the follower's its front bumper, so ``gap = lead - follower``
and a collision is ``gap <= 0``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GenerationError, ParseError, ValidationError

DT_NOMINAL = 0.010            # s, reconstruction time step
DT_TOLERANCE = 1e-6           # s, allowed jitter on the step
GAP_TOLERANCE = 0.05          # m, slack on the final-collision check
DECEL_ONSET_THRESHOLD = -0.5  # m/s^2, sustained-braking detector level
DECEL_ONSET_HOLD = 0.2        # s, how long the level must hold
STANDSTILL_SPEED = 0.01       # m/s, below this a vehicle is "not moving"
DEFAULT_HORIZON_EXTENSION = 30.0  # s, added beyond the seed when the
                                  # evasive maneuver is removed

LEAD_BRAKING = "braking"
LEAD_NON_BRAKING = "non-braking"
LEAD_STANDSTILL = "standstill-at-start"

SEED_CSV_HEADER = ["t", "lead_pos", "lead_speed", "lead_acc",
                   "foll_pos", "foll_speed", "foll_acc"]


@dataclass(frozen=True)
class VehicleMeta:
    """Mass and outer dimensions of one involved vehicle."""

    mass: float   # kg
    width: float  # m
    length: float  # m
    id: str = ""

    def __post_init__(self):
        if not (self.mass > 0 and self.width > 0 and self.length > 0):
            raise ValidationError(
                f"vehicle {self.id!r}: mass/width/length must be positive"
            )


@dataclass(eq=False)
class Trajectory:
    """Sampled 1-D motion along the common path."""

    t: np.ndarray      # s
    pos: np.ndarray    # m
    speed: np.ndarray  # m/s
    acc: np.ndarray    # m/s^2

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.pos = np.asarray(self.pos, dtype=float)
        self.speed = np.asarray(self.speed, dtype=float)
        self.acc = np.asarray(self.acc, dtype=float)

    def __len__(self):
        return len(self.t)


@dataclass(eq=False)
class SeedCrash:
    """One reconstructed rear-end crash, ending in collision."""

    id: str
    lead: Trajectory
    follower: Trajectory
    lead_meta: VehicleMeta
    follower_meta: VehicleMeta
    seed_delta_v_kmh: float | None = None

    @property
    def dt(self) -> float:
        return float(self.lead.t[1] - self.lead.t[0])

    @property
    def duration(self) -> float:
        return float(self.lead.t[-1] - self.lead.t[0])

    def gap(self) -> np.ndarray:
        return self.lead.pos - self.follower.pos

    def validate(self) -> None:
        lead, foll = self.lead, self.follower
        n = len(lead)
        if n < 2:
            raise ValidationError(f"seed {self.id}: needs at least 2 samples")
        if len(foll) != n or not np.array_equal(lead.t, foll.t):
            raise ValidationError(f"seed {self.id}: trajectories must share the time base")
        steps = np.diff(lead.t)
        if np.any(steps <= 0):
            raise ValidationError(f"seed {self.id}: time must be strictly increasing")
        if np.any(np.abs(steps - DT_NOMINAL) > DT_TOLERANCE):
            raise ValidationError(
                f"seed {self.id}: time step must be {DT_NOMINAL} s"
            )
        if np.any(lead.speed < -1e-9) or np.any(foll.speed < -1e-9):
            raise ValidationError(f"seed {self.id}: speeds must be non-negative")
        gap = self.gap()
        if np.any(gap[:-1] < -1e-9):
            raise ValidationError(f"seed {self.id}: negative gap before the final sample")
        if gap[-1] > GAP_TOLERANCE:
            raise ValidationError(
                f"seed {self.id}: seed does not end in collision (final gap "
                f"{gap[-1]:.3f} m)"
            )


@dataclass(eq=False)
class CounterfactualSeed:
    """A seed with the follower's evasive maneuver removed.

    The follower holds one constant speed over the whole (extended)
    horizon; the lead trajectory is extrapolated past its last
    reconstructed sample at its final speed (a stopped lead stays
    stopped).
    """

    id: str
    lead: Trajectory
    follower: Trajectory
    lead_meta: VehicleMeta
    follower_meta: VehicleMeta
    lead_behavior_class: str
    lead_brake_onset: float | None
    source_duration: float
    seed_delta_v_kmh: float | None = None
    anchor_time: float | None = None   # set once looming has been evaluated

    @property
    def dt(self) -> float:
        return float(self.lead.t[1] - self.lead.t[0])

    @property
    def follower_speed(self) -> float:
        return float(self.follower.speed[0])

    def gap(self) -> np.ndarray:
        return self.lead.pos - self.follower.pos


def _sustained_decel_onset(t: np.ndarray, acc: np.ndarray,
                           threshold: float = DECEL_ONSET_THRESHOLD,
                           hold: float = DECEL_ONSET_HOLD) -> int | None:
    """Index of the first sample opening a window of >= `hold` seconds with
    acceleration at or below `threshold`. None if no such window exists."""
    dt = float(t[1] - t[0])
    win = max(1, int(round(hold / dt)))
    below = acc <= threshold
    if len(below) < win:
        return None
    # rolling all-true over windows of length `win`
    hits = np.convolve(below.astype(int), np.ones(win, dtype=int), mode="valid")
    idx = np.nonzero(hits == win)[0]
    return int(idx[0]) if idx.size else None


def classify_lead_behavior(lead: Trajectory) -> tuple[str, float | None]:
    """Classify the lead vehicle: standing still for the whole event,
    braking (returns the brake onset time), or driving without braking."""
    if np.all(lead.speed <= STANDSTILL_SPEED):
        return LEAD_STANDSTILL, None
    onset_idx = _sustained_decel_onset(lead.t, lead.acc)
    if onset_idx is not None:
        return LEAD_BRAKING, float(lead.t[onset_idx])
    return LEAD_NON_BRAKING, None


def remove_evasive_maneuver(
    seed: SeedCrash | CounterfactualSeed,
    horizon_extension: float = DEFAULT_HORIZON_EXTENSION,
) -> CounterfactualSeed:
    """Replace the follower's speed profile with the constant speed it held
    just before its first sustained deceleration (its initial speed if it
    never decelerates), and extend the horizon so late responses can play
    out. Idempotent: reapplying to the output is a no-op."""
    lead, foll = seed.lead, seed.follower
    dt = float(lead.t[1] - lead.t[0])
    t0 = float(lead.t[0])
    source_duration = getattr(seed, "source_duration",
                              float(lead.t[-1] - lead.t[0]))

    onset_idx = _sustained_decel_onset(foll.t, foll.acc)
    if onset_idx is None:
        v_const = float(foll.speed[0])
    else:
        v_const = float(foll.speed[max(onset_idx - 1, 0)])

    total = source_duration + horizon_extension
    n = int(round(total / dt)) + 1
    t = t0 + dt * np.arange(n)

    # lead: reconstructed part verbatim, then constant-speed extrapolation
    n_src = len(lead)
    lead_pos = np.empty(n)
    lead_speed = np.empty(n)
    lead_acc = np.zeros(n)
    m = min(n_src, n)
    lead_pos[:m] = lead.pos[:m]
    lead_speed[:m] = lead.speed[:m]
    lead_acc[:m] = lead.acc[:m]
    if n > n_src:
        v_end = float(lead.speed[-1])
        if v_end <= STANDSTILL_SPEED:
            v_end = 0.0
        k = np.arange(1, n - n_src + 1)
        lead_pos[n_src:] = lead.pos[-1] + v_end * dt * k
        lead_speed[n_src:] = v_end
        lead_acc[n_src:] = 0.0

    foll_pos = float(foll.pos[0]) + v_const * (t - t0)
    cf_follower = Trajectory(t, foll_pos, np.full(n, v_const), np.zeros(n))
    cf_lead = Trajectory(t, lead_pos, lead_speed, lead_acc)

    behavior, brake_onset = classify_lead_behavior(cf_lead)
    return CounterfactualSeed(
        id=seed.id,
        lead=cf_lead,
        follower=cf_follower,
        lead_meta=seed.lead_meta,
        follower_meta=seed.follower_meta,
        lead_behavior_class=behavior,
        lead_brake_onset=brake_onset,
        source_duration=source_duration,
        seed_delta_v_kmh=seed.seed_delta_v_kmh,
    )


# ---------------------------------------------------------------- file I/O

def load_seed(pcm_file: str | Path) -> SeedCrash:
    """Load a seed from a trajectory CSV plus its JSON sidecar and validate
    all record invariants."""
    csv_path = Path(pcm_file)
    json_path = csv_path.with_suffix(".json")
    if not csv_path.exists():
        raise ParseError(f"seed file not found: {csv_path}")
    if not json_path.exists():
        raise ParseError(f"seed sidecar not found: {json_path}")

    try:
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != SEED_CSV_HEADER:
                raise ParseError(
                    f"{csv_path}: expected header {','.join(SEED_CSV_HEADER)}"
                )
            rows = [[float(x) for x in row] for row in reader if row]
    except (ValueError, StopIteration) as exc:
        raise ParseError(f"{csv_path}: malformed seed file: {exc}") from exc
    if not rows:
        raise ParseError(f"{csv_path}: no samples")
    data = np.asarray(rows, dtype=float)

    try:
        with open(json_path) as fh:
            meta = json.load(fh)
        lead_meta = VehicleMeta(id=str(meta["id"]) + "/lead", **meta["lead"])
        foll_meta = VehicleMeta(id=str(meta["id"]) + "/follower", **meta["follower"])
        seed = SeedCrash(
            id=str(meta["id"]),
            lead=Trajectory(data[:, 0], data[:, 1], data[:, 2], data[:, 3]),
            follower=Trajectory(data[:, 0], data[:, 4], data[:, 5], data[:, 6]),
            lead_meta=lead_meta,
            follower_meta=foll_meta,
            seed_delta_v_kmh=meta.get("seed_delta_v_kmh"),
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{json_path}: malformed sidecar: {exc}") from exc
    seed.validate()
    return seed


def save_seed(seed: SeedCrash, csv_path: str | Path) -> None:
    """Write a seed as the CSV + JSON sidecar pair read by load_seed."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SEED_CSV_HEADER)
        for i in range(len(seed.lead)):
            writer.writerow([
                repr(float(x)) for x in (
                    seed.lead.t[i], seed.lead.pos[i], seed.lead.speed[i],
                    seed.lead.acc[i], seed.follower.pos[i],
                    seed.follower.speed[i], seed.follower.acc[i],
                )
            ])
    meta = {
        "id": seed.id,
        "lead": {"mass": seed.lead_meta.mass, "width": seed.lead_meta.width,
                 "length": seed.lead_meta.length},
        "follower": {"mass": seed.follower_meta.mass,
                     "width": seed.follower_meta.width,
                     "length": seed.follower_meta.length},
    }
    if seed.seed_delta_v_kmh is not None:
        meta["seed_delta_v_kmh"] = seed.seed_delta_v_kmh
    with open(csv_path.with_suffix(".json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_seed_dir(directory: str | Path) -> list[SeedCrash]:
    """Load every seed CSV in a directory, ordered by id."""
    seeds = [load_seed(p) for p in sorted(Path(directory).glob("*.csv"))]
    seeds.sort(key=lambda s: s.id)
    return seeds


# --------------------------------------------------------------- synthesis

@dataclass
class SynthesisConfig:
    """Parameter ranges for synthetic seed generation. All ranges are
    (low, high) and sampled uniformly."""

    n_seeds: int = 103
    follower_speed: tuple[float, float] = (10.0, 30.0)   # m/s
    lead_speed: tuple[float, float] = (5.0, 25.0)        # m/s, non-braking leads
    lead_follow_ratio: tuple[float, float] = (0.85, 1.05)  # braking leads start
                                                           # near the follower speed
    headway_time: tuple[float, float] = (0.5, 2.0)       # s
    lead_brake_onset: tuple[float, float] = (2.0, 4.5)   # s
    lead_decel: tuple[float, float] = (2.0, 8.0)         # m/s^2 magnitude
    follower_reaction: tuple[float, float] = (0.8, 2.5)  # s after lead onset
    follower_decel: tuple[float, float] = (1.0, 6.0)     # m/s^2 magnitude
    follower_no_response_prob: float = 0.15
    mass: tuple[float, float] = (900.0, 2500.0)          # kg
    width: tuple[float, float] = (1.6, 2.1)              # m
    length: tuple[float, float] = (3.8, 5.2)             # m
    # relative weights of lead behavior classes; integer weights summing to
    # n_seeds are honored as exact counts
    lead_mix: dict[str, float] = field(default_factory=lambda: {
        "braking": 0.66, "non_braking": 0.14, "standstill": 0.20})
    max_attempts: int = 500
    max_sim_time: float = 60.0                           # s

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthesisConfig":
        with open(path) as fh:
            raw = json.load(fh)
        cfg = cls()
        for key, value in raw.items():
            if not hasattr(cfg, key):
                raise ValidationError(f"unknown synthesis config key: {key}")
            current = getattr(cfg, key)
            if isinstance(current, tuple):
                value = tuple(float(v) for v in value)
            setattr(cfg, key, value)
        return cfg


def _mode_counts(mix: dict[str, float], n: int) -> dict[str, int]:
    """Largest-remainder apportionment of n seeds over the behavior mix."""
    modes = sorted(mix)
    weights = np.array([float(mix[m]) for m in modes])
    if np.any(weights < 0) or weights.sum() <= 0:
        raise ValidationError("lead_mix weights must be non-negative, not all zero")
    if all(float(w).is_integer() for w in weights) and int(weights.sum()) == n:
        return {m: int(mix[m]) for m in modes}
    exact = weights / weights.sum() * n
    counts = np.floor(exact).astype(int)
    remainder = exact - counts
    for i in np.argsort(-remainder)[: n - counts.sum()]:
        counts[i] += 1
    return dict(zip(modes, counts.tolist()))


def _trapezoid_positions(x0: float, speed: np.ndarray, dt: float) -> np.ndarray:
    """Positions consistent with the sampled speeds (exact for piecewise
    linear speed profiles, like a reconstruction would provide)."""
    steps = 0.5 * (speed[1:] + speed[:-1]) * dt
    return x0 + np.concatenate([[0.0], np.cumsum(steps)])


def _simulate_raw(mode: str, params: dict, dt: float, max_time: float):
    """Forward-simulate one candidate scenario. Returns sampled arrays up to
    and including the first collision sample, or None if no collision."""
    n = int(round(max_time / dt)) + 1
    t = dt * np.arange(n)

    if mode == "standstill":
        lead_speed = np.zeros(n)
    elif mode == "non_braking":
        lead_speed = np.full(n, params["lead_v0"])
    else:  # braking
        ramp = params["lead_v0"] - params["lead_decel"] * np.maximum(
            t - params["lead_onset"], 0.0)
        lead_speed = np.maximum(ramp, 0.0)
    lead_acc = np.concatenate([[0.0], np.diff(lead_speed) / dt])
    lead_pos = _trapezoid_positions(params["gap0"], lead_speed, dt)

    if params["foll_onset"] is None:
        foll_speed = np.full(n, params["foll_v0"])
    else:
        ramp = params["foll_v0"] - params["foll_decel"] * np.maximum(
            t - params["foll_onset"], 0.0)
        foll_speed = np.maximum(ramp, 0.0)
    foll_acc = np.concatenate([[0.0], np.diff(foll_speed) / dt])
    foll_pos = _trapezoid_positions(0.0, foll_speed, dt)

    gap = lead_pos - foll_pos
    hit = np.nonzero(gap <= 0)[0]
    if hit.size == 0:
        return None
    k = int(hit[0])
    if k < 1 or foll_speed[k] <= lead_speed[k]:
        return None  # degenerate or grazing start
    return t[: k + 1], lead_pos, lead_speed, lead_acc, foll_pos, foll_speed, foll_acc, k


def synthesize_seeds(config: SynthesisConfig, rng_seed: int) -> list[SeedCrash]:
    """Generate colliding seed scenarios by rejection sampling. Deterministic
    for a given (config, rng_seed)."""
    rng = np.random.default_rng(rng_seed)
    counts = _mode_counts(config.lead_mix, config.n_seeds)
    modes: list[str] = []
    for mode in sorted(counts):
        modes.extend([mode] * counts[mode])
    modes = [modes[i] for i in rng.permutation(len(modes))]

    dt = DT_NOMINAL
    window = int(round(5.0 / dt))  # keep at most the last 5 s before impact
    seeds = []
    for index, mode in enumerate(modes):
        seed = None
        for _ in range(config.max_attempts):
            u = lambda lo_hi: float(rng.uniform(*lo_hi))
            foll_v0 = u(config.follower_speed)
            if mode == "standstill":
                lead_v0 = 0.0
            elif mode == "non_braking":
                # needs a genuine closing speed for a collision to exist
                lead_v0 = min(u(config.lead_speed), max(foll_v0 - 2.0, 0.5))
            else:
                # car-following: the lead starts near the follower's speed
                lead_v0 = max(foll_v0 * u(config.lead_follow_ratio), 0.5)
            gap0 = max(u(config.headway_time) * foll_v0, 2.0)
            lead_onset = u(config.lead_brake_onset)
            no_response = rng.random() < config.follower_no_response_prob
            reaction = u(config.follower_reaction)
            if no_response:
                foll_onset = None
            elif mode == "braking":
                foll_onset = lead_onset + reaction
            else:
                foll_onset = reaction
            params = {
                "lead_v0": lead_v0, "gap0": gap0, "lead_onset": lead_onset,
                "lead_decel": u(config.lead_decel),
                "foll_v0": foll_v0, "foll_onset": foll_onset,
                "foll_decel": u(config.follower_decel),
            }
            raw = _simulate_raw(mode, params, dt, config.max_sim_time)
            if raw is None:
                continue
            t, lead_pos, lead_speed, lead_acc, foll_pos, foll_speed, foll_acc, k = raw
            lo = max(0, k - window)
            sl = slice(lo, k + 1)
            tt = t[sl] - t[lo]
            lead_tr = Trajectory(tt, lead_pos[sl], lead_speed[sl], lead_acc[sl])
            foll_tr = Trajectory(tt, foll_pos[sl], foll_speed[sl], foll_acc[sl])
            got_class, _ = classify_lead_behavior(lead_tr)
            wanted = {"braking": LEAD_BRAKING, "non_braking": LEAD_NON_BRAKING,
                      "standstill": LEAD_STANDSTILL}[mode]
            if got_class != wanted:
                continue
            sid = f"s{index:04d}"
            foll_meta = VehicleMeta(u(config.mass), u(config.width),
                                    u(config.length), f"{sid}/follower")
            lead_meta = VehicleMeta(u(config.mass), u(config.width),
                                    u(config.length), f"{sid}/lead")
            # reference delta-v the way the source database would report it:
            # momentum exchange at the impact relative speed
            gap = lead_pos - foll_pos
            alpha = gap[k - 1] / (gap[k - 1] - gap[k])
            v1 = foll_speed[k - 1] + alpha * (foll_speed[k] - foll_speed[k - 1])
            v2 = lead_speed[k - 1] + alpha * (lead_speed[k] - lead_speed[k - 1])
            dv = lead_meta.mass * (v1 - v2) / (foll_meta.mass + lead_meta.mass) * 3.6
            seed = SeedCrash(
                id=sid,
                lead=lead_tr,
                follower=foll_tr,
                lead_meta=lead_meta,
                follower_meta=foll_meta,
                seed_delta_v_kmh=float(dv),
            )
            seed.validate()
            break
        if seed is None:
            raise GenerationError(
                f"could not synthesize a colliding '{mode}' seed within "
                f"{config.max_attempts} attempts; widen the config ranges"
            )
        seeds.append(seed)
    return seeds
