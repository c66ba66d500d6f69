"""Shared fixture builders: naturalistic-scale glance/deceleration
distributions and synthesized seed sets. Everything is deterministic."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from rearsim.distributions import (
    DecelDistribution,
    GlanceDistribution,
    bin_decels,
    bin_glances,
)
from rearsim.scenario import SeedCrash, SynthesisConfig, synthesize_seeds

N_GLANCES = 4604
N_GLANCE_BINS = 67
MAX_GLANCE = 6.7
ON_ROAD = 0.8
N_DECEL_CRASHES = 45


def glance_durations(rng_seed: int = 101) -> list[float]:
    """Naturalistic-scale off-road glance sample: 4604 glances, every
    0.1 s bin up to 6.7 s occupied."""
    rng = np.random.default_rng(rng_seed)
    draws = rng.exponential(0.9, N_GLANCES - N_GLANCE_BINS)
    draws = np.clip(draws, 0.05, MAX_GLANCE)
    forced = [k * 0.1 for k in range(1, N_GLANCE_BINS + 1)]
    return list(draws) + forced


@lru_cache(maxsize=None)
def shrp2_like_glances() -> GlanceDistribution:
    return bin_glances(glance_durations(), ON_ROAD)


@lru_cache(maxsize=None)
def shrp2_like_decels() -> DecelDistribution:
    """45 maximum decelerations spanning exactly six 1.5 m/s^2 bins."""
    rng = np.random.default_rng(202)
    values = list(rng.uniform(1.7, 10.2, N_DECEL_CRASHES - 2))
    values += [1.6, 10.3]  # pin the span so ceil(8.7/1.5) = 6 bins
    return bin_decels(values, 1.5)


@lru_cache(maxsize=None)
def seed_set(n: int, rng_seed: int = 42, mix: tuple | None = None) -> tuple[SeedCrash, ...]:
    cfg = SynthesisConfig(n_seeds=n)
    if mix is not None:
        cfg.lead_mix = dict(mix)
    return tuple(synthesize_seeds(cfg, rng_seed))


def paper_mix_seed_set() -> tuple[SeedCrash, ...]:
    """103 seeds with exactly 35 ineligible (non-braking or standstill)
    leads, mirroring the published case mix."""
    return seed_set(103, 42, mix=(("braking", 68), ("non_braking", 15),
                                  ("standstill", 20)))
