import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from rearsim.drivers import (
    BrakeProfile,
    CbmConfig,
    ReactionTimeDistribution,
    blom_onset,
    brake_deceleration,
    cbm_onset,
    discretize_reaction_time,
)
from rearsim.errors import ModelUndefinedError, ValidationError


class TestCbmOnset:
    def test_attentive_driver(self):
        assert cbm_onset(2.0, 0.0, CbmConfig()) == pytest.approx(2.5)

    def test_with_overshoot(self):
        assert cbm_onset(2.0, 1.3, CbmConfig()) == pytest.approx(3.8)

    def test_slow_response_variant(self):
        cfg = CbmConfig(response_delay=0.8)
        assert cbm_onset(2.0, 0.0, cfg) == pytest.approx(2.8)

    def test_absent_anchor_routes_to_no_response(self):
        with pytest.raises(ModelUndefinedError):
            cbm_onset(None, 0.1, CbmConfig())

    @given(anchor=st.floats(0, 10), overshoot=st.floats(0, 7),
           delay=st.floats(0, 2), bump=st.floats(0.01, 1))
    def test_strictly_increasing_in_each_argument(self, anchor, overshoot,
                                                  delay, bump):
        cfg = CbmConfig(response_delay=delay)
        base = cbm_onset(anchor, overshoot, cfg)
        assert cbm_onset(anchor + bump, overshoot, cfg) > base
        assert cbm_onset(anchor, overshoot + bump, cfg) > base
        assert cbm_onset(anchor, overshoot,
                         CbmConfig(response_delay=delay + bump)) > base


class TestBlomOnset:
    def test_sum(self):
        assert blom_onset(1.0, 1.2) == pytest.approx(2.2)

    def test_lowest_bin(self):
        assert blom_onset(1.0, 0.2) == pytest.approx(1.2)

    def test_undefined_without_brake_light(self):
        with pytest.raises(ModelUndefinedError):
            blom_onset(None, 1.0)


class TestReactionTimeDistribution:
    def test_closed_form_parameters(self):
        m, v = 1.275, 0.36
        dist = discretize_reaction_time(m, v)
        mu_expected = math.log(m * m / math.sqrt(v + m * m))
        sigma_expected = math.sqrt(math.log(v / (m * m) + 1.0))
        assert dist.mu == pytest.approx(mu_expected, abs=1e-9)
        assert dist.sigma == pytest.approx(sigma_expected, abs=1e-9)
        assert dist.mu == pytest.approx(0.14293, abs=5e-6)
        assert dist.sigma == pytest.approx(0.44726, abs=5e-6)

    def test_25_bins_sum_to_one(self):
        dist = discretize_reaction_time(1.275, 0.36)
        assert len(dist.centers) == 25
        assert dist.centers[0] == pytest.approx(0.2)
        assert dist.centers[-1] == pytest.approx(5.0)
        assert abs(dist.probs.sum() - 1.0) <= 1e-12

    def test_quadrature_oracle(self):
        """Bin masses equal the log-normal density integrated over each
        bin interval (independently via adaptive quadrature)."""
        dist = discretize_reaction_time(1.275, 0.36)
        mu, sigma = dist.mu, dist.sigma

        def pdf(x):
            return (1.0 / (x * sigma * math.sqrt(2 * math.pi))
                    * math.exp(-((math.log(x) - mu) ** 2) / (2 * sigma ** 2)))

        raw = []
        for c in dist.centers:
            lo, hi = c - 0.1, min(c + 0.1, 5.0)
            raw.append(integrate.quad(pdf, lo, hi)[0])
        raw = np.array(raw)
        raw /= raw.sum()
        assert np.abs(raw - dist.probs).max() < 1e-9

    def test_degenerate_variance_concentrates_at_m(self):
        dist = discretize_reaction_time(1.275, 1e-8)
        # 1.275 falls in the (1.1, 1.3] interval of the 1.2 s bin
        assert dist.probs[np.argmin(np.abs(dist.centers - 1.2))] > 0.999

    def test_unimodal_in_bin_index(self):
        dist = discretize_reaction_time(1.275, 0.36)
        peak = int(np.argmax(dist.probs))
        assert np.all(np.diff(dist.probs[: peak + 1]) >= 0)
        assert np.all(np.diff(dist.probs[peak:]) <= 0)

    def test_invalid_parameters(self):
        with pytest.raises(ValidationError):
            discretize_reaction_time(0.0, 0.36)
        with pytest.raises(ValidationError):
            discretize_reaction_time(1.0, -1.0)


class TestBrakeProfile:
    def test_zero_before_onset(self):
        p = BrakeProfile(onset=2.0, jerk=-23.04, d_max=9.0)
        assert brake_deceleration(p, 1.99) == 0.0
        assert brake_deceleration(p, 0.0) == 0.0

    def test_plateau_time(self):
        # |jerk| 23.04 to d_max 9 takes 9/23.04 = 0.390625 s exactly
        p = BrakeProfile(onset=1.0, jerk=-23.04, d_max=9.0)
        t_plateau = 1.0 + 9.0 / 23.04
        assert brake_deceleration(p, t_plateau) == pytest.approx(9.0, abs=1e-12)
        assert brake_deceleration(p, t_plateau - 1e-6) < 9.0
        assert brake_deceleration(p, t_plateau + 1e-6) == 9.0

    def test_far_future_is_d_max(self):
        p = BrakeProfile(onset=0.5, jerk=-23.04, d_max=7.5)
        assert brake_deceleration(p, 100.0) == 7.5

    def test_continuous_nondecreasing(self):
        p = BrakeProfile(onset=1.0, jerk=-23.04, d_max=9.0)
        t = np.linspace(0, 3, 3001)
        d = brake_deceleration(p, t)
        assert np.all(np.diff(d) >= 0)
        assert np.abs(np.diff(d)).max() < 0.05  # no jumps at 1 ms steps

    def test_never_responding_profile(self):
        p = BrakeProfile(onset=math.inf, jerk=-23.04, d_max=9.0)
        assert brake_deceleration(p, 1e9) == 0.0

    def test_validation(self):
        with pytest.raises(ValidationError):
            BrakeProfile(onset=0.0, jerk=-1.0, d_max=0.0)
        with pytest.raises(ValidationError):
            BrakeProfile(onset=0.0, jerk=1.0, d_max=5.0)


class TestCbmConfig:
    def test_defaults_match_published_values(self):
        cfg = CbmConfig()
        assert cfg.inv_tau_threshold == 0.2
        assert cfg.response_delay == 0.5
        assert cfg.jerk_mean == -23.04
        assert cfg.jerk_sd == 0.74
        assert cfg.no_response_fraction == 0.10

    def test_validation(self):
        with pytest.raises(ValidationError):
            CbmConfig(response_delay=-0.1)
        with pytest.raises(ValidationError):
            CbmConfig(jerk_mean=1.0)
        with pytest.raises(ValidationError):
            CbmConfig(no_response_fraction=1.0)
