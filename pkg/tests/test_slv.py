import math

import numpy as np
import pytest
from scipy import stats

import convexlab as cl
from conftest import TAU
from helpers import oracle_bs_call, weighted_sample_se

SPEC = cl.BernoulliSpec(y_minus=0.8, y_plus=1.2, q_minus=0.5)
SIGMA0 = 0.2


class TestBernoulliSpec:
    def test_moments(self):
        assert SPEC.q_plus == 0.5
        assert SPEC.mean_sq == pytest.approx(0.5 * 0.64 + 0.5 * 1.44, rel=1e-15)

    def test_rejects_bad_levels(self):
        with pytest.raises(ValueError):
            cl.BernoulliSpec(y_minus=-0.1, y_plus=1.0, q_minus=0.5)
        with pytest.raises(ValueError):
            cl.BernoulliSpec(y_minus=1.0, y_plus=0.5, q_minus=0.5)
        with pytest.raises(ValueError):
            cl.BernoulliSpec(y_minus=0.8, y_plus=1.2, q_minus=1.5)

    def test_rejects_excessive_ratio(self):
        with pytest.raises(ValueError):
            cl.BernoulliSpec(y_minus=0.2, y_plus=1.0, q_minus=0.5)


class TestInitParticles:
    def test_label_frequency_within_binomial_band(self):
        n = 100_000
        ps = cl.init_particles(n, 1.0, SPEC, cl.RngSpec(61))
        band = 4.0 * math.sqrt(SPEC.q_minus * SPEC.q_plus / n)
        assert abs(ps.label_frequency() - SPEC.q_minus) < band

    def test_all_spots_at_start(self):
        ps = cl.init_particles(2000, 1.0, SPEC, cl.RngSpec(62))
        assert np.all(ps.log_spots == 0.0)

    def test_degenerate_levels_give_constant_leverage(self):
        spec = cl.BernoulliSpec(y_minus=1.1, y_plus=1.1, q_minus=0.5)
        ps = cl.init_particles(2000, 1.0, spec, cl.RngSpec(63))
        curve = cl.estimate_leverage(ps)
        assert np.all(curve.values == pytest.approx(1.1**2, rel=1e-15))

    def test_rejects_small_clouds(self):
        with pytest.raises(ValueError):
            cl.init_particles(500, 1.0, SPEC, cl.RngSpec(64))

    def test_array_starts(self):
        starts = np.linspace(0.9, 1.1, 2000)
        ps = cl.init_particles(2000, starts, SPEC, cl.RngSpec(65))
        assert np.allclose(ps.spots, starts)


class TestEstimateLeverage:
    def test_undispersed_cloud_returns_empirical_second_moment(self):
        ps = cl.init_particles(5000, 1.0, SPEC, cl.RngSpec(66))
        curve = cl.estimate_leverage(ps)
        assert curve.bandwidth == 0.0
        assert np.all(curve.values == pytest.approx(
            float((ps.labels**2).mean()), rel=1e-15))

    def test_values_within_label_hull(self):
        rng = cl.RngSpec(67).generator()
        n = 20_000
        labels = np.where(rng.random(n) < 0.5, 0.8, 1.2)
        log_spots = rng.normal(0.0, 0.05, n)
        ps = cl.ParticleSystem(log_spots, labels, 0.0, SPEC)
        curve = cl.estimate_leverage(ps)
        assert curve.values.min() >= 0.64 - 1e-12
        assert curve.values.max() <= 1.44 + 1e-12

    def test_recovers_monotone_conditional_expectation(self):
        # labels correlated with spots: high label <-> high spot
        rng = cl.RngSpec(68).generator()
        n = 100_000
        z = rng.normal(0.0, 1.0, n)
        labels = np.where(z + 0.8 * rng.normal(size=n) > 0, 1.2, 0.8)
        ps = cl.ParticleSystem(0.05 * z, labels, 0.0, SPEC)
        curve = cl.estimate_leverage(ps)
        grid = curve.x_grid
        inner = (grid > np.quantile(ps.log_spots, 0.1)) & \
                (grid < np.quantile(ps.log_spots, 0.9))
        vals = curve.values[inner]
        assert vals[-1] > vals[0] + 0.3
        assert np.all(np.diff(vals) > -0.02)

    def test_silverman_bandwidth(self):
        x = cl.RngSpec(69).generator().normal(0.0, 0.05, 10_000)
        assert cl.slv.silverman_bandwidth(x) == pytest.approx(
            1.06 * x.std() * 10_000 ** (-0.2), rel=1e-12)


class TestStepParticles:
    def test_degenerate_spec_is_exact_gbm_step(self):
        spec = cl.BernoulliSpec(y_minus=1.0, y_plus=1.0, q_minus=0.5)
        ps = cl.init_particles(2000, 1.0, spec, cl.RngSpec(70))
        curve = cl.estimate_leverage(ps)
        dt = 0.01
        stepped = cl.step_particles(ps, dt, SIGMA0, curve, cl.RngSpec(71))
        z = cl.RngSpec(71).generator().standard_normal(2000)
        expected = -0.5 * SIGMA0**2 * dt + SIGMA0 * math.sqrt(dt) * z
        np.testing.assert_allclose(stepped.log_spots, expected, rtol=1e-12)

    def test_martingale_step(self):
        ps = cl.init_particles(200_000, 1.0, SPEC, cl.RngSpec(72))
        curve = cl.estimate_leverage(ps)
        stepped = cl.step_particles(ps, 0.01, SIGMA0, curve, cl.RngSpec(73))
        s = stepped.spots
        assert abs(s.mean() - 1.0) < 4.0 * weighted_sample_se(s)

    def test_instantaneous_variance_range(self):
        ps = cl.init_particles(5000, 1.0, SPEC, cl.RngSpec(74))
        for _ in range(3):
            curve = cl.estimate_leverage(ps)
            f = curve(ps.log_spots)
            var = SIGMA0**2 * ps.labels**2 / f
            lo = SIGMA0**2 * SPEC.y_minus**2 / SPEC.y_plus**2
            hi = SIGMA0**2 * SPEC.y_plus**2 / SPEC.y_minus**2
            assert np.all(var >= lo - 1e-12)
            assert np.all(var <= hi + 1e-12)
            ps = cl.step_particles(ps, 0.005, SIGMA0, curve, cl.RngSpec(75))


class TestRunCalibration:
    def test_degenerate_spec_reproduces_gbm(self):
        spec = cl.BernoulliSpec(y_minus=1.0, y_plus=1.0, q_minus=0.5)
        res = cl.run_calibration(0.0, 0.1, 0.01, 20_000, spec, SIGMA0, 1.0,
                                 cl.RngSpec(76))
        assert np.all(res.surface.values == pytest.approx(1.0, rel=1e-15))
        logs = res.particles.log_spots
        ks = stats.kstest(logs, "norm",
                          args=(-0.5 * SIGMA0**2 * 0.1,
                                SIGMA0 * math.sqrt(0.1)))
        assert ks.statistic < 1.63 / math.sqrt(20_000)

    def test_flatness_and_ranges_at_reduced_size(self):
        res = cl.run_calibration(0.0, 1.1 * TAU, TAU / 64, 50_000, SPEC,
                                 SIGMA0, 1.0, cl.RngSpec(77), tau=TAU)
        assert res.surface.values.min() >= SPEC.y_minus**2 - 1e-12
        assert res.surface.values.max() <= SPEC.y_plus**2 + 1e-12
        flat = cl.flatness_report(res.particles, res.surface, SIGMA0)
        assert flat.max_abs_rel_dev < 0.02

    def test_marginals_match_flat_vol(self):
        res = cl.run_calibration(0.0, 1.1 * TAU, TAU / 64, 100_000, SPEC,
                                 SIGMA0, 1.0, cl.RngSpec(78), tau=TAU)
        s = res.particles.spots
        t = res.particles.time
        for k in (0.95, 1.0, 1.05):
            pay = np.maximum(s - k, 0.0)
            se = weighted_sample_se(pay)
            exact = oracle_bs_call(1.0, k, SIGMA0**2 * t)
            assert abs(pay.mean() - exact) < 3.5 * se

    def test_rejects_horizon_shorter_than_window(self):
        with pytest.raises(ValueError):
            cl.run_calibration(0.0, 0.5 * TAU, 0.01, 2000, SPEC, SIGMA0, 1.0,
                               cl.RngSpec(79), tau=TAU)


class TestSlvVix2:
    @pytest.fixture(scope="class")
    def calibrated(self):
        return cl.run_calibration(0.0, 1.1 * TAU, TAU / 64, 100_000, SPEC,
                                  SIGMA0, 1.0, cl.RngSpec(80), tau=TAU)

    def test_degenerate_spec_gives_flat_vix2(self):
        spec = cl.BernoulliSpec(y_minus=1.0, y_plus=1.0, q_minus=0.5)
        res = cl.run_calibration(0.0, 1.1 * TAU, TAU / 32, 5000, spec, SIGMA0,
                                 1.0, cl.RngSpec(81), tau=TAU)
        v = cl.slv_vix2(res.surface, 1.0, spec, SIGMA0, 0.0, TAU, 500, 40,
                        cl.RngSpec(82))
        assert v.factor_minus == pytest.approx(1.0, rel=1e-13)
        assert v.factor_plus == pytest.approx(1.0, rel=1e-13)
        np.testing.assert_allclose(v.distribution.values, SIGMA0**2,
                                   rtol=1e-13)

    def test_factors_inside_reciprocal_hull(self, calibrated):
        v = cl.slv_vix2(calibrated.surface, 1.0, SPEC, SIGMA0, 0.0, TAU,
                        5000, 64, cl.RngSpec(83))
        lo, hi = 1.0 / SPEC.y_plus**2, 1.0 / SPEC.y_minus**2
        assert lo < v.factor_minus < hi
        assert lo < v.factor_plus < hi

    def test_tower_identity(self, calibrated):
        v = cl.slv_vix2(calibrated.surface, 1.0, SPEC, SIGMA0, 0.0, TAU,
                        20_000, 128, cl.RngSpec(84))
        mean = (SPEC.q_minus * SPEC.y_minus**2 * v.factor_minus
                + SPEC.q_plus * SPEC.y_plus**2 * v.factor_plus)
        se = math.hypot(SPEC.q_minus * SPEC.y_minus**2 * v.se_minus,
                        SPEC.q_plus * SPEC.y_plus**2 * v.se_plus)
        assert abs(mean - 1.0) < 3 * se

    def test_atoms_are_separated(self, calibrated):
        v = cl.slv_vix2(calibrated.surface, 1.0, SPEC, SIGMA0, 0.0, TAU,
                        5000, 64, cl.RngSpec(85))
        gap = v.distribution.values[1] - v.distribution.values[0]
        pooled = math.hypot(*v.distribution.std_errors)
        assert gap > 6 * pooled

    def test_rejects_wrong_maturity(self, calibrated):
        with pytest.raises(ValueError):
            cl.slv_vix2(calibrated.surface, 1.0, SPEC, SIGMA0, 0.01, TAU,
                        100, 10, cl.RngSpec(86))


class TestPreservedOrderReport:
    def test_degenerate_two_atoms_equal(self):
        d = cl.Vix2Distribution(np.array([SIGMA0**2, SIGMA0**2]),
                                np.array([0.5, 0.5]), np.zeros(2),
                                "slv-two-point")
        rep = cl.preserved_order_report(d, SIGMA0)
        assert rep.verdict == "equal"

    def test_mean_preserving_two_atoms_dominate_point(self):
        d = cl.Vix2Distribution(np.array([0.03, 0.05]), np.array([0.5, 0.5]),
                                np.zeros(2), "slv-two-point")
        rep = cl.preserved_order_report(d, SIGMA0)
        assert rep.verdict == "preserved"
        k = int(np.argmin(np.abs(rep.strikes - SIGMA0**2)))
        assert rep.gaps[k] == pytest.approx(-0.01, abs=2e-3)

    def test_calibrated_run_is_preserved(self):
        res = cl.run_calibration(0.0, 1.1 * TAU, TAU / 64, 50_000, SPEC,
                                 SIGMA0, 1.0, cl.RngSpec(87), tau=TAU)
        v = cl.slv_vix2(res.surface, 1.0, SPEC, SIGMA0, 0.0, TAU, 10_000, 64,
                        cl.RngSpec(88))
        rep = cl.preserved_order_report(v.distribution, SIGMA0)
        assert rep.verdict == "preserved"
