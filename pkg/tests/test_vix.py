import math

import numpy as np
import pytest

import convexlab as cl
from conftest import TAU

T_FIG = 0.05


class TestVix2StochConstant:
    def test_flat_model_gives_sigma0_squared(self, flat_model):
        v = cl.vix2_stoch_constant(flat_model, 0.05)
        assert v == pytest.approx(flat_model.sigma0**2, rel=1e-14)

    def test_fig1_value(self, fig1_model):
        # hand value: (2 sigma0^2 + hi^2 + lo^2) / 4
        expected = (2 * 0.04 + 0.0625 + 0.0004) / 4
        assert expected == pytest.approx(0.035725, rel=1e-15)
        assert cl.vix2_stoch_constant(fig1_model, T_FIG) == pytest.approx(
            0.035725, rel=1e-12)

    def test_expected_vix_is_square_root(self, fig1_model):
        v = cl.vix2_stoch_constant(fig1_model, T_FIG)
        assert math.sqrt(v) == pytest.approx(0.189010581714358, rel=1e-12)

    def test_rejects_maturity_at_or_after_switch(self, fig1_model):
        with pytest.raises(ValueError):
            cl.vix2_stoch_constant(fig1_model, fig1_model.t1)


class TestForwardVarianceLimit:
    def test_fig1_value(self, fig1_model):
        # half window at sigma0^2, half at the high level squared
        assert 0.5 * (0.04 + 0.0625) == pytest.approx(0.05125, rel=1e-15)
        assert cl.forward_variance_limit(fig1_model, T_FIG) == pytest.approx(
            0.05125, rel=1e-12)

    def test_flat_model_equals_constant(self, flat_model):
        ell = cl.forward_variance_limit(flat_model, 0.05)
        assert ell == pytest.approx(cl.vix2_stoch_constant(flat_model, 0.05),
                                    rel=1e-14)

    def test_never_below_the_constant(self, general3_model):
        for T in np.linspace(0.01, general3_model.t1 * 0.99, 7):
            ell = cl.forward_variance_limit(general3_model, T)
            v2 = cl.vix2_stoch_constant(general3_model, T)
            assert ell >= v2 - 1e-15

    def test_integrates_through_a_crossing(self):
        # dominant path switches inside the window; integrate piecewise
        p1 = cl.VolPath([0.0, 0.01], [0.2, 0.30])
        p2 = cl.VolPath([0.0, 0.01, 0.05], [0.2, 0.10, 0.45])
        m = cl.MixtureModel([p1, p2], [0.5, 0.5], 0.2, 0.01)
        T = 0.005
        ell = cl.forward_variance_limit(m, T)
        # independent fine Riemann sum of the dominant variance
        ts = np.linspace(T, T + m.tau, 400001)
        mids = 0.5 * (ts[:-1] + ts[1:])
        vals = np.array([cl.dominant_set(m, t).sigma_bar_sq for t in
                         mids[:: 400]])
        riemann = float(np.mean([cl.dominant_set(m, t).sigma_bar_sq
                                 for t in mids[::400]]))
        assert ell == pytest.approx(riemann, abs=2e-4)
        assert vals.min() < vals.max()  # the crossing actually bites


class TestPsiAt:
    def test_constant_surface_is_exact_with_zero_se(self, flat_model,
                                                    flat_surface):
        psi, se = cl.psi_at(flat_surface, 0.05, 1.0, 200, 40, cl.RngSpec(41))
        assert psi == pytest.approx(flat_model.sigma0**2, rel=1e-13)
        assert se < 1e-16

    def test_fig1_values_lie_in_analytic_band(self, fig1_surface):
        lo = 0.5 * (0.04 + 0.0004)
        hi = 0.05125
        for x in (0.7, 1.0, 1.5):
            psi, se = cl.psi_at(fig1_surface, T_FIG, x, 4000, 100,
                                cl.RngSpec(42))
            assert lo - 3 * se < psi < hi + 3 * se

    def test_far_tail_approaches_upper_limit(self, fig1_surface):
        # at log-moneyness 1.5 the gap to the limit is ~1e-4 (it shrinks
        # like 1/log(x)^2, so the plain-tolerance band is reachable there)
        psi, se = cl.psi_at(fig1_surface, T_FIG, math.exp(1.5), 20000, 200,
                            cl.RngSpec(43))
        assert psi < 0.05125
        assert 0.05125 - psi < max(3 * se, 2e-4)


class TestVix2LocDistribution:
    def test_constant_model_collapses_to_point(self, flat_model, flat_surface):
        dist, curve = cl.vix2_loc_distribution(flat_surface, 0.05, 8, 200, 40,
                                               cl.RngSpec(44))
        assert np.all(np.abs(dist.values - flat_model.sigma0**2)
                      < 1e-13 * flat_model.sigma0**2)
        assert dist.mean() == pytest.approx(flat_model.sigma0**2, rel=1e-13)

    def test_same_mean_identity(self, fig1_model, fig1_surface):
        dist, _ = cl.vix2_loc_distribution(fig1_surface, T_FIG, 32, 8000, 100,
                                           cl.RngSpec(45))
        v2 = cl.vix2_stoch_constant(fig1_model, T_FIG)
        # Monte Carlo SE plus a discretization allowance
        assert abs(dist.mean() - v2) < max(3 * dist.mean_se(), 5e-4)

    def test_non_constancy_is_significant(self, fig1_surface):
        dist, curve = cl.vix2_loc_distribution(fig1_surface, T_FIG, 32, 8000,
                                               100, cl.RngSpec(46))
        spread = curve.estimates.max() - curve.estimates.min()
        pooled = math.hypot(curve.std_errors[np.argmax(curve.estimates)],
                            curve.std_errors[np.argmin(curve.estimates)])
        assert spread > 6 * pooled

    def test_estimates_stay_below_limit(self, fig1_model, fig1_surface):
        dist, curve = cl.vix2_loc_distribution(fig1_surface, T_FIG, 32, 4000,
                                               100, cl.RngSpec(47))
        ell = cl.forward_variance_limit(fig1_model, T_FIG)
        assert np.all(curve.estimates < ell)

    def test_thread_count_does_not_change_results(self, fig1_surface):
        kw = dict(T=T_FIG, n_quad_nodes=12, inner_paths=500, n_steps=30)
        a, _ = cl.vix2_loc_distribution(fig1_surface, rng=cl.RngSpec(48),
                                        threads=1, **kw)
        b, _ = cl.vix2_loc_distribution(fig1_surface, rng=cl.RngSpec(48),
                                        threads=4, **kw)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.std_errors, b.std_errors)

    def test_rejects_maturity_outside_prefix(self, fig1_surface):
        with pytest.raises(ValueError):
            cl.vix2_loc_distribution(fig1_surface, 0.12, 8, 100, 20,
                                     cl.RngSpec(49))


class TestVixFutures:
    def test_point_mass(self):
        d = cl.Vix2Distribution.point_mass(0.04)
        fut = cl.vix_futures(d, d)
        assert fut.future_stoch == pytest.approx(0.2, rel=1e-15)
        assert fut.gap == 0.0

    def test_two_point_spread_is_cheaper(self):
        # strict concavity: sqrt(m) > mean of sqrt(m -/+ d)
        m, d = 0.04, 0.01
        point = cl.Vix2Distribution.point_mass(m)
        spread = cl.Vix2Distribution(np.array([m - d, m + d]),
                                     np.array([0.5, 0.5]),
                                     np.zeros(2), "loc-quadrature")
        fut = cl.vix_futures(point, spread)
        expected = math.sqrt(m) - 0.5 * (math.sqrt(m - d) + math.sqrt(m + d))
        assert expected > 0
        assert fut.gap == pytest.approx(expected, rel=1e-14)
        assert fut.ci99[0] > 0  # zero SEs: the CI is the point itself

    def test_se_propagation(self):
        d = cl.Vix2Distribution(np.array([0.04]), np.array([1.0]),
                                np.array([1e-4]), "loc-quadrature")
        fut = cl.vix_futures(cl.Vix2Distribution.point_mass(0.04), d)
        assert fut.se_loc == pytest.approx(1e-4 / (2 * 0.2), rel=1e-12)


class TestConvexOrderReport:
    def test_identical_point_masses_are_equal(self):
        a = cl.Vix2Distribution.point_mass(0.0357)
        rep = cl.convex_order_report(a, a)
        assert rep.verdict == "equal"
        assert np.all(rep.gaps == 0.0)

    def test_mean_preserving_spread_gap_value(self):
        a = cl.Vix2Distribution.point_mass(0.0357)
        b = cl.Vix2Distribution(np.array([0.0307, 0.0407]),
                                np.array([0.5, 0.5]), np.zeros(2),
                                "loc-quadrature")
        rep = cl.convex_order_report(a, b, n_strikes=21)
        k = int(np.argmin(np.abs(rep.strikes - 0.0357)))
        # E[(B-K)+] - E[(A-K)+] at K = mean: 0.5 * 0.005
        assert rep.strikes[k] == pytest.approx(0.0357, abs=1e-3)
        gap_at_mean = 0.5 * (0.0407 - 0.0357)
        assert rep.gaps[k] == pytest.approx(gap_at_mean, abs=2e-4)
        assert rep.verdict == "inverted"

    def test_crossing_supports_are_non_rankable(self):
        a = cl.Vix2Distribution(np.array([0.0, 3.0]),
                                np.array([1 / 3, 2 / 3]), np.zeros(2),
                                "stoch-constant")
        b = cl.Vix2Distribution(np.array([1.0, 4.0]),
                                np.array([2 / 3, 1 / 3]), np.zeros(2),
                                "loc-quadrature")
        assert a.mean() == pytest.approx(b.mean(), rel=1e-15)
        rep = cl.convex_order_report(a, b, n_strikes=41)
        assert rep.verdict == "non-rankable"

    def test_mean_mismatch_is_flagged(self):
        a = cl.Vix2Distribution.point_mass(0.04)
        b = cl.Vix2Distribution.point_mass(0.05)
        rep = cl.convex_order_report(a, b)
        assert rep.verdict == "non-rankable"
        assert any("mean" in n for n in rep.notes)

    def test_stoch_dominant_is_preserved(self):
        a = cl.Vix2Distribution(np.array([0.03, 0.05]), np.array([0.5, 0.5]),
                                np.zeros(2), "slv-two-point")
        b = cl.Vix2Distribution.point_mass(0.04)
        rep = cl.convex_order_report(a, b)
        assert rep.verdict == "preserved"

    def test_noise_only_gaps_are_inconclusive(self):
        a = cl.Vix2Distribution(np.array([0.04]), np.array([1.0]),
                                np.array([1e-3]), "loc-quadrature")
        b = cl.Vix2Distribution(np.array([0.0401]), np.array([1.0]),
                                np.array([1e-3]), "loc-quadrature")
        rep = cl.convex_order_report(a, b)
        assert rep.verdict == "inconclusive"

    def test_fig1_pipeline_is_inverted(self, fig1_model, fig1_surface):
        dist, _ = cl.vix2_loc_distribution(fig1_surface, T_FIG, 32, 8000, 100,
                                           cl.RngSpec(50))
        v2 = cl.vix2_stoch_constant(fig1_model, T_FIG)
        rep = cl.convex_order_report(cl.Vix2Distribution.point_mass(v2), dist)
        assert rep.verdict == "inverted"
        assert np.all(rep.gaps > -3 * rep.gap_ses)


class TestJensenDirection:
    def test_loc_call_gaps_nonnegative_at_all_strikes(self, fig1_model,
                                                      fig1_surface):
        dist, _ = cl.vix2_loc_distribution(fig1_surface, T_FIG, 32, 4000, 100,
                                           cl.RngSpec(51))
        v2 = cl.vix2_stoch_constant(fig1_model, T_FIG)
        rep = cl.convex_order_report(cl.Vix2Distribution.point_mass(v2), dist)
        assert np.all(rep.gaps >= -3 * rep.gap_ses)
