import math

import numpy as np
import pytest

from polyflow.geometry import (BumpFamily, BumpProfile, GridFunction, ScaleStructure,
                               beta, chart, chart_inverse, decay_check, derivative,
                               gamma_tau, grid_norm, inner, lift_field, retract,
                               retract_differential, rho_tau, scale_norm, shift)
from polyflow.omega import OmegaConfig, StatePoint

CFG = OmegaConfig(n=1, m=2, tau0=-3.0, tau1=0.0, tau2=1.0, tau_x=-7.0, tau_y=8.0)
FAMILY = BumpFamily.build(2)

# tau samples clear of the interval endpoints: close enough that the
# shift is large, far enough that the supports stay on the grid and the
# finite-difference rate stays accurate
TAUS_BELOW = np.linspace(-5.0, -0.85, 10)
TAUS_ABOVE = np.linspace(1.85, 6.0, 10)


def random_grid_function(rng, grid=None):
    """A few random gaussians sampled on the grid."""
    gf = (grid or FAMILY.profiles[0].sample(0.0)).zero_like()
    s = gf.s()
    for _ in range(3):
        c = rng.uniform(-20.0, 5.0)
        w = rng.uniform(0.5, 3.0)
        a = rng.normal()
        gf.values += a * np.exp(-((s - c) / w) ** 2)
    return gf


class TestBeta:
    def test_closed_form_value(self):
        assert beta(-1.0, 0.0, 1.0) == pytest.approx(math.exp(0.5), rel=1e-12)

    def test_reflection_symmetry(self):
        for d in (0.1, 0.5, 2.0, 17.0):
            lo = beta(0.0 - d, 0.0, 1.0)
            hi = beta(1.0 + d, 0.0, 1.0)
            assert lo == pytest.approx(hi, rel=1e-14)

    def test_far_field_limit(self):
        assert beta(-1e9, 0.0, 1.0) == pytest.approx(1.0, abs=1e-8)

    def test_divergence_at_endpoints(self):
        assert beta(-1e-9, 0.0, 1.0) > 1e100
        assert beta(1.0 + 1e-9, 0.0, 1.0) > 1e100

    def test_domain_error_inside(self):
        for tau in (0.0, 0.5, 1.0):
            with pytest.raises(ValueError):
                beta(tau, 0.0, 1.0)


class TestShiftedProfiles:
    def test_far_below_shift_is_about_one(self):
        g = gamma_tau(FAMILY.profiles[0], -1e6, CFG)
        s = g.s()
        peak = s[np.argmax(g.values)]
        assert peak == pytest.approx(-1.0, abs=0.02)

    def test_orthogonality_of_profile_and_rate(self):
        for tau in np.concatenate([TAUS_BELOW, TAUS_ABOVE]):
            for p in FAMILY.profiles:
                g = gamma_tau(p, tau, CFG)
                r = rho_tau(p, tau, CFG)
                assert abs(inner(g, r)) <= 1e-6

    def test_support_leaving_grid_truncates_to_zero(self):
        g = gamma_tau(FAMILY.profiles[0], -0.2, CFG)  # beta ~ 64, support off-grid
        assert np.all(g.values == 0.0)

    def test_plain_gridfunction_shift_interpolates(self):
        gf = FAMILY.profiles[0].sample(0.0)
        moved = shift(gf, 2.0)
        s = gf.s()
        assert moved.values[np.argmin(np.abs(s + 2.0))] == pytest.approx(gf.values[np.argmin(np.abs(s))], rel=1e-3)


class TestScaleNorm:
    SC = ScaleStructure.default(5)

    def test_zero_function(self):
        z = FAMILY.profiles[0].sample(0.0).zero_like()
        for k in range(6):
            assert scale_norm(z, k, self.SC) == 0.0

    def test_unit_bump_at_scale_zero(self):
        g = FAMILY.profiles[0].sample(0.0)
        assert scale_norm(g, 0, self.SC) == pytest.approx(1.0, abs=1e-6)

    def test_nesting(self):
        rng = np.random.default_rng(3)
        fns = [FAMILY.profiles[0].sample(0.0)] + [random_grid_function(rng) for _ in range(4)]
        for f in fns:
            norms = [scale_norm(f, k, self.SC) for k in range(6)]
            for a, b in zip(norms, norms[1:]):
                assert a <= b * (1 + 1e-12)

    def test_out_of_range_k(self):
        g = FAMILY.profiles[0].sample(0.0)
        with pytest.raises(ValueError):
            scale_norm(g, 6, self.SC)

    def test_alpha_is_odd_and_saturates(self):
        s = np.linspace(-3, 3, 101)
        a = ScaleStructure.alpha(s)
        assert np.allclose(a + ScaleStructure.alpha(-s), 0.0)
        assert np.all(a[s > 1] == 1.0)
        assert ScaleStructure.alpha(np.array([0.0]))[0] == 0.0


class TestFamily:
    def test_gram_is_identity(self):
        g = FAMILY.gram()
        assert np.max(np.abs(g - np.eye(2))) <= 1e-8

    def test_corrupted_normalization_fails_gram(self):
        bad = BumpFamily.build(2, scale=1.1)
        g = bad.gram()
        assert np.max(np.abs(g - np.eye(2))) > 1e-3


class TestRetract:
    def test_pinned_interval_kills_function(self):
        rng = np.random.default_rng(0)
        f = random_grid_function(rng)
        tau, x, out = retract((0.5, np.array([2.0]), f), FAMILY, CFG)
        assert np.all(out.values == 0.0)

    def test_identity_on_shifted_profile(self):
        g = gamma_tau(FAMILY.profiles[0], -1.0, CFG)
        _, _, out = retract((-1.0, np.array([0.0]), g), FAMILY, CFG)
        assert grid_norm(GridFunction(g.lo, g.hi, g.h, out.values - g.values)) <= 1e-9

    def test_idempotence_on_random_inputs(self):
        rng = np.random.default_rng(7)
        taus = list(rng.uniform(-5.0, -0.3, 40)) + list(rng.uniform(1.3, 6.0, 40)) + list(rng.uniform(0.0, 1.0, 20))
        for tau in taus:
            f = random_grid_function(rng)
            xi = (tau, np.array([rng.normal()]), f)
            r1 = retract(xi, FAMILY, CFG)
            r2 = retract(r1, FAMILY, CFG)
            diff = GridFunction(f.lo, f.hi, f.h, r2[2].values - r1[2].values)
            assert grid_norm(diff) <= 1e-10


class TestRetractDifferential:
    def test_pinned_interval_branch(self):
        rng = np.random.default_rng(1)
        f, g = random_grid_function(rng), random_grid_function(rng)
        sigma, dx, out = retract_differential((0.3, np.array([0.0]), f), (2.0, np.array([3.0]), g), FAMILY, CFG)
        assert sigma == 2.0 and np.all(out.values == 0.0)

    def test_projection_property(self):
        rng = np.random.default_rng(2)
        for tau in (-4.0, -1.0, 2.1, 5.0):
            f, g = random_grid_function(rng), random_grid_function(rng)
            xi = (tau, np.array([0.5]), f)
            v = (rng.normal(), np.array([rng.normal()]), g)
            dv = retract_differential(xi, v, FAMILY, CFG)
            r_xi = retract(xi, FAMILY, CFG)
            ddv = retract_differential(r_xi, dv, FAMILY, CFG)
            diff = GridFunction(f.lo, f.hi, f.h, ddv[2].values - dv[2].values)
            assert grid_norm(diff) <= 1e-8

    def test_tangent_profile_fixed(self):
        g = gamma_tau(FAMILY.profiles[0], -1.0, CFG)
        zero = g.zero_like()
        xi = (-1.0, np.array([0.0]), zero)
        sigma, _, out = retract_differential(xi, (0.0, np.array([0.0]), g), FAMILY, CFG)
        assert sigma == 0.0
        diff = GridFunction(g.lo, g.hi, g.h, out.values - g.values)
        assert grid_norm(diff) <= 1e-8


class TestChart:
    def test_unit_coefficient(self):
        g = gamma_tau(FAMILY.profiles[0], -1.0, CFG)
        p = chart((-1.0, np.array([0.7]), g), FAMILY, CFG)
        assert p.y[0] == pytest.approx(1.0, abs=1e-10)
        assert p.y[1] == pytest.approx(0.0, abs=1e-10)

    def test_pinned_interval_reads_zero(self):
        rng = np.random.default_rng(4)
        f = random_grid_function(rng)
        p = chart((0.25, np.array([0.0]), f), FAMILY, CFG)
        assert np.all(p.y == 0.0)

    def test_round_trips(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            p = StatePoint(-2.0, rng.normal(size=1), rng.normal(size=2))
            xi = chart_inverse(p, FAMILY, CFG)
            back = chart(xi, FAMILY, CFG)
            assert abs(back.tau - p.tau) == 0.0
            assert np.max(np.abs(back.y - p.y)) <= 1e-8
        for tau in (-1.5, 3.0):
            f = random_grid_function(rng)
            r = retract((tau, np.array([0.0]), f), FAMILY, CFG)
            again = chart_inverse(chart(r, FAMILY, CFG), FAMILY, CFG)
            diff = GridFunction(f.lo, f.hi, f.h, again[2].values - r[2].values)
            assert grid_norm(diff) <= 1e-8

    def test_inverse_rejects_nonzero_y_on_interval(self):
        with pytest.raises(ValueError):
            chart_inverse(StatePoint(0.5, np.zeros(1), np.array([0.1, 0.0])), FAMILY, CFG)


class TestLift:
    def test_pure_depth_velocity(self):
        p = StatePoint(-1.0, np.zeros(1), np.array([0.3, -0.2]))
        y1, y2, out = lift_field((15.0, np.zeros(1), np.zeros(2)), p, FAMILY, CFG)
        rho = FAMILY.shifted_rate(-1.0, CFG)
        expect = 15.0 * (0.3 * rho[0].values - 0.2 * rho[1].values)
        assert np.max(np.abs(out.values - expect)) <= 1e-10

    def test_pure_transverse_velocity(self):
        p = StatePoint(-1.0, np.zeros(1), np.zeros(2))
        _, _, out = lift_field((0.0, np.zeros(1), np.array([1.0, 0.0])), p, FAMILY, CFG)
        g = gamma_tau(FAMILY.profiles[0], -1.0, CFG)
        assert np.max(np.abs(out.values - g.values)) <= 1e-12

    def test_chart_differential_recovers_velocity(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            p = StatePoint(-1.0, rng.normal(size=1), rng.normal(size=2))
            Y = (rng.normal(), rng.normal(size=1), rng.normal(size=2))
            y1, y2, gvec = lift_field(Y, p, FAMILY, CFG)
            tau, x, f = chart_inverse(p, FAMILY, CFG)
            eps = 1e-5
            up = chart((tau + eps * y1, x + eps * y2, GridFunction(f.lo, f.hi, f.h, f.values + eps * gvec.values)), FAMILY, CFG)
            dn = chart((tau - eps * y1, x - eps * y2, GridFunction(f.lo, f.hi, f.h, f.values - eps * gvec.values)), FAMILY, CFG)
            dy = (up.y - dn.y) / (2 * eps)
            assert np.max(np.abs(dy - Y[2])) <= 1e-6
            assert np.max(np.abs((up.x - dn.x) / (2 * eps) - Y[1])) <= 1e-9

    def test_undefined_on_pinned_interval(self):
        p = StatePoint(0.5, np.zeros(1), np.zeros(2))
        with pytest.raises(ValueError):
            lift_field((1.0, np.zeros(1), np.zeros(2)), p, FAMILY, CFG)


class TestDecayCheck:
    SC = ScaleStructure.default(5)

    def test_exact_zero_tail_passes(self):
        t = np.linspace(0.0, 0.45, 100)
        taus = -7.0 + 15.0 * t
        ys = np.where(taus[:, None] > -2.5, 0.0, 1.0)
        res = decay_check(t, taus, ys, self.SC, CFG)
        assert all(r.passed for r in res)

    def test_constant_y_fails(self):
        t = np.linspace(0.0, 0.45, 100)
        taus = -7.0 + 15.0 * t
        ys = np.full((100, 1), 0.5)
        res = decay_check(t, taus, ys, self.SC, CFG)
        assert not any(r.passed for r in res if r.scale >= 1)

    def test_empty_trajectory_rejected(self):
        with pytest.raises(ValueError):
            decay_check([], [], np.zeros((0, 1)), self.SC, CFG)


class TestGridFunction:
    def test_csv_round_trip(self, tmp_path):
        g = FAMILY.profiles[0].sample(0.3)
        path = tmp_path / "g.csv"
        g.to_csv(path)
        back = GridFunction.from_csv(path)
        assert np.array_equal(back.values, g.values)
        assert (back.lo, back.hi) == (g.lo, g.hi)

    def test_bad_grid_rejected(self):
        with pytest.raises(ValueError):
            GridFunction(0.0, 1.0, 0.1, np.zeros(5))

    def test_derivative_of_linear_is_constant(self):
        g = GridFunction.from_callable(lambda s: 3.0 * s, -1.0, 1.0, 0.01)
        d = derivative(g)
        assert np.allclose(d.values, 3.0, atol=1e-9)


class TestOmegaValidation:
    def test_ordering_invariant_enforced(self):
        with pytest.raises(ValueError):
            OmegaConfig(n=1, m=1, tau0=0.0, tau1=-1.0, tau2=1.0, tau_x=-7.0, tau_y=8.0)
        with pytest.raises(ValueError):
            OmegaConfig(n=0, m=1, tau0=-3.0, tau1=0.0, tau2=1.0, tau_x=-7.0, tau_y=8.0)

    def test_state_point_membership(self):
        cfg = OmegaConfig(n=1, m=2, tau0=-3.0, tau1=0.0, tau2=1.0, tau_x=-7.0, tau_y=8.0)
        StatePoint(0.5, np.zeros(1), np.zeros(2)).validate(cfg)
        with pytest.raises(ValueError):
            StatePoint(0.5, np.zeros(1), np.array([0.1, 0.0])).validate(cfg)
        p = StatePoint(-2.0, np.zeros(1), np.array([1.0, 2.0])).validate(cfg)
        assert np.array_equal(StatePoint.from_vector(p.as_vector(), cfg).y, p.y)
