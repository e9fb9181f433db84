import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from cqnls.grid import Field2D, RadialProfile, lp_project, make_grid, radial_average, smooth_step
from cqnls.inout import (
    FreqDecayMonitor,
    MeshMismatchError,
    PowerIterationError,
    PvKernelPlan,
    band_profile,
    fit_decay_constant,
    freq_decay_scan,
    inout_apply,
    inout_band,
    inout_norm_estimate,
    mismatch_norm,
    operator_norm,
    principal_value,
    random_radial_profiles,
)
from cqnls.experiments import outgoing_chirp_fraction
from cqnls.propagator import evolve


def gaussian_profile(m=400, r_max=12.0, phase=0.0):
    prof = RadialProfile.midpoint(m, r_max)
    r = prof.r_values
    return prof.with_samples(np.exp(-(r**2) / 2 + 1j * phase * r**2))


class TestProjection:
    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_reconstruction(self, seed):
        f = next(random_radial_profiles(300, 15.0, 1, np.random.default_rng(seed)))
        total = inout_apply(f, 1).samples + inout_apply(f, -1).samples
        diff = f.with_samples(total - f.samples)
        assert diff.l2_norm() <= 1e-13 * f.l2_norm()

    def test_real_input_conjugate_pair(self):
        f = gaussian_profile()
        np.testing.assert_array_equal(inout_apply(f, -1).samples, inout_apply(f, 1).samples.conj())

    def test_pv_against_quadrature(self):
        f = gaussian_profile(m=1600, r_max=10.0)
        pv = principal_value(f)
        for j in (100, 400, 900):
            r = f.r_values[j]
            # PV int_0^a g(rho) / (r^2 - rho^2) = -PV int g(rho) / ((rho + r)(rho - r))
            val, _ = quad(lambda p: -p * np.exp(-(p**2) / 2) / (p + r), 0, 10.0, weight="cauchy", wvar=r, epsabs=1e-13)
            assert pv[j].real == pytest.approx(val, abs=2e-5)

    def test_pv_second_order(self):
        r_probe = 2.0
        errs = []
        for m in (200, 400, 800):
            f = gaussian_profile(m=m, r_max=10.0)
            j = int(np.argmin(np.abs(f.r_values - r_probe)))
            r = f.r_values[j]
            exact, _ = quad(lambda p: -p * np.exp(-(p**2) / 2) / (p + r), 0, 10.0, weight="cauchy", wvar=r, epsabs=1e-14)
            errs.append(abs(principal_value(f)[j].real - exact))
        assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0

    def test_mesh_mismatch(self):
        plan = PvKernelPlan.for_mesh(gaussian_profile(m=100))
        with pytest.raises(MeshMismatchError):
            inout_apply(gaussian_profile(m=200), 1, plan)

    def test_bad_sign(self):
        with pytest.raises(ValueError):
            inout_apply(gaussian_profile(), 0)

    def test_norm_estimate_stable(self):
        coarse = inout_norm_estimate(300, 15.0, trials=40, seed=2)
        fine = inout_norm_estimate(600, 15.0, trials=40, seed=2)
        assert abs(fine - coarse) <= 0.1 * coarse
        assert 0.5 < coarse < 1.5


class TestBand:
    @pytest.fixture
    def grid(self):
        return make_grid(256, 20.0)

    def test_sum_over_sign(self, grid):
        f = gaussian_profile(m=400, r_max=20.0, phase=0.3)
        plus = inout_band(f, 2.0, 1, grid)
        minus = inout_band(f, 2.0, -1, grid)
        np.testing.assert_allclose(plus.samples + minus.samples, band_profile(f, 2.0, grid).samples, atol=1e-13)

    def test_band_profile_matches_grid_projection(self, grid):
        f = gaussian_profile(m=400, r_max=20.0, phase=0.3)
        from cqnls.grid import radial_lift

        direct = radial_average(lp_project(radial_lift(f, grid), "band", 2.0), 400, 20.0)
        np.testing.assert_allclose(band_profile(f, 2.0, grid).samples, direct.samples, atol=1e-14)

    @pytest.mark.parametrize("N", [0.01, 100.0])
    def test_unresolved_N(self, grid, N):
        with pytest.raises(ValueError):
            inout_band(gaussian_profile(m=400, r_max=20.0), N, 1, grid)

    def test_outgoing_chirp(self):
        assert outgoing_chirp_fraction(make_grid(512, 40.0), m=800) <= 0.2

    def test_incoming_chirp_is_incoming(self):
        # reversed chirp at t = -1 is the time reverse of the outgoing one
        frac = outgoing_chirp_fraction(make_grid(512, 40.0), chirp=-0.25, t=-1.0, m=800)
        assert frac >= 5.0


class TestOperatorNorm:
    def test_diagonal_matrix(self):
        d = np.linspace(0.1, 3.0, 50)
        est = operator_norm(lambda x: (d * x,), lambda ys: d * ys[0], (50,), restarts=4, rtol=1e-8, max_sweeps=2000)
        assert est.value == pytest.approx(3.0, rel=1e-3)

    def test_non_convergence(self):
        d = np.linspace(0.1, 3.0, 50)
        with pytest.raises(PowerIterationError):
            operator_norm(lambda x: (d * x,), lambda ys: d * ys[0], (50,), max_sweeps=1)


class TestMismatch:
    @pytest.fixture
    def grid(self):
        return make_grid(256, 48.0)

    def test_decay_in_R(self, grid):
        e4 = mismatch_norm("cutoff_gradient", 4.0, 4.0, grid, trials=4)
        e8 = mismatch_norm("cutoff_gradient", 8.0, 4.0, grid, trials=4)
        assert e8.value <= 0.25 * e4.value
        assert e8.value <= e4.value * (1 + e4.spread)

    def test_identity_hook_is_bernstein(self, grid):
        s = np.linspace(1.0, 2.0, 20001)
        bernstein = 4.0 * np.max(s * smooth_step(s))
        est = mismatch_norm("identity_exterior", 4.0, 4.0, grid, trials=4)
        assert est.value == pytest.approx(bernstein, rel=0.2)
        assert est.value <= bernstein * (1 + 1e-3)

    def test_band_kind_small(self, grid):
        assert mismatch_norm("cutoff_band", 8.0, 1.0, grid, trials=4).value < 1e-2

    def test_zero_hook(self, grid):
        assert mismatch_norm("zero", 4.0, 4.0, grid).value == 0.0

    def test_validation(self, grid):
        with pytest.raises(ValueError):
            mismatch_norm("cutoff_gradient", 0.5, 4.0, grid)
        with pytest.raises(ValueError):
            mismatch_norm("bogus", 4.0, 4.0, grid)


class TestFrequencyDecay:
    @pytest.fixture
    def setup(self):
        g = make_grid(256, 12.0)  # pi/h > 32
        u0 = g.from_radial(lambda r: 0.8 * np.exp(-(r**2) / 8))
        return g, u0

    def test_initial_time_only(self, setup):
        g, u0 = setup
        table = freq_decay_scan([(0.0, u0)], u0, [2.0, 4.0])
        ext = 1.0 - smooth_step(g.radius)
        for row in table:
            expected = Field2D(g, ext * lp_project(u0, "band", row["N"]).values).norm()
            assert row["sup_exterior"] == pytest.approx(expected, rel=1e-12)
            assert row["initial_band"] == pytest.approx(lp_project(u0, "band", row["N"]).norm(), rel=1e-12)

    def test_rejects_low_N(self, setup):
        _, u0 = setup
        with pytest.raises(ValueError):
            FreqDecayMonitor(u0, [0.5])
        with pytest.raises(ValueError):
            FreqDecayMonitor(u0, [2.0], radius=0.5)

    def test_wide_gaussian_decay(self, setup):
        _, u0 = setup
        mon = FreqDecayMonitor(u0, [8.0, 16.0, 32.0])
        evolve(u0, 2.0, 0.01, cadence=10, callback=mon)
        table = mon.table()
        C = table[0]["sup_exterior"] * 8.0**1.2
        for row in table:
            assert row["sup_exterior"] <= C * row["N"] ** -1.2 * (1 + 1e-12)
        assert fit_decay_constant(table) >= table[0]["sup_exterior"] / (table[0]["initial_band"] + 8.0**-1.2) * 0.999

    def test_larger_exterior_radius_smaller(self, setup):
        g, u0 = setup
        fields = []
        evolve(u0, 1.0, 0.01, cadence=20, callback=lambda t, u: fields.append((t, u)))
        small = freq_decay_scan(fields, u0, [2.0, 4.0], radius=1.0)
        large = freq_decay_scan(fields, u0, [2.0, 4.0], radius=3.0)
        for a, b in zip(small, large):
            assert b["sup_exterior"] <= a["sup_exterior"] + 1e-15
