"""Characteristic ODE integration, omega construction, utility inversion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rumkit import characteristics, symmetry
from rumkit.errors import CoverageError, LevelRangeError, ValidationError

BOX = ((1.0, 4.0), (1.0, 4.0))


def t_10():
    return symmetry.RatioFunction.from_callable(
        lambda aj, a0: aj / (2.0 * a0), BOX, j=1, m=0
    )


def t_20():
    return symmetry.RatioFunction.from_callable(
        lambda aj, a0: 2.0 * aj / a0, BOX, j=2, m=0
    )


class TestIntegrateCharacteristic:
    def test_log_model_separable_solution(self):
        # da_1/da_0 = a_1/(2 a_0) has solution a_1 = C sqrt(a_0)
        path = characteristics.integrate_characteristic(t_10(), (1.0, 1.0), 4.0, 0.01)
        a0_end, aj_end = path.endpoint()
        assert a0_end == pytest.approx(4.0, abs=1e-12)
        assert abs(aj_end - 2.0) <= 1e-8

    def test_rk4_order(self):
        errs = []
        for step in (0.01, 0.005):
            path = characteristics.integrate_characteristic(t_10(), (1.0, 1.0), 4.0, step)
            errs.append(abs(path.endpoint()[1] - 2.0))
        assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.25)

    def test_flat_characteristic(self):
        t = symmetry.RatioFunction.from_callable(lambda aj, a0: 0.0 * aj, BOX)
        path = characteristics.integrate_characteristic(t, (1.0, 2.5), 4.0, 0.05)
        assert np.allclose(path.aj, 2.5, atol=1e-14)

    def test_unit_slope_characteristic(self):
        # da_j/da_0 = 1: a_j - a_0 constant (no-income-effect geometry)
        t = symmetry.RatioFunction.from_callable(lambda aj, a0: 1.0 + 0.0 * aj, BOX)
        path = characteristics.integrate_characteristic(t, (1.0, 2.0), 3.5, 0.05)
        assert np.allclose(path.aj - path.a0, 1.0, atol=1e-12)

    def test_backward_integration(self):
        path = characteristics.integrate_characteristic(t_10(), (4.0, 2.0), 1.0, 0.01)
        assert abs(path.endpoint()[1] - 1.0) <= 1e-8

    def test_domain_clipping_flagged(self):
        t = symmetry.RatioFunction.from_callable(lambda aj, a0: 2.0 * aj / a0, BOX)
        path = characteristics.integrate_characteristic(
            t, (1.0, 3.0), 4.0, 0.05, domain=BOX
        )
        assert path.clipped
        assert path.endpoint()[0] < 4.0

    def test_nonpositive_step_rejected(self):
        with pytest.raises(ValidationError):
            characteristics.integrate_characteristic(t_10(), (1.0, 1.0), 4.0, 0.0)


@pytest.fixture(scope="module")
def omega1():
    return characteristics.build_omega(t_10(), BOX, a_ref=1.0, j=1)


@pytest.fixture(scope="module")
def omega2():
    return characteristics.build_omega(t_20(), BOX, a_ref=1.0, j=2)


@pytest.fixture(scope="module")
def w1():
    # a_0 box padded past 4 so the level omega(2, 4) = 1 sits strictly
    # inside the attained range
    om = characteristics.build_omega(
        t_10(), ((1.0, 4.0), (1.0, 4.5)), a_ref=1.0, j=1
    )
    return characteristics.UtilityFunction(j=1, omega=om)


class TestBuildOmega:
    def test_closed_form_j1(self, omega1):
        # omega_1(a_1, a_0) = a_0 / a_1^2 under a_ref = 1
        assert omega1(1.0, 4.0) == pytest.approx(4.0, abs=1e-6)
        assert omega1(2.0, 4.0) == pytest.approx(1.0, abs=1e-6)

    def test_closed_form_j2(self, omega2):
        # omega_2(a_2, a_0) = a_0 / sqrt(a_2)
        assert omega2(4.0, 2.0) == pytest.approx(1.0, abs=1e-6)

    def test_anchoring_identity(self, omega1):
        for a0 in np.linspace(1.0, 4.0, 7):
            assert omega1(1.0, a0) == pytest.approx(a0, abs=1e-8)

    def test_monotone_flags(self, omega1):
        assert omega1.monotone_ok

    def test_level_set_agreement(self, omega1):
        aj = np.linspace(1.05, 3.95, 31)
        a0 = np.linspace(1.05, 3.95, 31)
        AJ, A0 = np.meshgrid(aj, a0, indexing="ij")
        exact = A0 / AJ**2
        got = omega1(AJ.ravel(), A0.ravel()).reshape(AJ.shape)
        assert np.max(np.abs(got - exact)) <= 1e-4

    def test_pde_residual_bound(self, omega1):
        res = omega1.pde_residual()
        assert np.max(res) <= 5.0 * omega1.step**2

    def test_characteristic_invariance(self, omega1):
        # points on one integrated trace share a level value
        path = characteristics.integrate_characteristic(t_10(), (1.2, 1.1), 3.8, 0.005)
        keep = slice(0, len(path.a0), 40)
        levels = omega1(path.aj[keep], path.a0[keep])
        assert np.max(levels) - np.min(levels) <= 1e-6

    def test_coverage_error_reported(self):
        # a nearly flat ratio cannot carry far-off nodes to the anchor line
        # within the guarded a_0 span
        t = symmetry.RatioFunction.from_callable(
            lambda aj, a0: 0.001 + 0.0 * aj, BOX
        )
        with pytest.raises(CoverageError):
            characteristics.build_omega(t, BOX, a_ref=2.5, j=1, resolution=11, step=0.5)

    def test_log_scale_matches_linear(self):
        om_log = characteristics.build_omega(t_10(), BOX, a_ref=1.0, j=1, scale="log")
        pts = np.linspace(1.1, 3.9, 9)
        lin_vals = pts[::-1] / pts**2
        assert np.allclose(om_log(pts, pts[::-1]), lin_vals, atol=1e-5)

    def test_csv_export(self, omega1, tmp_path):
        path = tmp_path / "omega.csv"
        omega1.export_csv(path, n=11)
        rows = np.loadtxt(path, delimiter=",", skiprows=1)
        assert rows.shape == (121, 3)


class TestUtilityInversion:
    def test_closed_form(self, w1):
        # w_1(a_1, v) = v a_1^2
        assert w1.eval(2.0, 1.0) == pytest.approx(4.0, abs=1e-6)

    def test_anchor_identity(self, w1):
        assert w1.eval(1.0, 2.7) == pytest.approx(2.7, abs=1e-8)

    def test_round_trip(self, w1):
        om = w1.omega
        for aj, a0 in [(1.3, 2.0), (2.5, 3.5), (3.8, 1.2)]:
            v = om(aj, a0)
            assert w1.eval(aj, v) == pytest.approx(a0, abs=1e-6)

    def test_out_of_range_level(self, w1):
        with pytest.raises(LevelRangeError):
            w1.eval(2.0, 1e-4)

    @given(st.floats(1.1, 3.9), st.floats(1.1, 3.9))
    @settings(max_examples=25, deadline=None)
    def test_round_trip_property(self, w1, aj, a0):
        v = w1.omega(aj, a0)
        assert abs(w1.eval(aj, v) - a0) <= 1e-6


class TestLipschitz:
    def test_constant_slope_zero(self):
        t = symmetry.RatioFunction.from_callable(lambda aj, a0: 1.0 + 0.0 * aj, BOX)
        assert characteristics.lipschitz_diagnostic(t, BOX) == pytest.approx(0.0, abs=1e-10)

    def test_log_model_j1(self):
        assert characteristics.lipschitz_diagnostic(t_10(), BOX) == pytest.approx(
            0.5, rel=0.02
        )

    def test_log_model_j2(self):
        assert characteristics.lipschitz_diagnostic(t_20(), BOX) == pytest.approx(
            2.0, rel=0.02
        )
