"""Heterogeneity CDF and density reconstruction from field + omega maps."""

import numpy as np
import pytest

from rumkit import characteristics, density, field, model, symmetry
from rumkit.errors import SupportError, ValidationError

from conftest import log_model, oracle_cdf, oracle_density


def analytic_omegas(boxes, a_ref=1.0, **kw):
    """Omega pair for the log model from the exact ratio surfaces."""
    t1 = symmetry.RatioFunction.from_callable(
        lambda aj, a0: aj / (2.0 * a0), (boxes[0], boxes[-1]), j=1, m=0
    )
    t2 = symmetry.RatioFunction.from_callable(
        lambda aj, a0: 2.0 * aj / a0, (boxes[1], boxes[-1]), j=2, m=0
    )
    return [
        characteristics.build_omega(t1, (boxes[0], boxes[-1]), a_ref=a_ref, j=1, **kw),
        characteristics.build_omega(t2, (boxes[1], boxes[-1]), a_ref=a_ref, j=2, **kw),
    ]


@pytest.fixture(scope="module")
def cdf_setup():
    """Field and omegas sized so the reference triple {1.5, 2, 3} maps
    v = (1, 1) inside the hull: a_1 = sqrt(a_0) and a_2 = a_0^2 must fit."""
    m = log_model()
    grid = field.GridSpec((1.0, 1.0, 1.0), (4.0, 2.2, 10.0), (41, 41, 41))
    f = model.tabulate(m, grid)
    omegas = analytic_omegas([(1.0, 2.2), (1.0, 10.0), (1.0, 4.0)])
    return f, omegas


@pytest.fixture(scope="module")
def narrow_density():
    m = log_model()
    grid = field.GridSpec((1.0,) * 3, (4.0,) * 3, (41,) * 3)
    f = model.tabulate(m, grid)
    omegas = analytic_omegas([(1.0, 4.0)] * 3)
    v_grid = density.make_v_grid(omegas, n=101)
    return f, omegas, density.reconstruct_density(f, omegas, v_grid)


class TestReconstructCdf:
    def test_oracle_value(self, cdf_setup):
        f, omegas = cdf_setup
        val = density.reconstruct_cdf(f, omegas, (1.0, 1.0))
        assert val == pytest.approx(1.0 / 3.0, abs=2e-3)

    def test_reference_invariance(self, cdf_setup):
        f, omegas = cdf_setup
        vals = [
            density.reconstruct_cdf(f, omegas, (1.0, 1.0), a_0=c)
            for c in (1.5, 2.0, 3.0)
        ]
        assert max(vals) - min(vals) <= 5e-3

    def test_tends_to_one_at_top(self, wide_field, wide_omegas):
        val = density.reconstruct_cdf(wide_field, wide_omegas, (40.0, 40.0))
        assert val == pytest.approx(oracle_cdf(40.0, 40.0), abs=5e-3)
        assert val > 0.94

    def test_unreachable_v_raises(self, cdf_setup):
        f, omegas = cdf_setup
        with pytest.raises(SupportError):
            density.reconstruct_cdf(f, omegas, (500.0, 500.0))

    def test_monotone_in_each_coordinate(self, wide_field, wide_omegas):
        vs = [0.3, 1.0, 3.0, 10.0]
        vals = [
            density.reconstruct_cdf(wide_field, wide_omegas, (v, 2.0)) for v in vs
        ]
        assert all(b >= a - 1e-6 for a, b in zip(vals, vals[1:]))


class TestReconstructDensity:
    def test_oracle_point_j2(self, narrow_density):
        _, _, d = narrow_density
        # v = 1 is on the attained grid only approximately; evaluate on a
        # dedicated lattice whose center node is exactly (1, 1)
        f, omegas, _ = narrow_density
        axes = (np.geomspace(0.8, 1.25, 7), np.geomspace(0.8, 1.25, 7))
        dd = density.reconstruct_density(f, omegas, axes)
        assert dd.f_values[3, 3] == pytest.approx(2.0 / 27.0, abs=5e-3)

    def test_nonnegative_before_clipping(self, narrow_density):
        _, _, d = narrow_density
        assert d.min_raw_density >= -1e-4

    def test_route_equivalence(self, narrow_density):
        f, omegas, d = narrow_density
        axes = (np.geomspace(0.8, 1.25, 7), np.geomspace(0.8, 1.25, 7))
        d_mixed = density.reconstruct_density(f, omegas, axes, route="mixed")
        d_alt = density.reconstruct_density(f, omegas, axes, route="alt", alt_k=1)
        h_max = max(f.grid.spacing)
        tol = 10.0 * h_max**2 * float(d_mixed.f_values.max())
        assert np.max(np.abs(d_mixed.f_values - d_alt.f_values)) <= tol

    def test_cdf_consistent_with_density_integral(self, wide_density, wide_field,
                                                  wide_omegas):
        # mass below the attained lower corner is negligible, so the running
        # integral of f should match the directly reconstructed CDF
        F_from_f = wide_density.cumulative_from_density()
        i, k = 150, 150
        v = (wide_density.axes[0][i], wide_density.axes[1][k])
        direct = density.reconstruct_cdf(wide_field, wide_omegas, v)
        assert F_from_f[i, k] == pytest.approx(direct, abs=1e-2)

    def test_f_monotone_cdf(self, wide_density):
        # adjacent v-nodes can map through different reference a_0 values, so
        # interpolation noise of order 1e-3 can dent exact monotonicity
        F = wide_density.F_values
        mask = wide_density.support_mask
        for axis in (0, 1):
            d = np.diff(F, axis=axis)
            ok = (
                mask[tuple(slice(0, -1) if ax == axis else slice(None) for ax in (0, 1))]
                & mask[tuple(slice(1, None) if ax == axis else slice(None) for ax in (0, 1))]
            )
            assert np.min(d[ok]) >= -2e-3

    def test_unreachable_nodes_masked(self, narrow_density):
        f, omegas, _ = narrow_density
        axes = (np.geomspace(0.2, 30.0, 41),) * 2
        d = density.reconstruct_density(f, omegas, axes)
        assert not d.support_mask.all()
        assert d.support_mask.any()
        assert np.all(d.f_values[~d.support_mask] == 0.0)

    def test_j1_reduction(self):
        # two-alternative restriction: F(v) = v/(1+v), f(v) = 1/(1+v)^2
        m = model.ChoiceModelSpec(
            utilities=(
                model.UtilityPrimitive("log", (1.0,)),
                model.UtilityPrimitive("log", (2.0,)),
            ),
            noise=model.NoiseSpec("gumbel_iid", 1.0),
            domain=((1e-3, 200.0),) * 2,
        )
        grid = field.GridSpec((0.002, 0.04), (50.0, 12.0), (641, 480))
        f = model.tabulate(m, grid)
        t1 = symmetry.RatioFunction.from_callable(
            lambda aj, a0: aj / (2.0 * a0), ((0.04, 12.0), (0.002, 50.0)), j=1, m=0
        )
        om = characteristics.build_omega(
            t1, ((0.04, 12.0), (0.002, 50.0)), a_ref=1.0, resolution=161, j=1
        )
        v_grid = density.make_v_grid([om], n=201, bounds=[(0.01, 100.0)])
        d = density.reconstruct_density(f, [om], v_grid)
        # v = 1 is the exact middle node of geomspace(0.01, 100, 201)
        assert v_grid[0][100] == pytest.approx(1.0, abs=1e-12)
        assert d.f_values[100] == pytest.approx(0.25, abs=2e-3)
        mass = density.check_normalization(d).mass
        expected = 100.0 / 101.0 - 0.01 / 1.01
        assert mass == pytest.approx(expected, abs=2e-3)

    def test_dimension_mismatch_rejected(self, narrow_density):
        f, omegas, _ = narrow_density
        with pytest.raises(ValidationError):
            density.reconstruct_density(f, omegas[:1], (np.linspace(0.5, 2, 11),))


class TestNormalization:
    def test_wide_mass_near_one(self, wide_density):
        rep = density.check_normalization(wide_density)
        assert 0.95 <= rep.mass <= 1.01
        assert abs(rep.mass - rep.corner_cdf) <= 0.03

    def test_box_mass_matches_analytic_tails(self, wide_field, wide_omegas):
        # inclusion-exclusion of the closed-form CDF over the box
        lo, hi = 0.05, 40.0
        axes = (np.geomspace(lo, hi, 161),) * 2
        d = density.reconstruct_density(wide_field, wide_omegas, axes)
        rep = density.check_normalization(d)
        expected = (
            oracle_cdf(hi, hi)
            - oracle_cdf(lo, hi)
            - oracle_cdf(hi, lo)
            + oracle_cdf(lo, lo)
        )
        assert rep.mass == pytest.approx(expected, abs=0.02)

    def test_half_box_mass_matches_corner(self, wide_field, wide_omegas):
        axes = (np.geomspace(0.05, 1.0, 101),) * 2
        d = density.reconstruct_density(wide_field, wide_omegas, axes)
        rep = density.check_normalization(d)
        lo, hi = 0.05, 1.0
        expected = (
            oracle_cdf(hi, hi)
            - oracle_cdf(lo, hi)
            - oracle_cdf(hi, lo)
            + oracle_cdf(lo, lo)
        )
        assert rep.mass == pytest.approx(expected, abs=0.01)

    def test_csv_export(self, tmp_path, narrow_density):
        _, _, d = narrow_density
        path = tmp_path / "density.csv"
        d.export_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "v_1,v_2,f,F,in_support"
