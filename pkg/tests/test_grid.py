import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotmhd.errors import GridMismatch, MeanNotZero, NonFinite
from rotmhd.grid import (
    GridSpec,
    ScalarField,
    SpectralScalar,
    VectorField,
    corrupted_leray,
    curl2d,
    dealias,
    divergence,
    fwd,
    gradient,
    inner,
    inverse,
    l2_norm,
    laplacian,
    leray_project,
    perp,
    poisson_solve,
    spec_leray,
    spec_norm2,
    transform,
)
from rotmhd.littlewood_paley import random_field


def rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def solenoidal(grid, rng, band):
    psi = random_field(grid, rng, band)
    return perp(gradient(psi))


class TestGridSpec:
    @pytest.mark.parametrize("n", [15, 8, 33, 0])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ValueError):
            GridSpec(n)

    def test_geometry(self, g32):
        assert g32.h == pytest.approx(2 * math.pi / 32)
        assert g32.area == pytest.approx(4 * math.pi**2)
        assert g32.spectral_shape == (32, 17)

    def test_mixed_grids_rejected(self, g32, g64):
        a = ScalarField.constant(g32, 1.0)
        b = ScalarField.constant(g64, 1.0)
        with pytest.raises(GridMismatch):
            a + b
        with pytest.raises(GridMismatch):
            VectorField(a, b)

    def test_nonfinite_rejected(self, g32):
        v = np.zeros((32, 32))
        v[3, 4] = np.nan
        with pytest.raises(NonFinite):
            ScalarField(g32, v)

    def test_fields_are_read_only(self, g32):
        f = ScalarField.constant(g32, 2.0)
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0


class TestTransform:
    def test_constant_has_only_mean_mode(self, g32):
        s = transform(ScalarField.constant(g32, 3.5))
        assert s.mode(0, 0) == pytest.approx(3.5)
        assert s.nonzero_modes() == [(0, 0)]

    def test_cos_x_has_two_modes(self, g32):
        f = ScalarField.from_function(g32, lambda x, y: np.cos(x))
        s = transform(f)
        assert s.nonzero_modes(1e-12) == [(-1, 0), (1, 0)]
        assert s.mode(1, 0) == pytest.approx(0.5)
        assert s.mode(-1, 0) == pytest.approx(0.5)

    def test_round_trip(self, g64, rng):
        a = rng.standard_normal((64, 64))
        back = inverse(transform(ScalarField(g64, a))).values
        assert rel(back, a) < 1e-12

    def test_parseval(self, g64, rng):
        a = rng.standard_normal((64, 64))
        direct = g64.area * float(np.mean(a * a))
        assert abs(spec_norm2(g64, fwd(a)) - direct) / direct < 1e-12

    def test_spectral_scalar_validates_shape(self, g32):
        with pytest.raises(ValueError):
            SpectralScalar(g32, np.zeros((32, 32)))


class TestDifferentialOperators:
    def test_gradient_of_sin(self, g32):
        X, Y = g32.coords
        g = gradient(ScalarField(g32, np.sin(X)))
        assert np.max(np.abs(g.x.values - np.cos(X))) < 1e-13
        assert np.max(np.abs(g.y.values)) < 1e-13

    def test_div_grad_is_laplacian(self, g64, rng):
        f = random_field(g64, rng, 20)
        assert rel(divergence(gradient(f)).values, laplacian(f).values) < 1e-12

    def test_laplacian_of_constant(self, g32):
        assert np.max(np.abs(laplacian(ScalarField.constant(g32, 4.0)).values)) == 0.0

    def test_perp_definition(self, g32):
        v = VectorField.from_function(g32, lambda x, y: (np.ones_like(x), np.zeros_like(x)))
        p = perp(v)
        assert np.all(p.x.values == 0.0) and np.all(p.y.values == 1.0)

    def test_perp_twice_is_minus_identity(self, g32, rng):
        v = VectorField.from_arrays(g32, rng.standard_normal((32, 32)), rng.standard_normal((32, 32)))
        pp = perp(perp(v))
        assert np.array_equal(pp.x.values, -v.x.values)
        assert np.array_equal(pp.y.values, -v.y.values)

    def test_curl_of_perp_gradient_is_laplacian(self, g64, rng):
        f = random_field(g64, rng, 20)
        assert rel(curl2d(perp(gradient(f))).values, laplacian(f).values) < 1e-12

    def test_curl_closed_form(self, g32):
        X, Y = g32.coords
        v = VectorField.from_function(g32, lambda x, y: (-np.sin(y), np.sin(x)))
        assert np.max(np.abs(curl2d(v).values - (np.cos(X) + np.cos(Y)))) < 1e-13

    def test_curl_gradient_equality_div_free(self, g64, rng):
        v = solenoidal(g64, rng, 20)
        c = l2_norm(curl2d(v))
        g = math.hypot(l2_norm(gradient(v.x)), l2_norm(gradient(v.y)))
        assert abs(c - g) <= 1e-12 * g


class TestLeray:
    def test_kills_gradients(self, g64, rng):
        f = random_field(g64, rng, 20)
        p = leray_project(gradient(f))
        assert l2_norm(p) < 1e-13 * l2_norm(gradient(f))

    def test_fixes_divergence_free(self, g64, rng):
        v = solenoidal(g64, rng, 20)
        p = leray_project(v)
        assert rel(p.stack(), v.stack()) < 1e-13

    def test_kills_perp_of_zero_mean_div_free(self, g64, rng):
        u = solenoidal(g64, rng, 20)
        assert l2_norm(leray_project(perp(u))) < 1e-13 * l2_norm(u)

    def test_idempotent_self_adjoint_divergence(self, g64, rng):
        u = VectorField.from_arrays(g64, rng.standard_normal((64, 64)), rng.standard_normal((64, 64)))
        w = VectorField.from_arrays(g64, rng.standard_normal((64, 64)), rng.standard_normal((64, 64)))
        pu = leray_project(u)
        assert rel(leray_project(pu).stack(), pu.stack()) < 1e-12
        assert abs(inner(pu, w) - inner(u, leray_project(w))) < 1e-12 * l2_norm(u) * l2_norm(w)
        assert l2_norm(divergence(pu)) <= 1e-12 * l2_norm(u)

    def test_corruption_hook_is_scoped(self, g64, rng):
        u = VectorField.from_arrays(g64, rng.standard_normal((64, 64)), rng.standard_normal((64, 64)))
        with corrupted_leray(4):
            bad = leray_project(u)
        good = leray_project(u)
        assert l2_norm(divergence(bad)) > 1e-3 * l2_norm(u)
        assert l2_norm(divergence(good)) < 1e-12 * l2_norm(u)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), band=st.floats(1.0, 21.0))
    def test_projection_properties_hold_for_any_field(self, seed, band):
        grid = GridSpec(32)
        rng = np.random.default_rng(seed)
        V = np.stack([fwd(random_field(grid, rng, band).values) for _ in range(2)])
        P = np.stack(spec_leray(grid, *V))
        PP = np.stack(spec_leray(grid, *P))
        assert spec_norm2(grid, PP - P) <= 1e-24 * spec_norm2(grid, V)
        assert spec_norm2(grid, P) <= spec_norm2(grid, V) * (1 + 1e-12)


class TestDealias:
    def test_band_limited_unchanged(self, g64, rng):
        s = transform(random_field(g64, rng, 15))
        assert np.max(np.abs(dealias(s).modes - s.modes)) < 1e-15

    def test_high_mode_zeroed(self, g64):
        f = ScalarField.from_function(g64, lambda x, y: np.cos(31 * x))
        assert dealias(transform(f)).nonzero_modes() == []

    def test_idempotent(self, g64, rng):
        s = transform(ScalarField(g64, rng.standard_normal((64, 64))))
        once = dealias(s)
        assert np.array_equal(dealias(once).modes, once.modes)
        assert once.nonzero_modes() != s.nonzero_modes()


class TestPoisson:
    def test_closed_form(self, g32):
        X, _ = g32.coords
        p = poisson_solve(ScalarField(g32, -np.cos(X)))
        assert np.max(np.abs(p.values - np.cos(X))) < 1e-13

    def test_zero(self, g32):
        assert np.all(poisson_solve(ScalarField.zeros(g32)).values == 0.0)

    def test_residual(self, g64, rng):
        f = random_field(g64, rng, 21)
        p = poisson_solve(f)
        assert rel(laplacian(p).values, f.values) < 1e-10
        assert abs(p.mean()) < 1e-14

    def test_nonzero_mean_rejected(self, g32):
        with pytest.raises(MeanNotZero):
            poisson_solve(ScalarField.constant(g32, 1.0))
        p = poisson_solve(ScalarField.constant(g32, 1.0), zero_mean=False)
        assert np.all(p.values == 0.0)
