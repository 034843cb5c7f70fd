"""Transform/derivative/norm kit checked against direct quadrature oracles.

Every closed-form number asserted here was derived independently of the
implementation: coefficients by trapezoid quadrature of f * exp(-2 pi i n.x)
(exact for band-limited integrands), norms by hand from single-mode algebra.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from slabflow import HorizontalGrid, SurfaceField, VolumeField, VolumeGrid
from slabflow.errors import ConfigError
from slabflow.fields import random_surface_field, random_volume_field
from slabflow import spectral as sp


def coeff_oracle(values, grid, n1, n2):
    """Fourier coefficient by direct quadrature, no fft involved."""
    X1, X2 = grid.meshgrid()
    phase = np.exp(-2j * np.pi * (n1 * X1 + n2 * X2))
    return np.sum(values * phase) / (grid.Nx * grid.Ny)


class TestCoefficients:
    def test_single_sine_matches_quadrature(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        X1, _ = grid.meshgrid()
        f = SurfaceField(grid, np.sin(2 * np.pi * 3 * X1))
        # sin(2 pi 3 x) = (e^{i..} - e^{-i..}) / 2i -> chat(3,0) = 1/(2i) = -i/2
        assert abs(f.coeffs[3, 0] - (-0.5j)) < 1e-12
        assert abs(f.coeffs[-3, 0] - (0.5j)) < 1e-12
        for (a, b) in [(3, 0), (-3, 0), (2, 5), (0, 0)]:
            want = coeff_oracle(f.values, grid, a / grid.L1, b / grid.L2)
            assert abs(f.coeffs[a, b] - want) < 1e-12, f"mode ({a},{b}) off"

    def test_roundtrip_random(self):
        grid = HorizontalGrid(L1=2.0, L2=0.5, Nx=16, Ny=12)
        rng = np.random.default_rng(7)
        f = random_surface_field(grid, rng)
        g = SurfaceField.from_coeffs(grid, f.coeffs)
        assert np.max(np.abs(g.values - f.values)) < 1e-12

    def test_hermitian_part_idempotent_and_real(self):
        rng = np.random.default_rng(3)
        c = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        h = sp.hermitian_part(c)
        assert np.max(np.abs(sp.hermitian_part(h) - h)) < 1e-14
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=8, Ny=8)
        vals = np.fft.ifft2(h) * 64
        assert np.max(np.abs(vals.imag)) < 1e-12, "hermitian table must invert to real samples"
        del grid, vals


class TestHorizontalDerivatives:
    def test_sine_derivative_exact(self):
        grid = HorizontalGrid(L1=2.0, L2=1.0, Nx=32, Ny=8)
        X1, _ = grid.meshgrid()
        f = SurfaceField(grid, np.sin(2 * np.pi * X1 / grid.L1))
        df = sp.horizontal_derivative(f, axis=1)
        want = (2 * np.pi / grid.L1) * np.cos(2 * np.pi * X1 / grid.L1)
        assert np.max(np.abs(df.values - want)) < 1e-10

    def test_second_derivative_and_cross(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=24, Ny=24)
        X1, X2 = grid.meshgrid()
        f = SurfaceField(grid, np.cos(2 * np.pi * 2 * X1) * np.sin(2 * np.pi * X2))
        d11 = sp.horizontal_derivative(f, axis=1, order=2)
        want = -((2 * np.pi * 2) ** 2) * f.values
        assert np.max(np.abs(d11.values - want)) < 1e-9
        d12 = sp.horizontal_derivative(sp.horizontal_derivative(f, 1), 2)
        want12 = (2 * np.pi * 2) * (2 * np.pi) * np.sin(2 * np.pi * 2 * X1) * np.cos(2 * np.pi * X2)
        assert np.max(np.abs(d12.values + want12)) < 1e-9

    def test_odd_order_keeps_samples_real_at_nyquist(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=8, Ny=8)
        X1, _ = grid.meshgrid()
        # cos(2 pi 4 x1) lives exactly on the unpaired bin; its spectral
        # first derivative on this grid is the zero function
        f = SurfaceField(grid, np.cos(2 * np.pi * 4 * X1))
        df = sp.horizontal_derivative(f, axis=1)
        assert np.max(np.abs(df.values)) < 1e-12

    def test_volume_field_derivative_broadcasts(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=12, Ny=12)
        grid = VolumeGrid(horizontal=hg, b0=1.0, Nz=9)
        X1, _ = hg.meshgrid()
        prof = (grid.x3 + 1.0) ** 2
        f = VolumeField(grid, np.sin(2 * np.pi * X1)[:, :, None] * prof[None, None, :])
        df = sp.horizontal_derivative(f, axis=1)
        want = 2 * np.pi * np.cos(2 * np.pi * X1)[:, :, None] * prof[None, None, :]
        assert np.max(np.abs(df.values - want)) < 1e-10


class TestVerticalDerivatives:
    def test_exact_on_cubic(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=4, Ny=4)
        grid = VolumeGrid(horizontal=hg, b0=2.0, Nz=11)
        s = grid.x3
        f = VolumeField(grid, np.broadcast_to(1.0 + s + s ** 2 - 0.5 * s ** 3, grid.shape).copy())
        df = sp.vertical_derivative(f)
        want = 1.0 + 2 * s - 1.5 * s ** 2
        assert np.max(np.abs(df.values - want)) < 1e-10, "degree-3 must be differentiated exactly"

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_exponential_fourth_order_convergence(self, order):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=4, Ny=4)
        errs = []
        for Nz in (17, 33):
            grid = VolumeGrid(horizontal=hg, b0=1.0, Nz=Nz)
            f = VolumeField(grid, np.broadcast_to(np.exp(grid.x3), grid.shape).copy())
            df = sp.vertical_derivative(f, order=order)
            errs.append(np.max(np.abs(df.values - np.exp(grid.x3))))
        ratio = errs[0] / errs[1]
        assert ratio > 12.0, f"order {order}: refinement ratio {ratio:.2f} below 4th-order decay"

    def test_too_few_nodes_rejected(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=4, Ny=4)
        grid = VolumeGrid(horizontal=hg, b0=1.0, Nz=8)
        f = VolumeField(grid, np.zeros(grid.shape))
        with pytest.raises(ConfigError):
            sp.vertical_derivative(f, order=5)

    def test_diff_matrix_row_sums_vanish(self):
        # constants are in the kernel of every derivative
        for order in (1, 2, 4):
            D = sp.diff_matrix(21, 0.05, order)
            assert np.max(np.abs(D.sum(axis=1))) < 1e-7


class TestQuadrature:
    def test_even_interval_simpson_exact_cubic(self):
        w = sp.vertical_weights(11, 0.1)
        x = -1.0 + 0.1 * np.arange(11)
        # int_{-1}^0 x^3 dx = -1/4
        assert abs(np.dot(w, x ** 3) + 0.25) < 1e-13

    def test_odd_interval_hybrid_exact_cubic(self):
        Nz = 10  # 9 intervals -> Simpson + 3/8 tail
        dz = 1.0 / 9.0
        w = sp.vertical_weights(Nz, dz)
        x = -1.0 + dz * np.arange(Nz)
        assert abs(np.dot(w, np.ones_like(x)) - 1.0) < 1e-13
        assert abs(np.dot(w, x ** 3) + 0.25) < 1e-13

    def test_volume_integral_separable(self):
        hg = HorizontalGrid(L1=2.0, L2=1.0, Nx=8, Ny=8)
        grid = VolumeGrid(horizontal=hg, b0=1.0, Nz=17)
        X1, _ = hg.meshgrid()
        vals = (1.0 + np.sin(2 * np.pi * X1 / hg.L1))[:, :, None] * np.exp(grid.x3)[None, None, :]
        f = VolumeField(grid, vals)
        # int (1 + sin) dx' = L1 L2 = 2;  int_{-1}^0 e^x dx = 1 - 1/e
        want = 2.0 * (1.0 - math.exp(-1.0))
        # quadrature is 4th order: floor ~ (dz^4/180) |f''''| ~ 1e-7 at Nz=17
        assert abs(sp.integrate_volume(f) - want) < 1e-6


class TestSobolevNorms:
    def test_surface_h0_of_sine(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        X1, _ = grid.meshgrid()
        f = SurfaceField(grid, np.sin(2 * np.pi * X1))
        # ||sin||_{L2}^2 = 1/2 on the unit torus
        assert abs(sp.sobolev_norm_surface(f, 0.0) ** 2 - 0.5) < 1e-12
        assert abs(sp.l2_norm_surface(f) ** 2 - 0.5) < 1e-12

    def test_surface_homogeneous_half_of_sine(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        X1, _ = grid.meshgrid()
        f = SurfaceField(grid, np.sin(2 * np.pi * X1))
        # weight |2 pi n| = 2 pi at n = (1,0): norm^2 = 2 pi * 1/2 = pi
        got = sp.sobolev_norm_surface(f, 0.5, homogeneous=True) ** 2
        assert abs(got - math.pi) < 1e-12

    def test_surface_inhomogeneous_one_of_sine(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        X1, _ = grid.meshgrid()
        f = SurfaceField(grid, np.sin(2 * np.pi * X1))
        want = (1.0 + 4 * math.pi ** 2) * 0.5
        assert abs(sp.sobolev_norm_surface(f, 1.0) ** 2 - want) < 1e-10

    def test_volume_h1_of_horizontal_sine(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        grid = VolumeGrid(horizontal=hg, b0=1.0, Nz=17)
        X1, _ = hg.meshgrid()
        f = VolumeField(grid, np.broadcast_to(np.sin(2 * np.pi * X1)[:, :, None], grid.shape).copy())
        # ||f||_0^2 = 1/2, ||d1 f||_0^2 = 4 pi^2 / 2, d2 and d3 vanish
        want = 0.5 + 2 * math.pi ** 2
        assert abs(sp.sobolev_norm_volume(f, 1) ** 2 - want) < 1e-8

    def test_volume_h2_counts_each_mixed_derivative_once(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=12, Ny=12)
        grid = VolumeGrid(horizontal=hg, b0=1.0, Nz=17)
        X1, X2 = hg.meshgrid()
        horiz = np.sin(2 * np.pi * X1) * np.cos(2 * np.pi * X2)
        f = VolumeField(grid, horiz[:, :, None] * np.exp(grid.x3)[None, None, :])
        # per-mode weight: sum over multi-indices |a| <= 2 of (2pi)^{2|a_h|} * (e^x3 deriv)
        # with x=(2pi)^2=y for mode (1,1):
        x = (2 * math.pi) ** 2
        iz = 0.5 * (1 - math.exp(-2.0))  # int e^{2 x3}
        base = 0.25 * iz  # |fhat|^2 summed over the four conjugate modes x profile
        horiz_weight = 1 + 2 * x + 3 * x ** 2  # |a3|=0: S_2(x,x) = 1+2x+x^2+x^2+x^2...
        # S_2 = 1 + (x+y) + (x^2+xy+y^2) with x=y -> 1 + 2x + 3x^2
        w_d3_0 = horiz_weight
        w_d3_1 = 1 + 2 * x  # |a3|=1: horizontal part up to order 1
        w_d3_2 = 1.0
        want = base * (w_d3_0 + w_d3_1 + w_d3_2)
        got = sp.sobolev_norm_volume(f, 2) ** 2
        assert abs(got - want) / want < 5e-6, f"got {got}, want {want}"

    def test_volume_norms_nest(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=8, Ny=8)
        grid = VolumeGrid(horizontal=hg, b0=1.0, Nz=17)
        rng = np.random.default_rng(11)
        f = random_volume_field(grid, rng)
        n0 = sp.sobolev_norm_volume(f, 0)
        n1 = sp.sobolev_norm_volume(f, 1)
        n2 = sp.sobolev_norm_volume(f, 2)
        assert n0 <= n1 <= n2

    def test_power_sum_recursion_against_direct(self):
        grid = HorizontalGrid(L1=1.5, L2=0.75, Nx=8, Ny=8)
        for m in (0, 1, 2, 3):
            S = sp.horizontal_power_sum(grid, m)
            x = np.broadcast_to((2 * np.pi * grid.n1) ** 2, (8, 8))
            y = np.broadcast_to((2 * np.pi * grid.n2) ** 2, (8, 8))
            direct = np.zeros((8, 8))
            for a in range(m + 1):
                for b in range(m + 1 - a):
                    direct += x ** a * y ** b
            assert np.max(np.abs(S - direct) / np.maximum(direct, 1.0)) < 1e-12

    def test_band_sum_is_difference_of_power_sums(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=8, Ny=8)
        full = sp.horizontal_power_sum(grid, 3)
        low = sp.horizontal_power_sum(grid, 1)
        band = sp.horizontal_band_sum(grid, 2, 3)
        assert np.max(np.abs(band - (full - low))) == 0.0


class TestRieszAndInterpolation:
    def test_riesz_multiplier_on_single_mode(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        X1, _ = grid.meshgrid()
        f = SurfaceField(grid, np.cos(2 * np.pi * 2 * X1))
        g = sp.riesz_potential(f, 0.5)
        # |n| = 2 at the live mode -> scaling 2^{-1/2}
        want = f.values / math.sqrt(2.0)
        assert np.max(np.abs(g.values - want)) < 1e-12

    def test_riesz_kills_mean(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=8, Ny=8)
        f = SurfaceField(grid, np.full((8, 8), 3.7))
        g = sp.riesz_potential(f, 0.3)
        assert np.max(np.abs(g.values)) < 1e-13

    def test_interpolation_ratio_never_exceeds_one(self):
        grid = HorizontalGrid(L1=1.0, L2=2.0, Nx=16, Ny=16)
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(200):
            f = random_surface_field(grid, rng, mean_zero=False)
            r = sp.sobolev_interpolation_ratio(f, s=1.0, r=1.0, q=1.0)
            worst = max(worst, r)
            r2 = sp.sobolev_interpolation_ratio(f, s=0.5, r=0.5, q=2.0, homogeneous=True)
            worst = max(worst, r2)
        assert worst <= 1.0 + 1e-10, f"interpolation constant violated: {worst}"

    def test_riesz_interpolation_ratio_bound(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        rng = np.random.default_rng(6)
        worst = 0.0
        for _ in range(200):
            f = random_surface_field(grid, rng)
            for lam in (0.25, 0.5, 0.9):
                worst = max(worst, sp.riesz_interpolation_ratio(f, lam, k=1))
        assert worst <= 1.0 + 1e-10, f"Riesz interpolation constant violated: {worst}"

    def test_single_mode_saturates_interpolation(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        X1, _ = grid.meshgrid()
        f = SurfaceField(grid, np.sin(2 * np.pi * 3 * X1))
        r = sp.sobolev_interpolation_ratio(f, s=1.0, r=1.0, q=1.0)
        assert abs(r - 1.0) < 1e-12, "a pure mode must make interpolation an identity"


class TestDealiasedProducts:
    def test_inband_product_exact(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        X1, _ = grid.meshgrid()
        f = SurfaceField(grid, np.cos(2 * np.pi * 3 * X1))
        g = SurfaceField(grid, np.cos(2 * np.pi * 2 * X1))
        p = sp.dealiased_product(f, g)
        want = 0.5 * (np.cos(2 * np.pi * 5 * X1) + np.cos(2 * np.pi * X1))
        assert np.max(np.abs(p.values - want)) < 1e-12

    def test_aliasing_removed_not_wrapped(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        X1, _ = grid.meshgrid()
        f = SurfaceField(grid, np.cos(2 * np.pi * 7 * X1))
        p = sp.dealiased_product(f, f)
        # true square = 1/2 + cos(2 pi 14 x)/2; mode 14 is unrepresentable and
        # must be dropped, not folded onto mode 2
        assert abs(p.coeffs[2, 0]) < 1e-12, "aliased energy leaked into mode 2"
        assert abs(p.coeffs[0, 0] - 0.5) < 1e-12

    def test_grid_product_would_alias(self):
        # sanity: the naive pointwise product DOES alias, so the test above
        # actually distinguishes the two code paths
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        X1, _ = grid.meshgrid()
        f = SurfaceField(grid, np.cos(2 * np.pi * 7 * X1))
        naive = SurfaceField(grid, f.values * f.values)
        # cos^2 has weight 1/4 at mode 14, which folds onto mode -2 == 14 - 16
        assert abs(naive.coeffs[2, 0]) > 0.2

    def test_volume_product_matches_surface_per_layer(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=12, Ny=12)
        grid = VolumeGrid(horizontal=hg, b0=1.0, Nz=9)
        rng = np.random.default_rng(9)
        f = random_volume_field(grid, rng)
        g = random_volume_field(grid, rng)
        p = sp.dealiased_product(f, g)
        k = 4
        fs = SurfaceField(hg, f.values[:, :, k])
        gs = SurfaceField(hg, g.values[:, :, k])
        ps = sp.dealiased_product(fs, gs)
        assert np.max(np.abs(p.values[:, :, k] - ps.values)) < 1e-12

    def test_product_of_bandlimited_fields_matches_pointwise(self):
        grid = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        rng = np.random.default_rng(12)
        # max_mode defaults to N//4, so pointwise products stay in band
        f = random_surface_field(grid, rng)
        g = random_surface_field(grid, rng)
        p = sp.dealiased_product(f, g)
        assert np.max(np.abs(p.values - f.values * g.values)) < 1e-12
