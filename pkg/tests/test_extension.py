"""Surface-to-volume extension: closed-form profiles, bound monitors, eps pick."""

from __future__ import annotations

import math

import numpy as np
import pytest

from slabflow import HorizontalGrid, SurfaceField, VolumeGrid
from slabflow.errors import ConfigError, DegenerateSurfaceError
from slabflow.fields import random_surface_field, zeros_surface
from slabflow import spectral as sp
from slabflow.extension import (
    ExtensionConfig,
    check_poisson_bound,
    check_vertical_smallness,
    extend,
    extend_dz,
    select_epsilon,
    surface_dz,
    top_jacobian_min,
)


def vgrid(hg, b0=1.0, Nz=33):
    return VolumeGrid(horizontal=hg, b0=b0, Nz=Nz)


class TestExtend:
    def test_constant_extends_to_constant(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=8, Ny=8)
        f = SurfaceField(hg, np.full((8, 8), 2.25))
        ext = extend(f, ExtensionConfig(epsilon=0.3), vgrid(hg))
        assert np.max(np.abs(ext.values - 2.25)) < 1e-13

    def test_single_mode_closed_form(self):
        hg = HorizontalGrid(L1=2.0, L2=1.0, Nx=16, Ny=8)
        g = vgrid(hg, b0=1.5, Nz=21)
        X1, _ = hg.meshgrid()
        f = SurfaceField(hg, np.sin(2 * np.pi * X1 / hg.L1))
        eps = 0.4
        ext = extend(f, ExtensionConfig(epsilon=eps), g)
        # mode n = (1/L1, 0) has |n| = 1/L1, so the profile is e^{eps x3 / L1}
        want = np.exp(eps * g.x3 / hg.L1)[None, None, :] * np.sin(2 * np.pi * X1 / hg.L1)[:, :, None]
        assert np.max(np.abs(ext.values - want)) < 1e-10

    def test_standard_mode_rate(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=8)
        g = vgrid(hg, Nz=17)
        X1, _ = hg.meshgrid()
        f = SurfaceField(hg, np.cos(2 * np.pi * 2 * X1))
        ext = extend(f, ExtensionConfig(mode="standard_poisson"), g)
        want = np.exp(2 * np.pi * 2 * g.x3)[None, None, :] * f.values[:, :, None]
        assert np.max(np.abs(ext.values - want)) < 1e-10

    def test_trace_is_identity(self):
        hg = HorizontalGrid(L1=1.0, L2=2.0, Nx=12, Ny=16)
        g = vgrid(hg)
        rng = np.random.default_rng(2)
        cfg = ExtensionConfig(epsilon=0.7)
        for _ in range(50):
            f = random_surface_field(hg, rng, mean_zero=False)
            ext = extend(f, cfg, g)
            assert np.max(np.abs(ext.trace_top().values - f.values)) < 1e-11

    def test_coefficients_decay_with_depth(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=12, Ny=12)
        g = vgrid(hg, Nz=17)
        rng = np.random.default_rng(4)
        f = random_surface_field(hg, rng)
        ext = extend(f, ExtensionConfig(epsilon=0.5), g)
        mags = np.abs(ext.layer_coeffs)
        assert np.all(np.diff(mags, axis=2) >= -1e-15), "per-mode profile must grow toward the top"
        assert sp.max_norm(ext) <= float(np.sum(np.abs(f.coeffs))) + 1e-12

    def test_exact_vertical_derivative_profile(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=8)
        g = vgrid(hg, Nz=17)
        X1, _ = hg.meshgrid()
        f = SurfaceField(hg, np.sin(2 * np.pi * 3 * X1))
        eps = 0.25
        d = extend_dz(f, ExtensionConfig(epsilon=eps), g)
        want = (eps * 3) * np.exp(eps * 3 * g.x3)[None, None, :] * f.values[:, :, None]
        assert np.max(np.abs(d.values - want)) < 1e-11
        top = surface_dz(f, ExtensionConfig(epsilon=eps))
        assert np.max(np.abs(top.values - eps * 3 * f.values)) < 1e-11

    def test_fd_vertical_derivative_consistent(self):
        # finite differences of the sampled extension approach the exact rate
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=8, Ny=8)
        errs = []
        f = None
        for Nz in (17, 33):
            g = vgrid(hg, Nz=Nz)
            rng = np.random.default_rng(6)
            f = random_surface_field(hg, rng)
            cfg = ExtensionConfig(epsilon=0.6)
            exact = extend_dz(f, cfg, g)
            fd = sp.vertical_derivative(extend(f, cfg, g))
            errs.append(np.max(np.abs(fd.values - exact.values)))
        assert errs[1] < errs[0] / 10

    def test_grid_mismatch_rejected(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=8, Ny=8)
        other = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=8)
        f = zeros_surface(other)
        with pytest.raises(Exception):
            extend(f, ExtensionConfig(epsilon=0.5), vgrid(hg))

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            ExtensionConfig(epsilon=1.5)
        with pytest.raises(ConfigError):
            ExtensionConfig(mode="something_else", epsilon=0.5)
        with pytest.raises(ConfigError):
            ExtensionConfig()  # tunable mode without epsilon


class TestPoissonBound:
    def test_zero_field(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=8, Ny=8)
        rep = check_poisson_bound(zeros_surface(hg), 1, 0.5)
        assert rep.ratio == 0.0 and rep.passed

    def test_single_mode_exact_value(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        X1, _ = hg.meshgrid()
        f = SurfaceField(hg, np.sin(2 * np.pi * X1))
        eps, b0 = 0.5, 1.0
        rep = check_poisson_bound(f, 0, eps, b0=b0, Nz=129)
        want = math.pi * (1.0 - math.exp(-2 * eps * b0 * 1.0))
        assert abs(rep.ratio - want) < 1e-5
        assert rep.ratio <= math.pi

    def test_randomized_suite_stays_below_pi(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(100):
            f = random_surface_field(hg, rng, max_mode=6)
            for q in (0, 1, 2):
                for eps in (0.1, 0.5, 0.9):
                    rep = check_poisson_bound(f, q, eps)
                    worst = max(worst, rep.ratio)
                    assert rep.passed, f"q={q} eps={eps}: ratio {rep.ratio}"
        assert worst <= math.pi * (1 + 1e-3), f"worst ratio {worst}"

    def test_full_gradient_variant_recorded(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        rng = np.random.default_rng(9)
        f = random_surface_field(hg, rng)
        rep = check_poisson_bound(f, 2, 0.9)
        assert rep.full_gradient_ratio >= rep.ratio


class TestVerticalSmallness:
    def test_constant_trivial(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=8, Ny=8)
        f = SurfaceField(hg, np.ones((8, 8)))
        rep = check_vertical_smallness(f, 0.4)
        assert rep.lhs == 0.0 and rep.identity_passed and rep.scaling_within_factor_4

    def test_single_mode_exact_ratio(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        X1, _ = hg.meshgrid()
        f = SurfaceField(hg, np.sin(2 * np.pi * X1))
        eps = 0.3
        g = vgrid(hg, Nz=33)
        cfg = ExtensionConfig(epsilon=eps)
        w = sp.vertical_weights(33, g.dz)
        d3 = extend_dz(f, cfg, g)
        d1 = sp.horizontal_derivative(extend(f, cfg, g), 1)
        n3 = float(np.sum((np.abs(d3.layer_coeffs) ** 2) @ w))
        n1 = float(np.sum((np.abs(d1.layer_coeffs) ** 2) @ w))
        assert abs(n3 / n1 - eps ** 2 / (2 * math.pi) ** 2) < 1e-12

    def test_random_suite_identity(self):
        hg = HorizontalGrid(L1=1.0, L2=2.0, Nx=12, Ny=12)
        rng = np.random.default_rng(10)
        for _ in range(100):
            f = random_surface_field(hg, rng, mean_zero=False)
            rep = check_vertical_smallness(f, float(rng.uniform(0.05, 0.95)))
            assert rep.identity_passed, f"lhs {rep.lhs} vs rhs {rep.rhs}"

    def test_scaling_recorded_within_factor_4(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        rng = np.random.default_rng(11)
        f = random_surface_field(hg, rng)
        rep = check_vertical_smallness(f, 0.6)
        assert rep.scaling_within_factor_4, f"factor {rep.scaling_factor}"


class TestSelectEpsilon:
    def test_flat_surface_caps_at_half(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=16)
        eta0 = zeros_surface(hg)
        b = SurfaceField(hg, np.ones((16, 16)))
        eps, delta = select_epsilon(eta0, b, b0=1.0)
        assert eps == 0.5 and delta == 0.5
        assert top_jacobian_min(eta0, b, 1.0, eps) >= delta

    @pytest.mark.parametrize("amp,want_delta", [(0.5, 0.25), (0.9, 0.05)])
    def test_large_sine_surfaces(self, amp, want_delta):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=32, Ny=8)
        X1, _ = hg.meshgrid()
        eta0 = SurfaceField(hg, amp * np.sin(2 * np.pi * X1))
        b = SurfaceField(hg, np.ones((32, 8)))
        eps, delta = select_epsilon(eta0, b, b0=1.0)
        assert abs(delta - want_delta) < 1e-12
        assert 0.0 < eps <= 0.5
        assert top_jacobian_min(eta0, b, 1.0, eps, refine=4) >= delta

    def test_touching_bottom_rejected(self):
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=16, Ny=8)
        X1, _ = hg.meshgrid()
        eta0 = SurfaceField(hg, -1.0 + 0.5 * np.sin(2 * np.pi * X1))
        b = SurfaceField(hg, np.ones((16, 8)))
        with pytest.raises(DegenerateSurfaceError):
            select_epsilon(eta0, b, b0=1.0)

    def test_top_jacobian_limit_small_eps(self):
        # as eps -> 0 the vertical-derivative term dies and
        # min J(0) -> min (b + eta0)/b0 = 2 delta > delta
        hg = HorizontalGrid(L1=1.0, L2=1.0, Nx=32, Ny=8)
        X1, _ = hg.meshgrid()
        eta0 = SurfaceField(hg, 0.8 * np.sin(2 * np.pi * X1))
        b = SurfaceField(hg, np.ones((32, 8)))
        vals = [top_jacobian_min(eta0, b, 1.0, e) for e in (0.4, 0.1, 0.01, 1e-4)]
        assert abs(vals[-1] - 0.2) < 1e-2
        assert vals[-1] > vals[0]
