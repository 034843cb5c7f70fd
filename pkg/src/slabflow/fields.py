"""Grids and field containers for the periodic slab.

The horizontal domain is the flat 2-torus (L1*T) x (L2*T), sampled on a
uniform Nx x Ny grid.  The vertical coordinate x3 runs over [-b0, 0] on Nz
uniform nodes including both endpoints; index 0 is the bottom, index Nz-1
the top.  Fourier modes live on the dual lattice n = (m1/L1, m2/L2) with
integer (m1, m2), and coefficients follow the convention

    fhat(n) = (1/(L1 L2)) * int f(x') exp(-2 pi i n . x') dx'

so that f(x') = sum_n fhat(n) exp(2 pi i n . x').  On the grid this is the
plain FFT divided by Nx*Ny.

Fields are immutable after construction (the backing arrays are marked
read-only); operations elsewhere in the package are pure functions that
return new fields, which is what makes batch evaluation trivially safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import FieldError, GridError


@dataclass(frozen=True)
class HorizontalGrid:
    """Uniform sampling of the horizontal torus."""

    L1: float
    L2: float
    Nx: int
    Ny: int

    def __post_init__(self):
        for name, L in (("L1", self.L1), ("L2", self.L2)):
            if not (np.isfinite(L) and L > 0):
                raise GridError(f"{name} must be a positive finite extent, got {L!r}")
        for name, N in (("Nx", self.Nx), ("Ny", self.Ny)):
            if int(N) != N or N < 4 or N % 2:
                raise GridError(f"{name} must be an even sample count >= 4, got {N!r}")

    @cached_property
    def x1(self):
        return np.arange(self.Nx) * (self.L1 / self.Nx)

    @cached_property
    def x2(self):
        return np.arange(self.Ny) * (self.L2 / self.Ny)

    @cached_property
    def n1(self):
        """First mode coordinate m1/L1, shaped (Nx, 1) for broadcasting."""
        return (np.fft.fftfreq(self.Nx) * (self.Nx / self.L1)).reshape(-1, 1)

    @cached_property
    def n2(self):
        """Second mode coordinate m2/L2, shaped (1, Ny)."""
        return (np.fft.fftfreq(self.Ny) * (self.Ny / self.L2)).reshape(1, -1)

    @cached_property
    def mode_abs(self):
        """|n| on the full (Nx, Ny) mode table."""
        return np.hypot(*np.broadcast_arrays(self.n1, self.n2))

    @property
    def cell_area(self):
        return (self.L1 / self.Nx) * (self.L2 / self.Ny)

    @property
    def area(self):
        return self.L1 * self.L2

    def meshgrid(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")


@dataclass(frozen=True)
class VolumeGrid:
    """Horizontal torus times uniform vertical nodes on [-b0, 0]."""

    horizontal: HorizontalGrid
    b0: float
    Nz: int

    def __post_init__(self):
        if not (np.isfinite(self.b0) and self.b0 > 0):
            raise GridError(f"b0 must be a positive finite depth, got {self.b0!r}")
        if int(self.Nz) != self.Nz or self.Nz < 8:
            raise GridError(f"Nz must be an integer count >= 8, got {self.Nz!r}")

    @cached_property
    def x3(self):
        return np.linspace(-self.b0, 0.0, self.Nz)

    @property
    def dz(self):
        return self.b0 / (self.Nz - 1)

    @property
    def shape(self):
        return (self.horizontal.Nx, self.horizontal.Ny, self.Nz)


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        bad = int(np.count_nonzero(~np.isfinite(values)))
        raise FieldError(f"{what} contains {bad} non-finite sample(s)")


class SurfaceField:
    """Real scalar field on the horizontal torus.

    Holds the point values and lazily caches the Fourier coefficient table
    (full fft layout, normalized to the coefficient convention above).
    """

    __slots__ = ("grid", "_values", "_coeffs")

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.Nx, grid.Ny):
            raise FieldError(
                f"surface samples have shape {values.shape}, expected {(grid.Nx, grid.Ny)}"
            )
        _check_finite(values, "surface field")
        self.grid = grid
        self._values = _freeze(values)
        self._coeffs = None

    @classmethod
    def from_coeffs(cls, grid, coeffs):
        """Build a field from a coefficient table (Hermitian part is kept)."""
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (grid.Nx, grid.Ny):
            raise FieldError(
                f"coefficient table has shape {coeffs.shape}, expected {(grid.Nx, grid.Ny)}"
            )
        values = np.fft.ifft2(coeffs).real * (grid.Nx * grid.Ny)
        return cls(grid, values)

    @property
    def values(self):
        return self._values

    @property
    def coeffs(self):
        if self._coeffs is None:
            c = np.fft.fft2(self._values) / (self.grid.Nx * self.grid.Ny)
            self._coeffs = _freeze(c)
        return self._coeffs

    def mean(self):
        """Horizontal average (the n = 0 coefficient)."""
        return float(np.mean(self._values))

    def __repr__(self):
        return f"SurfaceField({self.grid.Nx}x{self.grid.Ny}, L=({self.grid.L1},{self.grid.L2}))"


class VolumeField:
    """Real scalar field on the slab, stored as (i, j, k) point values.

    The horizontal directions are treated spectrally (per-layer FFT caches),
    the vertical by collocation on the uniform x3 nodes.
    """

    __slots__ = ("grid", "_values", "_coeffs")

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise FieldError(
                f"volume samples have shape {values.shape}, expected {grid.shape}"
            )
        _check_finite(values, "volume field")
        self.grid = grid
        self._values = _freeze(values)
        self._coeffs = None

    @classmethod
    def from_layer_coeffs(cls, grid, coeffs):
        """Build from per-layer coefficient tables of shape (Nx, Ny, Nz)."""
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != grid.shape:
            raise FieldError(
                f"layer coefficients have shape {coeffs.shape}, expected {grid.shape}"
            )
        h = grid.horizontal
        values = np.fft.ifft2(coeffs, axes=(0, 1)).real * (h.Nx * h.Ny)
        return cls(grid, values)

    @property
    def values(self):
        return self._values

    @property
    def layer_coeffs(self):
        """Per-layer Fourier coefficients, shape (Nx, Ny, Nz)."""
        if self._coeffs is None:
            h = self.grid.horizontal
            c = np.fft.fft2(self._values, axes=(0, 1)) / (h.Nx * h.Ny)
            self._coeffs = _freeze(c)
        return self._coeffs

    def trace_top(self):
        """Restriction to the free surface x3 = 0."""
        return SurfaceField(self.grid.horizontal, self._values[:, :, -1])

    def trace_bottom(self):
        """Restriction to the rigid bottom x3 = -b0."""
        return SurfaceField(self.grid.horizontal, self._values[:, :, 0])

    def __repr__(self):
        g = self.grid
        return f"VolumeField({g.horizontal.Nx}x{g.horizontal.Ny}x{g.Nz}, b0={g.b0})"


def zeros_surface(grid):
    return SurfaceField(grid, np.zeros((grid.Nx, grid.Ny)))


def zeros_volume(grid):
    return VolumeField(grid, np.zeros(grid.shape))


def constant_volume(grid, value):
    return VolumeField(grid, np.full(grid.shape, float(value)))


def random_surface_field(grid, rng, max_mode=None, amplitude=1.0, mean_zero=True):
    """Seeded random band-limited surface field.

    Coefficients are drawn for modes with |m1| <= max_mode and |m2| <= max_mode
    (default: a quarter of the grid in each direction, which keeps products of
    two such fields alias-free even without padding), then symmetrized so the
    samples are real.
    """
    if max_mode is None:
        max_mode = max(1, min(grid.Nx, grid.Ny) // 4)
    c = np.zeros((grid.Nx, grid.Ny), dtype=complex)
    m1 = np.fft.fftfreq(grid.Nx) * grid.Nx
    m2 = np.fft.fftfreq(grid.Ny) * grid.Ny
    keep = (np.abs(m1)[:, None] <= max_mode) & (np.abs(m2)[None, :] <= max_mode)
    draw = rng.standard_normal(c.shape) + 1j * rng.standard_normal(c.shape)
    c[keep] = draw[keep]
    if mean_zero:
        c[0, 0] = 0.0
    field = SurfaceField.from_coeffs(grid, c)
    scale = np.max(np.abs(field.values))
    if scale > 0:
        field = SurfaceField(grid, field.values * (amplitude / scale))
    return field


def random_volume_field(grid, rng, max_mode=None, amplitude=1.0, bottom_zero=False):
    """Seeded random volume field: a few smooth vertical profiles with random
    band-limited horizontal structure.  With bottom_zero the field vanishes on
    the rigid bottom (useful for no-slip test velocities)."""
    h = grid.horizontal
    s = (grid.x3 + grid.b0) / grid.b0  # 0 at bottom, 1 at top
    profiles = [np.ones_like(s), s, np.cos(np.pi * s), s * s]
    vals = np.zeros(grid.shape)
    for p in profiles:
        layer = random_surface_field(h, rng, max_mode=max_mode, amplitude=1.0,
                                     mean_zero=False)
        vals += layer.values[:, :, None] * p[None, None, :]
    if bottom_zero:
        vals *= s[None, None, :]
    scale = np.max(np.abs(vals))
    if scale > 0:
        vals *= amplitude / scale
    return VolumeField(grid, vals)
