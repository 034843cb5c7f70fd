"""Elliptic solves on the slab: flat-coefficient core and curved perturbation.

The flat solver treats each horizontal mode independently.  Writing kappa for
the angular wavenumber pair (first-derivative multiplier, so the unpaired
Nyquist bin is zero, exactly as in :mod:`slabflow.spectral`) and D for the
vertical first-derivative stencil matrix, the unknown per mode is the stacked
vector (u1, u2, u3, p) of node values and the rows are collocations of

    (|kappa|^2 + alpha) u_i - D D u_i + i kappa_i p = F_i   (i = 1, 2; interior)
    (|kappa|^2 + alpha) u3  - D D u3  + D p        = F3     (bottom + interior)
    i kappa_1 u1 + i kappa_2 u2 + D u3 = G                  (interior + top)
    u = 0                                                   (bottom, 3 rows)
    -(i kappa_1 u3 + D u1) = H1, -(i kappa_2 u3 + D u2) = H2,
    p - 2 D u3 = H3                                         (top stress)

alpha >= 0 is an optional mass coefficient (1/dt when a time stepper calls the
solver implicitly; zero for the stationary problem).  The allocation of
collocation rows matters: putting the divergence on every node instead leaves
the zero mode singular.  Every entry is the composition of the package's two
derivative realizations, so a solution of these rows satisfies the residual
operators below to rounding, not merely to truncation.  Each mode is
LU-factored once per (grid, alpha) and cached; opposite modes share a
factorization through conjugation.

The curved solvers wrap the flat one in a fixed-point loop: the transformed
equations are rewritten as the flat system plus correction terms evaluated at
the current iterate,

    F~ = F + (lap_A - lap) u - (grad_A - grad) p
    G~ = G + (div - div_A) u
    H~ = H + (S(p,u) e3 - S_A(p,u) N)  at the top,

and the loop stops when the residual of the transformed system itself drops
below tolerance.  Over a flat geometry the corrections vanish identically and
the first pass already returns the flat solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import spectral as sp
from . import geometry as geo
from .errors import (
    ConfigError,
    FieldError,
    SolverDegeneracyError,
    SolverDivergenceError,
)
from .fields import SurfaceField, VolumeField, VolumeGrid, zeros_surface, zeros_volume


@dataclass(frozen=True)
class StokesData:
    """Right-hand sides of one slab solve: body force, divergence, top stress."""

    F: tuple[VolumeField, VolumeField, VolumeField]
    G: VolumeField
    H: tuple[SurfaceField, SurfaceField, SurfaceField]

    def __post_init__(self):
        grid = self.G.grid
        for f in self.F:
            if f.grid != grid:
                raise FieldError("momentum forcing grid does not match the divergence grid")
        for h in self.H:
            if h.grid != grid.horizontal:
                raise FieldError("top stress data lives on the wrong horizontal grid")

    @property
    def grid(self) -> VolumeGrid:
        return self.G.grid

    def scale(self) -> float:
        """Combined L2 size of the data, the denominator of relative residuals."""
        s = sum(sp.l2_norm_volume(f) for f in self.F)
        s += sp.l2_norm_volume(self.G)
        s += sum(sp.l2_norm_surface(h) for h in self.H)
        return s


def zero_data(grid: VolumeGrid) -> StokesData:
    return StokesData(
        F=tuple(zeros_volume(grid) for _ in range(3)),
        G=zeros_volume(grid),
        H=tuple(zeros_surface(grid.horizontal) for _ in range(3)),
    )


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 200
    damping: float = 1.0

    def __post_init__(self):
        if self.tol <= 0:
            raise ConfigError("solver tolerance must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError(f"damping must lie in (0, 1], got {self.damping!r}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")


# ---------------------------------------------------------------------------
# per-mode wavenumbers and flat-operator realizations


def _mode_wavenumbers(h):
    """First-derivative wavenumbers 2 pi n along each axis, Nyquist bin zeroed."""
    k1 = 2.0 * np.pi * h.n1.ravel()
    k2 = 2.0 * np.pi * h.n2.ravel()
    k1[h.Nx // 2] = 0.0
    k2[h.Ny // 2] = 0.0
    return k1, k2


def _flat_lap(f: VolumeField, grid: VolumeGrid):
    """Flat Laplacian as a composition of first derivatives (matches lap_A)."""
    return (sp.horizontal_derivative(sp.horizontal_derivative(f, 1), 1).values
            + sp.horizontal_derivative(sp.horizontal_derivative(f, 2), 2).values
            + sp.apply_vertical(sp.apply_vertical(f.values, grid), grid))


def _flat_grad_comp(p: VolumeField, grid: VolumeGrid, i: int):
    if i == 0:
        return sp.horizontal_derivative(p, 1).values
    if i == 1:
        return sp.horizontal_derivative(p, 2).values
    return sp.apply_vertical(p.values, grid)


def _flat_div(u, grid: VolumeGrid):
    return (sp.horizontal_derivative(u[0], 1).values
            + sp.horizontal_derivative(u[1], 2).values
            + sp.apply_vertical(u[2].values, grid))


def _flat_stress_top(u, p, grid: VolumeGrid):
    """Rows of (p I - sym grad u) e3 on the top layer, flat realization."""
    du1 = sp.apply_vertical(u[0].values, grid)[:, :, -1]
    du2 = sp.apply_vertical(u[1].values, grid)[:, :, -1]
    du3 = sp.apply_vertical(u[2].values, grid)[:, :, -1]
    d1u3 = sp.horizontal_derivative(u[2], 1).values[:, :, -1]
    d2u3 = sp.horizontal_derivative(u[2], 2).values[:, :, -1]
    return (-(d1u3 + du1), -(d2u3 + du2), p.values[:, :, -1] - 2.0 * du3)


# ---------------------------------------------------------------------------
# flat Stokes solver, one LU per pair of opposite horizontal modes


def _row_layout(n):
    return {
        "m1": (0, n - 2),
        "m2": (n - 2, 2 * n - 4),
        "m3": (2 * n - 4, 3 * n - 5),
        "div": (3 * n - 5, 4 * n - 6),
        "bot": (4 * n - 6, 4 * n - 3),
        "top": (4 * n - 3, 4 * n),
    }


def _stokes_matrix(n, D, DD, k1, k2, alpha):
    I = np.eye(n)
    L = (k1 * k1 + k2 * k2 + alpha) * I - DD
    M = np.zeros((4 * n, 4 * n), dtype=complex)
    s1, s2, s3 = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n)
    spr = slice(3 * n, 4 * n)
    lay = _row_layout(n)

    r0, r1 = lay["m1"]
    M[r0:r1, s1] = L[1:n - 1]
    M[r0:r1, spr] = 1j * k1 * I[1:n - 1]
    r0, r1 = lay["m2"]
    M[r0:r1, s2] = L[1:n - 1]
    M[r0:r1, spr] = 1j * k2 * I[1:n - 1]
    r0, r1 = lay["m3"]
    M[r0:r1, s3] = L[0:n - 1]
    M[r0:r1, spr] = D[0:n - 1]
    r0, r1 = lay["div"]
    M[r0:r1, s1] = 1j * k1 * I[1:n]
    M[r0:r1, s2] = 1j * k2 * I[1:n]
    M[r0:r1, s3] = D[1:n]
    r0, _ = lay["bot"]
    M[r0, 0] = 1.0
    M[r0 + 1, n] = 1.0
    M[r0 + 2, 2 * n] = 1.0
    r0, _ = lay["top"]
    M[r0, s3] = -1j * k1 * I[n - 1]
    M[r0, s1] = -D[n - 1]
    M[r0 + 1, s3] = -1j * k2 * I[n - 1]
    M[r0 + 1, s2] = -D[n - 1]
    M[r0 + 2, 3 * n + n - 1] = 1.0
    M[r0 + 2, s3] = -2.0 * D[n - 1]
    return M


def _checked_factor(M, mode):
    lu, piv = lu_factor(M, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.min() <= 1e-12 * max(diag.max(), 1.0):
        raise SolverDegeneracyError(
            f"collocation system for mode {mode} is singular "
            f"(pivot ratio {diag.min() / max(diag.max(), 1e-300):.3e})",
            mode=mode,
        )
    return lu, piv


def _mode_factor_table(h, build):
    """Factor one matrix per {+n, -n} pair; opposite modes solve by conjugation.

    Returns (table, lus) where table[(i, j)] = (index into lus, conjugate flag).
    The matrices satisfy M(-n) = conj(M(n)) because every entry is real except
    the first-derivative terms i kappa, which flip sign with the mode.
    """
    table = {}
    lus = []
    for i in range(h.Nx):
        ip = (-i) % h.Nx
        for j in range(h.Ny):
            jp = (-j) % h.Ny
            partner = table.get((ip, jp))
            if partner is not None and (ip, jp) != (i, j):
                table[(i, j)] = (partner[0], True)
            else:
                lus.append(_checked_factor(build(i, j), mode=(i, j)))
                table[(i, j)] = (len(lus) - 1, False)
    return table, lus


_STOKES_CACHE: dict = {}
_POISSON_CACHE: dict = {}
_CACHE_LIMIT = 8


def _cache_put(cache, key, value):
    if len(cache) >= _CACHE_LIMIT:
        cache.pop(next(iter(cache)))
    cache[key] = value


def clear_solver_caches():
    """Drop all cached per-mode factorizations (frees memory between studies)."""
    _STOKES_CACHE.clear()
    _POISSON_CACHE.clear()


def _stokes_factors(grid: VolumeGrid, alpha: float):
    key = (grid, float(alpha))
    hit = _STOKES_CACHE.get(key)
    if hit is not None:
        return hit
    h = grid.horizontal
    n = grid.Nz
    D = sp.diff_matrix(n, grid.dz, 1)
    DD = D @ D
    k1, k2 = _mode_wavenumbers(h)

    def build(i, j):
        return _stokes_matrix(n, D, DD, k1[i], k2[j], alpha)

    value = _mode_factor_table(h, build)
    _cache_put(_STOKES_CACHE, key, value)
    return value


def _stokes_rhs(data: StokesData, grid: VolumeGrid):
    n = grid.Nz
    h = grid.horizontal
    lay = _row_layout(n)
    rhs = np.zeros((h.Nx, h.Ny, 4 * n), dtype=complex)
    f1, f2, f3 = (f.layer_coeffs for f in data.F)
    r0, r1 = lay["m1"]
    rhs[:, :, r0:r1] = f1[:, :, 1:n - 1]
    r0, r1 = lay["m2"]
    rhs[:, :, r0:r1] = f2[:, :, 1:n - 1]
    r0, r1 = lay["m3"]
    rhs[:, :, r0:r1] = f3[:, :, 0:n - 1]
    r0, r1 = lay["div"]
    rhs[:, :, r0:r1] = data.G.layer_coeffs[:, :, 1:n]
    r0, _ = lay["top"]
    rhs[:, :, r0] = data.H[0].coeffs
    rhs[:, :, r0 + 1] = data.H[1].coeffs
    rhs[:, :, r0 + 2] = data.H[2].coeffs
    return rhs


def _solve_modes(table, lus, rhs):
    out = np.empty_like(rhs)
    Nx, Ny = rhs.shape[:2]
    for i in range(Nx):
        for j in range(Ny):
            idx, conj = table[(i, j)]
            if conj:
                out[i, j] = np.conj(lu_solve(lus[idx], np.conj(rhs[i, j]),
                                             check_finite=False))
            else:
                out[i, j] = lu_solve(lus[idx], rhs[i, j], check_finite=False)
    return out


def solve_stokes_const(data: StokesData, grid: VolumeGrid, alpha: float = 0.0):
    """Direct per-mode solve of the flat system; returns (u triple, p)."""
    if data.grid != grid:
        raise FieldError("data grid does not match the requested grid")
    if alpha < 0:
        raise ConfigError("mass coefficient must be nonnegative")
    table, lus = _stokes_factors(grid, alpha)
    out = _solve_modes(table, lus, _stokes_rhs(data, grid))
    n = grid.Nz
    u = tuple(VolumeField.from_layer_coeffs(grid, out[:, :, c * n:(c + 1) * n])
              for c in range(3))
    p = VolumeField.from_layer_coeffs(grid, out[:, :, 3 * n:4 * n])
    return u, p


# ---------------------------------------------------------------------------
# residuals on the same collocation row sets


def _interior_l2(arr, grid, lo, hi):
    part = arr[:, :, lo:hi]
    return math.sqrt(float(np.sum(part ** 2)) * grid.horizontal.cell_area * grid.dz)


def _surface_l2(arr, grid):
    return math.sqrt(float(np.sum(arr ** 2)) * grid.horizontal.cell_area)


def _bottom_l2(u, grid):
    return math.sqrt(sum(float(np.sum(c.values[:, :, 0] ** 2)) for c in u)
                     * grid.horizontal.cell_area)


@dataclass(frozen=True)
class StokesResidual:
    momentum: float
    divergence: float
    stress: float
    bottom: float
    scale: float
    stress_form_momentum: float | None = None

    @property
    def relative(self) -> float:
        s = self.scale if self.scale > 0 else 1.0
        return (self.momentum + self.divergence + self.stress + self.bottom) / s


def stokes_residual_const(u, p, data: StokesData, grid: VolumeGrid,
                          alpha: float = 0.0) -> StokesResidual:
    n = grid.Nz
    m = 0.0
    for i in range(3):
        res = (alpha * u[i].values - _flat_lap(u[i], grid)
               + _flat_grad_comp(p, grid, i) - data.F[i].values)
        lo, hi = (1, n - 1) if i < 2 else (0, n - 1)
        m += _interior_l2(res, grid, lo, hi)
    d = _interior_l2(_flat_div(u, grid) - data.G.values, grid, 1, n)
    top = _flat_stress_top(u, p, grid)
    s = sum(_surface_l2(top[i] - data.H[i].values, grid) for i in range(3))
    return StokesResidual(momentum=m, divergence=d, stress=s,
                          bottom=_bottom_l2(u, grid), scale=data.scale())


def stokes_residual_A(u, p, data: StokesData, g: geo.GeometryState,
                      alpha: float = 0.0, with_stress_form: bool = False) -> StokesResidual:
    """Residual of the transformed system on the collocation row sets.

    Momentum is measured in the Laplacian realization
    alpha u - lap_A u + grad_A p - F.  With with_stress_form the
    stress-divergence realization div_A S_A(p,u) + alpha u - F is evaluated
    too; it is reported only, since it mixes the second-derivative stencil
    with nested first-derivative stencils near the boundaries and so carries
    an extra truncation component that the solver does not control.
    """
    grid = g.grid
    n = grid.Nz
    m = 0.0
    gp = geo.grad_A(p, g)
    for i in range(3):
        res = (alpha * u[i].values - geo.laplace_A(u[i], g).values
               + gp[i].values - data.F[i].values)
        lo, hi = (1, n - 1) if i < 2 else (0, n - 1)
        m += _interior_l2(res, grid, lo, hi)
    d = _interior_l2(geo.div_A(u, g).values - data.G.values, grid, 1, n)
    top = geo.stress_vector_top(p, u, g)
    s = sum(_surface_l2(top[i].values - data.H[i].values, grid) for i in range(3))
    stress_form = None
    if with_stress_form:
        stress_form = 0.0
        SA = geo.div_A_tensor(geo.stress_A(p, u, g), g)
        for i in range(3):
            res = alpha * u[i].values + SA[i].values - data.F[i].values
            lo, hi = (1, n - 1) if i < 2 else (0, n - 1)
            stress_form += _interior_l2(res, grid, lo, hi)
    return StokesResidual(momentum=m, divergence=d, stress=s,
                          bottom=_bottom_l2(u, grid), scale=data.scale(),
                          stress_form_momentum=stress_form)


# ---------------------------------------------------------------------------
# curved Stokes via corrected flat solves


@dataclass(frozen=True)
class StokesSolution:
    u: tuple[VolumeField, VolumeField, VolumeField]
    p: VolumeField
    iterations: int
    residuals: tuple[float, ...]

    def __iter__(self):
        # allow  u, p = solve_stokes_A(...)
        return iter((self.u, self.p))


def _correction_data(data: StokesData, g: geo.GeometryState, u, p) -> StokesData:
    grid = g.grid
    newF = []
    gpA = geo.grad_A(p, g)
    for i in range(3):
        corr = ((geo.laplace_A(u[i], g).values - _flat_lap(u[i], grid))
                - (gpA[i].values - _flat_grad_comp(p, grid, i)))
        newF.append(VolumeField(grid, data.F[i].values + corr))
    newG = VolumeField(grid, data.G.values + _flat_div(u, grid)
                       - geo.div_A(u, g).values)
    flat_top = _flat_stress_top(u, p, grid)
    curved_top = geo.stress_vector_top(p, u, g)
    newH = tuple(SurfaceField(grid.horizontal,
                              data.H[i].values + flat_top[i] - curved_top[i].values)
                 for i in range(3))
    return StokesData(F=tuple(newF), G=newG, H=newH)


def solve_stokes_A(g: geo.GeometryState, data: StokesData,
                   cfg: SolverConfig = SolverConfig(), alpha: float = 0.0,
                   initial=None) -> StokesSolution:
    """Fixed-point solve of the transformed Stokes system around the flat one.

    Stops when the relative residual of the transformed system drops below
    cfg.tol; raises SolverDivergenceError with a contraction estimate if the
    geometry is too far from flat for the perturbation loop to contract.
    """
    grid = g.grid
    if data.grid != grid:
        raise FieldError("data grid does not match the geometry grid")
    if initial is None:
        u = tuple(zeros_volume(grid) for _ in range(3))
        p = zeros_volume(grid)
    else:
        u, p = initial
    omega = cfg.damping
    residuals = []
    for it in range(1, cfg.max_iter + 1):
        eff = _correction_data(data, g, u, p)
        u_new, p_new = solve_stokes_const(eff, grid, alpha)
        if omega < 1.0:
            u_new = tuple(VolumeField(grid, (1 - omega) * a.values + omega * b.values)
                          for a, b in zip(u, u_new))
            p_new = VolumeField(grid, (1 - omega) * p.values + omega * p_new.values)
        u, p = u_new, p_new
        residuals.append(stokes_residual_A(u, p, data, g, alpha).relative)
        if residuals[-1] <= cfg.tol:
            return StokesSolution(u=u, p=p, iterations=it,
                                  residuals=tuple(residuals))
    rate = (residuals[-1] / residuals[-2]
            if len(residuals) > 1 and residuals[-2] > 0 else float("nan"))
    raise SolverDivergenceError(
        f"no convergence in {cfg.max_iter} iterations; last relative residual "
        f"{residuals[-1]:.3e}, contraction estimate {rate:.3f} "
        f"(geometry too far from flat? try more damping or a smaller surface)"
    )


# ---------------------------------------------------------------------------
# scalar problem: lap p = f, Dirichlet on top, Neumann on the bottom


def _poisson_factors(grid: VolumeGrid):
    hit = _POISSON_CACHE.get(grid)
    if hit is not None:
        return hit
    h = grid.horizontal
    n = grid.Nz
    D = sp.diff_matrix(n, grid.dz, 1)
    DD = D @ D
    I = np.eye(n)
    k1, k2 = _mode_wavenumbers(h)

    def build(i, j):
        M = np.zeros((n, n), dtype=complex)
        M[1:n - 1] = DD[1:n - 1] - (k1[i] ** 2 + k2[j] ** 2) * I[1:n - 1]
        M[0] = -D[0]           # outward (downward) derivative at the bottom
        M[n - 1, n - 1] = 1.0  # value pinned on the top
        return M

    value = _mode_factor_table(h, build)
    _cache_put(_POISSON_CACHE, grid, value)
    return value


def solve_poisson_const(f: VolumeField, gtop: SurfaceField, hbot: SurfaceField,
                        grid: VolumeGrid) -> VolumeField:
    """Per-mode solve of lap p = f with p(top) = gtop and -d3 p(bottom) = hbot."""
    if f.grid != grid or gtop.grid != grid.horizontal or hbot.grid != grid.horizontal:
        raise FieldError("scalar-solve data grids are inconsistent")
    n = grid.Nz
    h = grid.horizontal
    rhs = np.zeros((h.Nx, h.Ny, n), dtype=complex)
    rhs[:, :, 1:n - 1] = f.layer_coeffs[:, :, 1:n - 1]
    rhs[:, :, 0] = hbot.coeffs
    rhs[:, :, n - 1] = gtop.coeffs
    table, lus = _poisson_factors(grid)
    return VolumeField.from_layer_coeffs(grid, _solve_modes(table, lus, rhs))


@dataclass(frozen=True)
class PoissonResidual:
    interior: float
    top: float
    bottom: float
    scale: float

    @property
    def relative(self) -> float:
        s = self.scale if self.scale > 0 else 1.0
        return (self.interior + self.top + self.bottom) / s


def poisson_residual_A(p: VolumeField, g: geo.GeometryState, f: VolumeField,
                       gtop: SurfaceField, hbot: SurfaceField) -> PoissonResidual:
    grid = g.grid
    n = grid.Nz
    interior = _interior_l2(geo.laplace_A(p, g).values - f.values, grid, 1, n - 1)
    top = _surface_l2(p.values[:, :, -1] - gtop.values, grid)
    dp = sp.apply_vertical(p.values, grid)[:, :, 0]
    bottom = _surface_l2(-g.K.values[:, :, 0] * dp - hbot.values, grid)
    scale = (sp.l2_norm_volume(f) + sp.l2_norm_surface(gtop)
             + sp.l2_norm_surface(hbot))
    return PoissonResidual(interior=interior, top=top, bottom=bottom, scale=scale)


@dataclass(frozen=True)
class PoissonSolution:
    p: VolumeField
    iterations: int
    residuals: tuple[float, ...]


def solve_poisson_A(g: geo.GeometryState, f: VolumeField, gtop: SurfaceField,
                    hbot: SurfaceField,
                    cfg: SolverConfig = SolverConfig()) -> PoissonSolution:
    """Transformed scalar solve: lap_A p = f in the slab, p = gtop on the top,
    grad_A p . (outward bottom normal) = hbot underneath."""
    grid = g.grid
    p = zeros_volume(grid)
    omega = cfg.damping
    residuals = []
    for it in range(1, cfg.max_iter + 1):
        f_eff = VolumeField(grid, f.values + _flat_lap(p, grid)
                            - geo.laplace_A(p, g).values)
        dp_bot = sp.apply_vertical(p.values, grid)[:, :, 0]
        h_eff = SurfaceField(grid.horizontal,
                             hbot.values + (g.K.values[:, :, 0] - 1.0) * dp_bot)
        p_new = solve_poisson_const(f_eff, gtop, h_eff, grid)
        if omega < 1.0:
            p_new = VolumeField(grid, (1 - omega) * p.values + omega * p_new.values)
        p = p_new
        residuals.append(poisson_residual_A(p, g, f, gtop, hbot).relative)
        if residuals[-1] <= cfg.tol:
            return PoissonSolution(p=p, iterations=it, residuals=tuple(residuals))
    rate = (residuals[-1] / residuals[-2]
            if len(residuals) > 1 and residuals[-2] > 0 else float("nan"))
    raise SolverDivergenceError(
        f"scalar fixed point stalled after {cfg.max_iter} steps; last relative "
        f"residual {residuals[-1]:.3e}, contraction estimate {rate:.3f}"
    )


# ---------------------------------------------------------------------------
# pressure at the initial instant


def initial_pressure(u0, g0: geo.GeometryState, F0=None, H0=None,
                     cfg: SolverConfig = SolverConfig()) -> VolumeField:
    """Pressure induced by the initial velocity and data.

    Solves the transformed scalar problem whose source is the transformed
    divergence of (F0 - R u0), with the top value
    (H0 + sym_grad_A(u0) N) . N / |N|^2 and the bottom outward derivative
    (F0 + lap_A u0) . (-e3).  R is skipped when the velocity vanishes, where
    it contributes nothing but would demand a surface rate the caller may not
    have.
    """
    grid = g0.grid
    h = grid.horizontal
    if F0 is None:
        F0 = tuple(zeros_volume(grid) for _ in range(3))
    if H0 is None:
        H0 = tuple(zeros_surface(h) for _ in range(3))

    u_is_zero = all(float(np.max(np.abs(c.values))) == 0.0 for c in u0)
    if u_is_zero:
        src = tuple(VolumeField(grid, c.values) for c in F0)
    else:
        Ru = geo.operator_R(g0).apply(u0)
        src = tuple(VolumeField(grid, F0[i].values - Ru[i].values) for i in range(3))
    f = geo.div_A(src, g0)

    # sym_grad_A(u0) N on the top comes out of the zero-pressure stress vector
    DN = geo.stress_vector_top(zeros_volume(grid), u0, g0)
    n1, n2, n3 = (c.values for c in g0.Nvec)
    norm2 = n1 ** 2 + n2 ** 2 + n3 ** 2
    num = np.zeros((h.Nx, h.Ny))
    for Hi, DNi, ni in zip(H0, DN, (n1, n2, n3)):
        num += (Hi.values - DNi.values) * ni
    gtop = SurfaceField(h, num / norm2)

    lap_u3_bot = 0.0 if u_is_zero else geo.laplace_A(u0[2], g0).values[:, :, 0]
    hbot = SurfaceField(h, -(F0[2].values[:, :, 0] + lap_u3_bot))
    return solve_poisson_A(g0, f, gtop, hbot, cfg).p


# ---------------------------------------------------------------------------
# monitored elliptic-estimate ratio


def elliptic_ratio(u, p, data: StokesData) -> float:
    """(||u||_2 + ||p||_1) / (||F||_0 + ||G||_1 + ||H||_{1/2}); scale-free."""
    num = sum(sp.sobolev_norm_volume(c, 2) for c in u) + sp.sobolev_norm_volume(p, 1)
    den = (sum(sp.l2_norm_volume(f) for f in data.F)
           + sp.sobolev_norm_volume(data.G, 1)
           + sum(sp.sobolev_norm_surface(h, 0.5) for h in data.H))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den
