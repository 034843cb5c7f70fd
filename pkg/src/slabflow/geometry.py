"""Coefficient geometry of the slab-flattening map and transformed calculus.

The moving fluid domain is pulled back to the fixed slab by the map

    Phi(x', x3) = (x', x3 b(x')/b0 + etabar (1 + x3/b0)),

where etabar is the exponential extension of the surface displacement eta
(module :mod:`slabflow.extension`) and b is the (static, band-limited) bottom
profile.  Everything downstream needs only a handful of scalar coefficient
fields built from Phi:

    btilde = 1 + x3/b0
    A = (d1 b / b0) x3 + d1 etabar . btilde
    B = (d2 b / b0) x3 + d2 etabar . btilde
    J = b/b0 + etabar/b0 + d3 etabar . btilde     (Jacobian of Phi)
    K = 1/J

and the sparse transform matrix rows (1, 0, -A K), (0, 1, -B K), (0, 0, K).
The transformed gradient applies those rows to (d1, d2, d3); divergence,
symmetric gradient, stress, and Laplacian are built by composition so that
every operator in the package differentiates with the same two realizations
(spectral multipliers horizontally, one finite-difference matrix vertically).

d3 etabar is populated from the extension's exact per-mode derivative, not by
differencing the sampled etabar; the row-sum (Piola) residual then measures
pure finite-difference truncation and decays at fourth order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .errors import ContractError, DegenerateSurfaceError, DiffeomorphismError, FieldError
from .extension import ExtensionConfig, extend, extend_dz
from .fields import SurfaceField, VolumeField, VolumeGrid, zeros_volume


def _vals(f):
    return f.values


def _wrap(grid, arr):
    return VolumeField(grid, arr)


@dataclass(frozen=True)
class GeometryState:
    """Immutable bundle of flattening-map coefficients on one grid."""

    grid: VolumeGrid
    epsilon: float
    delta: float
    eta: SurfaceField
    bottom: SurfaceField
    ext_cfg: ExtensionConfig
    etabar: VolumeField
    d3_etabar: VolumeField
    btilde: VolumeField
    A: VolumeField
    B: VolumeField
    J: VolumeField
    K: VolumeField
    Nvec: tuple[SurfaceField, SurfaceField, SurfaceField]
    eta_t: SurfaceField | None
    detabar_t: VolumeField
    has_surface_velocity: bool

    @property
    def Amat(self):
        """The three nontrivial transform-matrix entries (-AK, -BK, K)."""
        g = self.grid
        AK = _wrap(g, -self.A.values * self.K.values)
        BK = _wrap(g, -self.B.values * self.K.values)
        return AK, BK, self.K

    def is_flat(self):
        return (np.max(np.abs(self.eta.values)) == 0.0
                and np.max(np.abs(self.bottom.values - self.grid.b0)) == 0.0)


def build_geometry(eta: SurfaceField, eta_t: SurfaceField | None,
                   b: SurfaceField, grid: VolumeGrid,
                   epsilon: float, delta: float,
                   ext_cfg: ExtensionConfig | None = None) -> GeometryState:
    """Assemble all coefficient fields and enforce the Jacobian floor."""
    h = grid.horizontal
    if eta.grid != h or b.grid != h:
        raise FieldError("surface data and volume grid have mismatched horizontal grids")
    if float(np.min(b.values)) <= 0.0:
        raise DegenerateSurfaceError("bottom profile must be strictly positive")
    cfg = ext_cfg if ext_cfg is not None else ExtensionConfig(epsilon=epsilon)

    etabar = extend(eta, cfg, grid)
    d3_etabar = extend_dz(eta, cfg, grid)
    x3 = grid.x3
    btilde_arr = np.broadcast_to(1.0 + x3 / grid.b0, grid.shape).copy()

    b_col = b.values[:, :, None]
    d1b = sp.horizontal_derivative(b, 1).values[:, :, None]
    d2b = sp.horizontal_derivative(b, 2).values[:, :, None]
    d1e = sp.horizontal_derivative(etabar, 1).values
    d2e = sp.horizontal_derivative(etabar, 2).values

    A_arr = (d1b / grid.b0) * x3[None, None, :] + d1e * btilde_arr
    B_arr = (d2b / grid.b0) * x3[None, None, :] + d2e * btilde_arr
    J_arr = b_col / grid.b0 + etabar.values / grid.b0 + d3_etabar.values * btilde_arr

    jmin = float(np.min(J_arr))
    if jmin < delta:
        i, j, k = np.unravel_index(int(np.argmin(J_arr)), J_arr.shape)
        loc = (float(h.x1[i]), float(h.x2[j]), float(x3[k]))
        raise DiffeomorphismError(
            f"Jacobian {jmin:.6e} dips below the floor {delta:.6e}",
            location=loc, value=jmin,
        )
    K_arr = 1.0 / J_arr

    N1 = SurfaceField(h, -sp.horizontal_derivative(eta, 1).values)
    N2 = SurfaceField(h, -sp.horizontal_derivative(eta, 2).values)
    N3 = SurfaceField(h, np.ones((h.Nx, h.Ny)))

    if eta_t is not None:
        detabar_t = extend(eta_t, cfg, grid)
        has_vel = True
    else:
        detabar_t = zeros_volume(grid)
        has_vel = False

    return GeometryState(
        grid=grid, epsilon=epsilon, delta=delta, eta=eta, bottom=b, ext_cfg=cfg,
        etabar=etabar, d3_etabar=d3_etabar, btilde=_wrap(grid, btilde_arr),
        A=_wrap(grid, A_arr), B=_wrap(grid, B_arr),
        J=_wrap(grid, J_arr), K=_wrap(grid, K_arr),
        Nvec=(N1, N2, N3), eta_t=eta_t, detabar_t=detabar_t,
        has_surface_velocity=has_vel,
    )


def flat_geometry(grid: VolumeGrid, epsilon: float = 0.5, delta: float = 0.5) -> GeometryState:
    """Equilibrium state: eta = 0, flat bottom at depth b0."""
    h = grid.horizontal
    eta = SurfaceField(h, np.zeros((h.Nx, h.Ny)))
    b = SurfaceField(h, np.full((h.Nx, h.Ny), grid.b0))
    return build_geometry(eta, None, b, grid, epsilon, delta)


# ---------------------------------------------------------------------------
# transformed differential operators (arrays in, arrays out at the core)


def _grad_arrays(arr, g: GeometryState):
    grid = g.grid
    d1 = sp.horizontal_derivative(_wrap(grid, arr), 1).values
    d2 = sp.horizontal_derivative(_wrap(grid, arr), 2).values
    d3 = sp.apply_vertical(arr, grid)
    AK = g.A.values * g.K.values
    BK = g.B.values * g.K.values
    return (d1 - AK * d3, d2 - BK * d3, g.K.values * d3)


def grad_A(f: VolumeField, g: GeometryState):
    """Transformed gradient: rows of the sparse matrix applied to (d1,d2,d3)."""
    g1, g2, g3 = _grad_arrays(f.values, g)
    grid = g.grid
    return _wrap(grid, g1), _wrap(grid, g2), _wrap(grid, g3)


def div_A(v, g: GeometryState) -> VolumeField:
    """Transformed divergence of a velocity triple."""
    v1, v2, v3 = v
    grid = g.grid
    a1 = _grad_arrays(v1.values, g)[0]
    a2 = _grad_arrays(v2.values, g)[1]
    a3 = _grad_arrays(v3.values, g)[2]
    return _wrap(grid, a1 + a2 + a3)


def laplace_A(f: VolumeField, g: GeometryState) -> VolumeField:
    """Composition div_A(grad_A f); shares stencils with the solvers."""
    g1, g2, g3 = grad_A(f, g)
    return div_A((g1, g2, g3), g)


_SYM_INDEX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def sym_grad_A(u, g: GeometryState):
    """Doubled symmetric transformed gradient, components (11,22,33,12,13,23)."""
    grads = [_grad_arrays(comp.values, g) for comp in u]
    grid = g.grid
    out = []
    for (i, j) in _SYM_INDEX:
        out.append(_wrap(grid, grads[j][i] + grads[i][j]))
    return tuple(out)


def _sym_lookup(S, i, j):
    if i == j:
        return S[i].values
    pair = (min(i, j), max(i, j))
    return S[_SYM_INDEX.index(pair)].values


def stress_A(p: VolumeField, u, g: GeometryState):
    """Transformed stress p I - sym_grad_A(u), components (11,22,33,12,13,23)."""
    D = sym_grad_A(u, g)
    grid = g.grid
    out = []
    for idx, (i, j) in enumerate(_SYM_INDEX):
        arr = -D[idx].values
        if i == j:
            arr = arr + p.values
        out.append(_wrap(grid, arr))
    return tuple(out)


def div_A_tensor(S, g: GeometryState):
    """Row-wise transformed divergence of a symmetric tensor field."""
    grid = g.grid
    out = []
    for i in range(3):
        acc = np.zeros(grid.shape)
        for j in range(3):
            acc = acc + _grad_arrays(_sym_lookup(S, i, j), g)[j]
        out.append(_wrap(grid, acc))
    return tuple(out)


def stress_vector_top(p: VolumeField, u, g: GeometryState):
    """Top-trace of the transformed stress applied to the surface normal."""
    S = stress_A(p, u, g)
    n1, n2, n3 = (f.values for f in g.Nvec)
    out = []
    for i in range(3):
        row = (_sym_lookup(S, i, 0)[:, :, -1] * n1
               + _sym_lookup(S, i, 1)[:, :, -1] * n2
               + _sym_lookup(S, i, 2)[:, :, -1] * n3)
        out.append(SurfaceField(g.grid.horizontal, row))
    return tuple(out)


# ---------------------------------------------------------------------------
# volume change of variables


def pushforward_M(v, g: GeometryState):
    """Solenoidal-to-transformed change of variables (K, K, AK.BK.1 rows)."""
    grid = g.grid
    K = g.K.values
    v1, v2, v3 = (f.values for f in v)
    w1 = K * v1
    w2 = K * v2
    w3 = g.A.values * K * v1 + g.B.values * K * v2 + v3
    return _wrap(grid, w1), _wrap(grid, w2), _wrap(grid, w3)


def pullback_Minv(v, g: GeometryState):
    """Inverse change of variables: rows (J,0,0), (0,J,0), (-A,-B,1)."""
    grid = g.grid
    J = g.J.values
    v1, v2, v3 = (f.values for f in v)
    return (_wrap(grid, J * v1), _wrap(grid, J * v2),
            _wrap(grid, -g.A.values * v1 - g.B.values * v2 + v3))


def projection_Pi0(v, g: GeometryState):
    """Pointwise orthogonal projection onto the plane normal to Nvec."""
    n = [f.values for f in g.Nvec]
    norm2 = n[0] ** 2 + n[1] ** 2 + n[2] ** 2
    dot = sum(comp.values * ni for comp, ni in zip(v, n))
    h = g.grid.horizontal
    return tuple(SurfaceField(h, comp.values - dot * ni / norm2)
                 for comp, ni in zip(v, n))


# ---------------------------------------------------------------------------
# time-derivative operator


@dataclass(frozen=True)
class ROperator:
    """Sparse matrix d/dt(M) M^{-1}: diagonal (twice) plus a bottom row."""

    diag: VolumeField        # J d/dt K, entries (1,1) and (2,2)
    r31: VolumeField         # J d/dt (A K)
    r32: VolumeField         # J d/dt (B K)

    def apply(self, v):
        grid = self.diag.grid
        v1, v2, v3 = (f.values for f in v)
        del v3
        return (_wrap(grid, self.diag.values * v1),
                _wrap(grid, self.diag.values * v2),
                _wrap(grid, self.r31.values * v1 + self.r32.values * v2))


def operator_R(g: GeometryState) -> ROperator:
    """Assemble d/dt(M) M^{-1} from the surface velocity's extension."""
    if not g.has_surface_velocity:
        raise ContractError("operator_R needs the surface time derivative in the geometry")
    grid = g.grid
    bt = g.btilde.values
    et = g.detabar_t.values
    d3_et = extend_dz(g.eta_t, g.ext_cfg, grid).values
    d1_et = sp.horizontal_derivative(g.detabar_t, 1).values
    d2_et = sp.horizontal_derivative(g.detabar_t, 2).values

    dtA = d1_et * bt
    dtB = d2_et * bt
    dtJ = et / grid.b0 + d3_et * bt
    K = g.K.values
    dtK = -(K ** 2) * dtJ
    J = g.J.values
    diag = J * dtK
    r31 = J * (dtA * K + g.A.values * dtK)
    r32 = J * (dtB * K + g.B.values * dtK)
    return ROperator(diag=_wrap(grid, diag), r31=_wrap(grid, r31), r32=_wrap(grid, r32))


# ---------------------------------------------------------------------------
# structural checks


def piola_residual(g: GeometryState) -> float:
    """max |row-sum derivative of J * transform matrix|; zero in the limit.

    Rows reduce algebraically to (d1 J - d3 A, d2 J - d3 B, d3 1), so the
    returned number is a pure vertical-truncation residual.
    """
    d1J = sp.horizontal_derivative(g.J, 1).values
    d2J = sp.horizontal_derivative(g.J, 2).values
    d3A = sp.apply_vertical(g.A.values, g.grid)
    d3B = sp.apply_vertical(g.B.values, g.grid)
    JK = g.J.values * g.K.values
    d3JK = sp.apply_vertical(JK, g.grid)
    r1 = np.max(np.abs(d1J - d3A))
    r2 = np.max(np.abs(d2J - d3B))
    r3 = np.max(np.abs(d3JK))
    return float(max(r1, r2, r3))


def weighted_norm_bounds(u, g: GeometryState):
    """(c1 ||u||_0^2, int J |u|^2, c2 ||u||_0^2) with c1 = min J, c2 = max J."""
    grid = g.grid
    mag2 = sum(f.values ** 2 for f in u)
    plain = sp.integrate_volume(_wrap(grid, mag2))
    weighted = sp.integrate_volume(_wrap(grid, g.J.values * mag2))
    c1 = float(np.min(g.J.values))
    c2 = float(np.max(g.J.values))
    return c1 * plain, weighted, c2 * plain


def korn_quotient(u, grid: VolumeGrid) -> float:
    """Flat-slab Rayleigh quotient ||sym grad u||_0^2 / ||u||_1^2 (doubled form)."""
    comps = [f.values for f in u]
    grads = []
    for arr in comps:
        f = _wrap(grid, arr)
        grads.append((sp.horizontal_derivative(f, 1).values,
                      sp.horizontal_derivative(f, 2).values,
                      sp.apply_vertical(arr, grid)))
    num = 0.0
    for i in range(3):
        for j in range(3):
            num += sp.integrate_volume(_wrap(grid, (grads[j][i] + grads[i][j]) ** 2))
    den = sum(sp.sobolev_norm_volume(f, 1) ** 2 for f in u)
    if den == 0.0:
        raise FieldError("Korn quotient of the zero field is undefined")
    return num / den


def korn_lower_bound(grid: VolumeGrid, rng, n_samples: int = 50) -> float:
    """Randomized estimate of the infimum of korn_quotient over fields
    vanishing at the bottom.  Draws are horizontal-grid deterministic, so the
    estimate is comparable across vertical refinements."""
    from .fields import random_volume_field
    best = np.inf
    for _ in range(n_samples):
        u = tuple(random_volume_field(grid, rng, bottom_zero=True) for _ in range(3))
        best = min(best, korn_quotient(u, grid))
    return float(best)
