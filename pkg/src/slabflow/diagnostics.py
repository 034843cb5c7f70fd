"""Energy and dissipation functionals, identity residuals, and decay fits.

Derivative counting.  Every functional here is a weighted sum of squared
L2 norms of mixed derivatives ∂1^a ∂2^b ∂3^c (dt^j ·) with the time slot
weighted doubly (one time derivative costs two space derivatives).  The
energy family at level n sums, once each, all multi-indices with total
weighted order at most 2n and at least a prescribed number of horizontal
derivatives (the "minimum count": 2, 1, or 0).  Because the three levels
differ only in that lower bound, their term sets are nested and the
inequalities E_level0 >= E_level1 >= E_level2 hold exactly, term by term.
The dissipation family instead applies a horizontal block of orders
[lo, hi] and measures each member in a low-order mixed norm (H^2 for
velocity, a plain gradient for pressure, H^{1/2} on the surface).

Realization.  Horizontal derivatives act spectrally through the squared
first-derivative symbol (Nyquist bin zeroed, matching the composition
convention used by the elliptic operators), so a block over many indices
collapses to one polynomial weight per mode.  Vertical derivatives are
powers of the five-point first-derivative matrix.  Time derivatives of
order one come from a backward difference over the state's history ring;
higher orders are omitted and flagged, never fabricated.

The two energy identities are evaluated as stated balances over one
accepted step: quadratic terms differenced in time, the equation
residuals of the step paired against the solution, surface terms against
the traces.  Two display-level ambiguities are resolved by computing
both variants: the volume pairing uses the momentum residual (the scalar
pairing is also reported), and the flat-form dissipation is reported
with and without the geometric volume factor, the unweighted one being
the convergent choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import spectral as sp
from . import transport as tr
from .errors import ConfigError, FieldError
from .fields import SurfaceField, VolumeField, VolumeGrid

N_DEFAULT = 4


@dataclass(frozen=True)
class DiagConfig:
    n_level: int = N_DEFAULT + 2
    lam: float = 0.5
    J_max: int = 1
    max_vertical_order: int = 4

    def __post_init__(self):
        if self.n_level < 3:
            raise ConfigError(f"energy level must be at least 3, got {self.n_level!r}")
        if not 0.0 < self.lam < 1.0:
            raise ConfigError(f"Riesz parameter must lie in (0, 1), got {self.lam!r}")
        if self.J_max not in (0, 1):
            raise ConfigError(
                "only temporal orders 0 and 1 are realizable by backward "
                f"differences over one step; got J_max={self.J_max!r}")
        if self.max_vertical_order < 1:
            raise ConfigError(
                f"vertical-order cap must be at least 1, got {self.max_vertical_order!r}")


@dataclass(frozen=True)
class RatioEntry:
    """One monitored interpolation quotient; recorded, never asserted."""

    label: str
    value: float
    theta: float
    reference: str


@dataclass(frozen=True)
class EnergyReport:
    t: float
    E_n2: float
    D_n2: float
    E_n: float
    D_n: float
    E_n1: float
    F2N: float
    kappa: float
    GN: float
    res_geometric: float
    res_perturbed: float
    monitored_ratios: tuple = ()
    flags: tuple = ()
    sup_E2N: float = 0.0
    sup_weighted1: float = 0.0
    sup_weighted2: float = 0.0
    sup_F2N_ratio: float = 0.0

    def __post_init__(self):
        for name in ("E_n2", "D_n2", "E_n", "D_n", "E_n1", "F2N", "kappa",
                     "GN", "res_geometric", "res_perturbed"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ConfigError(f"report entry {name} must be nonnegative and finite, got {v!r}")
        for entry in self.monitored_ratios:
            if not (np.isfinite(entry.value) and entry.value >= 0.0):
                raise ConfigError(f"monitored ratio {entry.label!r} is {entry.value!r}")


# ---------------------------------------------------------------------------
# derivative machinery

_DPOW: dict = {}
_WCACHE: dict = {}


def _dpowers(grid: VolumeGrid, kmax: int):
    key = (grid.Nz, grid.dz)
    pows = _DPOW.get(key)
    if pows is None:
        pows = [np.eye(grid.Nz)]
        _DPOW[key] = pows
    D = sp.diff_matrix(grid.Nz, grid.dz, 1)
    while len(pows) <= kmax:
        pows.append(pows[-1] @ D)
    return pows


def _hsymbols(h):
    """Squared first-derivative symbols per axis, Nyquist bins zeroed."""
    key = (h.Nx, h.Ny, h.L1, h.L2)
    got = _WCACHE.get(("sym", key))
    if got is None:
        x = (2.0 * np.pi * h.n1) ** 2
        y = (2.0 * np.pi * h.n2) ** 2
        x = x.copy()
        y = y.copy()
        x[h.Nx // 2, 0] = 0.0
        y[0, h.Ny // 2] = 0.0
        got = (x, y)
        _WCACHE[("sym", key)] = got
    return got


def _range_weight(h, lo, hi):
    """sum of x^a y^b over horizontal orders lo <= a+b <= hi, once each."""
    key = ("range", h.Nx, h.Ny, h.L1, h.L2, lo, hi)
    W = _WCACHE.get(key)
    if W is None:
        x, y = _hsymbols(h)
        W = np.zeros((h.Nx, h.Ny))
        for a in range(hi + 1):
            for b in range(hi - a + 1):
                if a + b >= lo:
                    W = W + (x ** a) * (y ** b)
        _WCACHE[key] = W
    return W


def _vertical_l2_table(f: VolumeField, kmax: int):
    """S[c](n) = sum_z w_z |vertical-derivative-of-order-c coeffs|^2."""
    grid = f.grid
    w = sp.vertical_weights(grid.Nz, grid.dz)
    pows = _dpowers(grid, kmax)
    coeffs = f.layer_coeffs
    out = []
    for c in range(kmax + 1):
        V = coeffs @ pows[c].T
        out.append(np.sum((V.real ** 2 + V.imag ** 2) * w, axis=2))
    return out


def _min_count_volume(f: VolumeField, h_min: int, total: int,
                      h_max: int | None = None, vmax: int | None = None) -> float:
    """Once-each sum of ||mixed derivative||_0^2 with horizontal order in
    [h_min, h_max], vertical order <= vmax, and weighted order <= total.

    The vertical cap exists because composed difference matrices amplify
    rounding noise like (1/dz)^order; uncapped sums would be dominated by
    that noise for fields with little horizontal content."""
    if total < h_min:
        return 0.0
    ctop = total if vmax is None else min(vmax, total)
    S = _vertical_l2_table(f, ctop)
    h = f.grid.horizontal
    acc = 0.0
    for c in range(ctop + 1):
        hi = total - c if h_max is None else min(h_max, total - c)
        acc += float(np.sum(_range_weight(h, h_min, hi) * S[c]))
    return h.area * acc


def _min_count_surface(f: SurfaceField, h_min: int, total: int,
                       h_max: int | None = None) -> float:
    if total < h_min:
        return 0.0
    h = f.grid
    hi = total if h_max is None else min(h_max, total)
    W = _range_weight(h, h_min, hi)
    return h.area * float(np.sum(W * np.abs(f.coeffs) ** 2))


def _block_volume_wrapped(f: VolumeField, lo: int, hi: int, wrap: int) -> float:
    """sum over horizontal orders in [lo, hi] of the H^wrap mixed norm."""
    if hi < lo:
        return 0.0
    S = _vertical_l2_table(f, wrap)
    h = f.grid.horizontal
    P = _range_weight(h, lo, hi)
    acc = 0.0
    for c in range(wrap + 1):
        acc += float(np.sum(P * _range_weight(h, 0, wrap - c) * S[c]))
    return h.area * acc


def _block_volume_grad(f: VolumeField, lo: int, hi: int) -> float:
    """sum over horizontal orders in [lo, hi] of ||full gradient||_0^2."""
    if hi < lo:
        return 0.0
    S = _vertical_l2_table(f, 1)
    h = f.grid.horizontal
    x, y = _hsymbols(h)
    P = _range_weight(h, lo, hi)
    return h.area * (float(np.sum(P * (x + y) * S[0])) + float(np.sum(P * S[1])))


def _block_surface_half(f: SurfaceField, lo: int, hi: int) -> float:
    """sum over horizontal orders in [lo, hi] of the H^{1/2} surface norm."""
    if hi < lo:
        return 0.0
    h = f.grid
    half = np.sqrt(1.0 + (2.0 * np.pi * h.mode_abs) ** 2)
    W = _range_weight(h, lo, hi) * half
    return h.area * float(np.sum(W * np.abs(f.coeffs) ** 2))


# ---------------------------------------------------------------------------
# backward differences over the ring


def _time_difference(state):
    """(du, dp, deta) over the last accepted step, or None if unavailable."""
    if not state.history:
        return None
    prev = state.history[0]
    dt = state.t - prev.t
    if dt <= 0:
        return None
    grid = state.geometry.grid
    du = tuple(VolumeField(grid, (a.values - b.values) / dt)
               for a, b in zip(state.u, prev.u))
    dp = VolumeField(grid, (state.p.values - prev.p.values) / dt)
    deta = SurfaceField(grid.horizontal, (state.eta.values - prev.eta.values) / dt)
    return du, dp, deta


# ---------------------------------------------------------------------------
# energy / dissipation families


def energy_min2(state, n: int, j_max: int = 1, vmax: int = 4):
    """Energy and dissipation at level n with minimum horizontal count 2."""
    total = 2 * n
    E = sum(_min_count_volume(c, 2, total, vmax=vmax) for c in state.u)
    E += _min_count_volume(state.p, 2, total - 1, vmax=vmax)
    E += _min_count_surface(state.eta, 2, total)
    D = sum(_block_volume_wrapped(c, 2, total - 1, 2) for c in state.u)
    D += _block_volume_grad(state.p, 2, total - 1)
    D += _block_surface_half(state.eta, 3, total - 1)
    diff = _time_difference(state) if j_max >= 1 else None
    if diff is not None:
        du, dp, deta = diff
        E += sum(_min_count_volume(c, 0, total - 2, vmax=vmax) for c in du)
        E += _min_count_volume(dp, 0, total - 3, vmax=vmax)
        E += _min_count_surface(deta, 0, total - 2)
        D += sum(_block_volume_wrapped(c, 0, total - 3, 2) for c in du)
        D += _block_volume_grad(dp, 0, total - 3)
        D += _block_surface_half(deta, 1, total - 1)
    return E, D


def energy_min1(state, n: int, j_max: int = 1, vmax: int = 4) -> float:
    """Energy at level n with minimum horizontal count 1.  Computed as
    the count-2 energy plus the nonnegative count-exactly-1 band, so the
    ordering against energy_min2 holds in floating point, not just in
    exact arithmetic."""
    total = 2 * n
    band = sum(_min_count_volume(c, 1, total, h_max=1, vmax=vmax) for c in state.u)
    band += _min_count_volume(state.p, 1, total - 1, h_max=1, vmax=vmax)
    band += _min_count_surface(state.eta, 1, total, h_max=1)
    return energy_min2(state, n, j_max, vmax)[0] + band


def energy_full(state, n: int, lam: float, j_max: int = 1, vmax: int = 4):
    """Energy and dissipation at level n without minimum count, with the
    low-frequency Riesz terms.  The energy is the count-1 energy plus the
    nonnegative horizontal-count-0 band plus the Riesz terms, so the
    three levels are ordered exactly as floats."""
    total = 2 * n
    E = energy_min1(state, n, j_max, vmax)
    E += sum(_min_count_volume(c, 0, total, h_max=0, vmax=vmax) for c in state.u)
    E += _min_count_volume(state.p, 0, total - 1, h_max=0, vmax=vmax)
    E += _min_count_surface(state.eta, 0, total, h_max=0)
    E += sum(sp.l2_norm_volume(sp.riesz_potential(c, lam)) ** 2 for c in state.u)
    E += sp.l2_norm_surface(sp.riesz_potential(state.eta, lam)) ** 2
    D = sum(_min_count_volume(sp.riesz_potential(c, lam), 0, 1) for c in state.u)
    D += sum(_block_volume_wrapped(c, 0, total - 1, 2) for c in state.u)
    D += _block_volume_grad(state.p, 0, total - 1)
    D += _block_surface_half(state.eta, 0, total - 1)
    diff = _time_difference(state) if j_max >= 1 else None
    if diff is not None:
        du, dp, deta = diff
        D += sum(_block_volume_wrapped(c, 0, total - 3, 2) for c in du)
        D += _block_volume_grad(dp, 0, total - 3)
        D += _block_surface_half(deta, 0, total - 2)
    return E, D


# ---------------------------------------------------------------------------
# pointwise quantities


def _grad_arrays(f: VolumeField):
    grid = f.grid
    return (sp.horizontal_derivative(f, 1).values,
            sp.horizontal_derivative(f, 2).values,
            sp.apply_vertical(f.values, grid))


def kappa(state) -> float:
    """Squared sup of the velocity gradient and Hessian plus the H^2 size
    of the horizontal trace gradients."""
    grid = state.geometry.grid
    grad_sq = np.zeros(grid.shape)
    hess_sq = np.zeros(grid.shape)
    for comp in state.u:
        g = _grad_arrays(comp)
        for gj in g:
            grad_sq += gj ** 2
            gfield = VolumeField(grid, gj)
            for gk in _grad_arrays(gfield):
                hess_sq += gk ** 2
    surf = 0.0
    for comp in state.u[:2]:
        trace = comp.trace_top()
        for axis in (1, 2):
            surf += sp.sobolev_norm_surface(
                sp.horizontal_derivative(trace, axis), 2) ** 2
    return float(grad_sq.max()) + float(hess_sq.max()) + surf


# ---------------------------------------------------------------------------
# flat-form nonlinearities


@dataclass(frozen=True)
class GTerms:
    """The forcing of the constant-coefficient rewriting of the system.

    momentum = pressure_part + convection_part + second_order_part
             + first_order_part + lift_part; the parts are kept for
    term-by-term inspection.
    """

    momentum: tuple
    divergence: VolumeField
    stress: tuple
    transport: SurfaceField
    pressure_part: tuple
    convection_part: tuple
    second_order_part: tuple
    first_order_part: tuple
    lift_part: tuple


def _flat_lap(f: VolumeField) -> np.ndarray:
    grid = f.grid
    d1 = sp.horizontal_derivative(f, 1)
    d2 = sp.horizontal_derivative(f, 2)
    return (sp.horizontal_derivative(d1, 1).values
            + sp.horizontal_derivative(d2, 2).values
            + sp.apply_vertical(sp.apply_vertical(f.values, grid), grid))


def assemble_G(state, g: geo.GeometryState | None = None) -> GTerms:
    """Rewrite the transformed system over the flat slab: everything the
    constant-coefficient operators miss is collected into forcing terms.

    The metric-coefficient parts reuse the composition-realized operators
    (so the rewriting is exact at the discrete level), while products of
    two evolving fields are dealiased.
    """
    if g is None:
        g = state.geometry
    grid = g.grid
    h = grid.horizontal
    u, p, eta = state.u, state.p, state.eta
    if any(c.grid != grid for c in u) or p.grid != grid or eta.grid != h:
        raise FieldError("state fields and geometry live on different grids")

    grad_Ap = geo.grad_A(p, g)
    pressure = []
    for i in range(3):
        if i < 2:
            flat = sp.horizontal_derivative(p, i + 1).values
        else:
            flat = sp.apply_vertical(p.values, grid)
        pressure.append(VolumeField(grid, flat - grad_Ap[i].values))

    convection = []
    for i in range(3):
        gu = geo.grad_A(u[i], g)
        acc = np.zeros(grid.shape)
        for j in range(3):
            acc += sp.dealiased_product(u[j], gu[j]).values
        convection.append(VolumeField(grid, -acc))

    rate_K = sp.dealiased_product(g.detabar_t, g.K)
    rate_btK = VolumeField(grid, rate_K.values * g.btilde.values)
    A, B, K = g.A.values, g.B.values, g.K.values
    c33 = K ** 2 * (1.0 + A ** 2 + B ** 2) - 1.0
    lift, second, first = [], [], []
    for i in range(3):
        d3 = sp.apply_vertical(u[i].values, grid)
        d3f = VolumeField(grid, d3)
        lift.append(sp.dealiased_product(rate_btK, d3f))
        d33 = sp.apply_vertical(d3, grid)
        d13 = sp.horizontal_derivative(d3f, 1).values
        d23 = sp.horizontal_derivative(d3f, 2).values
        sec = VolumeField(grid, c33 * d33 - 2.0 * A * K * d13 - 2.0 * B * K * d23)
        second.append(sec)
        gap = geo.laplace_A(u[i], g).values - _flat_lap(u[i])
        first.append(VolumeField(grid, gap - sec.values))

    momentum = tuple(
        VolumeField(grid, pressure[i].values + convection[i].values
                    + second[i].values + first[i].values + lift[i].values)
        for i in range(3))

    flat_div = (sp.horizontal_derivative(u[0], 1).values
                + sp.horizontal_derivative(u[1], 2).values
                + sp.apply_vertical(u[2].values, grid))
    divergence = VolumeField(grid, flat_div - geo.div_A(u, g).values)

    # top-trace assembly of the boundary forcing, with the normal-trace
    # relation substituted for the pressure-minus-elevation combination
    top = lambda arr: arr[:, :, -1]
    d3u = [top(sp.apply_vertical(c.values, grid)) for c in u]
    d1u = [top(sp.horizontal_derivative(c, 1).values) for c in u]
    d2u = [top(sp.horizontal_derivative(c, 2).values) for c in u]
    At, Bt, Kt = top(A), top(B), top(K)
    d1e = sp.horizontal_derivative(eta, 1)
    d2e = sp.horizontal_derivative(eta, 2)

    bracket1 = -d1u[2] - Kt * d3u[0] + At * Kt * d3u[2]
    bracket2 = -d2u[2] - Kt * d3u[1] + Bt * Kt * d3u[2]
    shear = -d2u[0] - d1u[1] + Bt * Kt * d3u[0] + At * Kt * d3u[1]
    p_minus_eta = (sp.dealiased_product(d1e, SurfaceField(h, bracket1)).values
                   + sp.dealiased_product(d2e, SurfaceField(h, bracket2)).values
                   + 2.0 * Kt * d3u[2])
    col1 = (p_minus_eta - 2.0 * (d1u[0] - At * Kt * d3u[0]), shear, bracket1)
    col2 = (shear, p_minus_eta - 2.0 * (d2u[1] - Bt * Kt * d3u[1]), bracket2)
    col3 = ((Kt - 1.0) * d3u[0] - At * Kt * d3u[2],
            (Kt - 1.0) * d3u[1] - Bt * Kt * d3u[2],
            2.0 * (Kt - 1.0) * d3u[2])
    stress = tuple(
        SurfaceField(h, sp.dealiased_product(d1e, SurfaceField(h, col1[i])).values
                     + sp.dealiased_product(d2e, SurfaceField(h, col2[i])).values
                     + col3[i])
        for i in range(3))

    transport = SurfaceField(
        h, -(sp.dealiased_product(d1e, u[0].trace_top()).values
             + sp.dealiased_product(d2e, u[1].trace_top()).values))

    return GTerms(momentum=momentum, divergence=divergence, stress=stress,
                  transport=transport, pressure_part=tuple(pressure),
                  convection_part=tuple(convection),
                  second_order_part=tuple(second),
                  first_order_part=tuple(first), lift_part=tuple(lift))


# ---------------------------------------------------------------------------
# energy identities over one step


def _volume_integral(arr, grid, weight=None):
    w = sp.vertical_weights(grid.Nz, grid.dz)
    if weight is not None:
        arr = arr * weight
    return float(np.sum(arr @ w)) * grid.horizontal.cell_area


def _surface_integral(arr, h):
    return float(np.sum(arr)) * h.cell_area


def _quadratic_weighted(state):
    g = state.geometry
    grid = g.grid
    total = 0.0
    for c in state.u:
        total += _volume_integral(c.values ** 2, grid, weight=g.J.values)
    return 0.5 * total + 0.5 * _surface_integral(state.eta.values ** 2, grid.horizontal)


def _quadratic_flat(state):
    grid = state.geometry.grid
    total = sum(_volume_integral(c.values ** 2, grid) for c in state.u)
    return 0.5 * total + 0.5 * _surface_integral(state.eta.values ** 2, grid.horizontal)


def _step_pair(old, new):
    dt = new.t - old.t
    if dt <= 0:
        raise ConfigError("identity residuals need a forward step pair")
    return dt


@dataclass(frozen=True)
class IdentityBalance:
    residual: float
    alternate: float
    lhs: float
    rhs: float


def identity_residual_geometric(old, new) -> IdentityBalance:
    """Balance of the weighted quadratic form against the step's own
    equation residuals: momentum against the solution, divergence against
    the pressure, traction minus the elevation load against the trace,
    and the transport defect against the elevation.  `alternate` pairs
    the volume term scalarly instead of against the momentum residual."""
    dt = _step_pair(old, new)
    g = new.geometry
    grid = g.grid
    h = grid.horizontal

    sym = geo.sym_grad_A(new.u, g)
    diss = np.zeros(grid.shape)
    for idx, (i, j) in enumerate(geo._SYM_INDEX):
        factor = 1.0 if i == j else 2.0
        diss += factor * sym[idx].values ** 2
    lhs = ((_quadratic_weighted(new) - _quadratic_weighted(old)) / dt
           + 0.5 * _volume_integral(diss, grid, weight=g.J.values))

    mom = []
    for i in range(3):
        bd = (new.u[i].values - old.u[i].values) / dt
        mom.append(bd - geo.laplace_A(new.u[i], g).values
                   + geo.grad_A(new.p, g)[i].values)
    div = geo.div_A(new.u, g).values
    stress = geo.stress_vector_top(new.p, new.u, g)
    d1e = sp.horizontal_derivative(new.eta, 1)
    d2e = sp.horizontal_derivative(new.eta, 2)
    load = (-sp.dealiased_product(new.eta, d1e).values,
            -sp.dealiased_product(new.eta, d2e).values,
            new.eta.values)
    trace = tuple(c.trace_top() for c in new.u)
    adv = tr.advection_rhs(new.eta, trace)
    transport = (new.eta.values - old.eta.values) / dt - adv.values

    Jv = g.J.values
    volume = sum(_volume_integral(new.u[i].values * mom[i], grid, weight=Jv)
                 for i in range(3))
    volume += _volume_integral(new.p.values * div, grid, weight=Jv)
    scalar_sum = sum(c.values for c in new.u)
    volume_alt = (_volume_integral(scalar_sum * div, grid, weight=Jv)
                  + _volume_integral(new.p.values * div, grid, weight=Jv))
    surface = _surface_integral(
        -sum(trace[i].values * (stress[i].values - load[i]) for i in range(3))
        + new.eta.values * transport, h)
    return IdentityBalance(residual=abs(lhs - (volume + surface)),
                           alternate=abs(lhs - (volume_alt + surface)),
                           lhs=lhs, rhs=volume + surface)


def identity_residual_perturbed(old, new, gterms: GTerms | None = None) -> IdentityBalance:
    """Balance of the unweighted quadratic form against the flat-form
    forcing; `alternate` weights the dissipation by the volume factor."""
    dt = _step_pair(old, new)
    g = new.geometry
    grid = g.grid
    h = grid.horizontal
    if gterms is None:
        gterms = assemble_G(new, g)

    grads = [_grad_arrays(c) for c in new.u]
    diss = np.zeros(grid.shape)
    for i in range(3):
        for j in range(3):
            diss += (grads[i][j] + grads[j][i]) ** 2
    bd = (_quadratic_flat(new) - _quadratic_flat(old)) / dt
    lhs = bd + 0.5 * _volume_integral(diss, grid)
    lhs_weighted = bd + 0.5 * _volume_integral(diss, grid, weight=g.J.values)

    volume = sum(_volume_integral(new.u[i].values * gterms.momentum[i].values, grid)
                 for i in range(3))
    volume += _volume_integral(new.p.values * gterms.divergence.values, grid)
    trace = tuple(c.trace_top() for c in new.u)
    surface = _surface_integral(
        -sum(trace[i].values * gterms.stress[i].values for i in range(3))
        + new.eta.values * gterms.transport.values, h)
    rhs = volume + surface
    return IdentityBalance(residual=abs(lhs - rhs),
                           alternate=abs(lhs_weighted - rhs),
                           lhs=lhs, rhs=rhs)


# ---------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    exponential_rate: float
    exponential_r2: float
    algebraic_rate: float
    algebraic_r2: float
    points_used: int


def _fit(xs, ys):
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


def decay_fit(reports, window=None, field_name: str = "E_n2") -> DecayFit:
    """Least-squares decay rates of a report series: log value against
    time (exponential) and against log(1+t) (algebraic)."""
    pts = []
    for r in reports:
        if hasattr(r, "t"):
            pts.append((float(r.t), float(getattr(r, field_name))))
        else:
            t, v = r
            pts.append((float(t), float(v)))
    if window is not None:
        lo, hi = window
        pts = [(t, v) for t, v in pts if lo <= t <= hi]
    pts = [(t, v) for t, v in pts if v > 0.0]
    if len(pts) < 2:
        raise ConfigError("decay fit needs at least two positive samples")
    ts = np.array([t for t, _ in pts])
    logv = np.log([v for _, v in pts])
    s_exp, r2_exp = _fit(ts, logv)
    s_alg, r2_alg = _fit(np.log1p(ts), logv)
    return DecayFit(exponential_rate=-s_exp, exponential_r2=r2_exp,
                    algebraic_rate=-s_alg, algebraic_r2=r2_alg,
                    points_used=len(pts))


# ---------------------------------------------------------------------------
# monitored interpolation quotients


def _family_norms_volume(fields, grid):
    """(sup^2, L2^2) of a family of arrays treated as one vector field."""
    sq = np.zeros(grid.shape)
    l2 = 0.0
    for arr in fields:
        sq += arr ** 2
        l2 += _volume_integral(arr ** 2, grid)
    return float(sq.max()), l2


def _family_norms_surface(fields, h):
    sq = np.zeros((h.Nx, h.Ny))
    l2 = 0.0
    for arr in fields:
        sq += arr ** 2
        l2 += _surface_integral(arr ** 2, h)
    return float(sq.max()), l2


def _horizontal_family(fields, grid):
    out = []
    for arr in fields:
        f = VolumeField(grid, arr)
        out.append(sp.horizontal_derivative(f, 1).values)
        out.append(sp.horizontal_derivative(f, 2).values)
    return out


def _horizontal_family_surface(fields, h):
    out = []
    for arr in fields:
        f = SurfaceField(h, arr)
        out.append(sp.horizontal_derivative(f, 1).values)
        out.append(sp.horizontal_derivative(f, 2).values)
    return out


def monitored_ratios(state, cfg: DiagConfig = DiagConfig(),
                     gterms: GTerms | None = None):
    """Interpolation quotients value / (high^theta low^(1-theta)) for the
    tabulated quantities; zero when the reference energies vanish."""
    n = cfg.n_level
    lam = cfg.lam
    r = 2.0 * lam / (4.0 + lam)
    E2, D2 = energy_min2(state, n, cfg.J_max, cfg.max_vertical_order)
    E_full, _ = energy_full(state, n, lam, cfg.J_max, cfg.max_vertical_order)
    E_low = energy_full(state, 2 * (n - 2), lam, cfg.J_max, cfg.max_vertical_order)[0]

    def quot(value, theta, base):
        den = base ** theta * E_low ** (1.0 - theta)
        return 0.0 if den <= 0.0 else value / den

    entries = []

    def push(label, value, theta_e, theta_d):
        entries.append(RatioEntry(label + "|energy", quot(value, theta_e, E2),
                                  theta_e, "energy"))
        entries.append(RatioEntry(label + "|dissipation", quot(value, theta_d, D2),
                                  theta_d, "dissipation"))

    grid = state.geometry.grid
    h = grid.horizontal
    u_arrays = [c.values for c in state.u]
    grad_u = []
    for c in state.u:
        grad_u.extend(_grad_arrays(c))
    hess_u = []
    for arr in grad_u:
        hess_u.extend(_grad_arrays(VolumeField(grid, arr)))

    velocity_rows = (
        ("u", u_arrays, 0.5, lam / (lam + 2.0)),
        ("Du", _horizontal_family(u_arrays, grid), 2.0 / (2.0 + r),
         (lam + 1.0) / (lam + 2.0)),
        ("grad u", grad_u, 0.5, lam / (lam + 2.0)),
        ("D grad u", _horizontal_family(grad_u, grid), 2.0 / (2.0 + r),
         (lam + 1.0) / (lam + 2.0)),
        ("grad2 u", hess_u, 0.5, lam / (lam + 2.0)),
        ("D grad2 u", _horizontal_family(hess_u, grid), 2.0 / (2.0 + r),
         (lam + 1.0) / (lam + 2.0)),
    )
    for label, family, theta_sup, theta_l2 in velocity_rows:
        sup2, l22 = _family_norms_volume(family, grid)
        push(label + "|sup", sup2, theta_sup, theta_sup)
        push(label + "|l2", l22, theta_l2, theta_l2)

    eta_arr = [state.eta.values]
    d_eta = _horizontal_family_surface(eta_arr, h)
    dd_eta = _horizontal_family_surface(d_eta, h)
    surface_rows = [
        ("eta", eta_arr,
         ((lam + 1.0) / (lam + 2.0), (lam + 1.0) / (lam + 3.0)),
         (lam / (lam + 2.0), lam / (lam + 3.0))),
        ("D eta", d_eta,
         ((lam + 2.0) / (lam + 2.0 + r), (lam + 2.0) / (lam + 3.0)),
         ((lam + 1.0) / (lam + 2.0), (lam + 1.0) / (lam + 3.0))),
        ("D2 eta", dd_eta,
         (1.0, (lam + 3.0) / (lam + 3.0 + r)),
         (1.0, (lam + 2.0) / (lam + 3.0))),
    ]
    diff = _time_difference(state)
    if diff is not None:
        surface_rows.append(("dt eta", [diff[2].values],
                             (1.0, 2.0 / (2.0 + r)), (1.0, 0.5)))
    for label, family, sup_thetas, l2_thetas in surface_rows:
        sup2, l22 = _family_norms_surface(family, h)
        push(label + "|sup", sup2, *sup_thetas)
        push(label + "|l2", l22, *l2_thetas)

    grad_p = list(_grad_arrays(state.p))
    dp = _horizontal_family([state.p.values], grid)
    dgrad_p = _horizontal_family(grad_p, grid)
    ddp = _horizontal_family(dp, grid)
    pressure_rows = (
        ("grad p", grad_p, (0.5, 0.5), (0.0, 0.0)),
        ("Dp", dp, (2.0 / (2.0 + r), 2.0 / 3.0), (0.5, 1.0 / 3.0)),
        ("D grad p", dgrad_p, (2.0 / (2.0 + r), 2.0 / (2.0 + r)), (0.5, 0.5)),
        ("D2 p", ddp, (1.0, 2.0 / (2.0 + r)), (1.0, 2.0 / 3.0)),
    )
    for label, family, sup_thetas, l2_thetas in pressure_rows:
        sup2, l22 = _family_norms_volume(family, grid)
        push(label + "|sup", sup2, *sup_thetas)
        push(label + "|l2", l22, *l2_thetas)

    if gterms is None:
        gterms = assemble_G(state)
    m1 = min((2 * lam ** 2 + 6 * lam + 2) / (lam ** 2 + 5 * lam + 6),
             (3 * lam + 3) / (2 * lam + 6))
    m2 = min((2 * lam ** 2 + 7 * lam + 4) / (lam ** 2 + 5 * lam + 6),
             (3 * lam + 5) / (2 * lam + 6))
    g1 = [c.values for c in gterms.momentum]
    g2 = [gterms.divergence.values]
    g3 = [c.values for c in gterms.stress]
    g4 = [gterms.transport.values]
    dg1 = _horizontal_family(g1, grid)
    dg2 = _horizontal_family(g2, grid)
    gradg2 = list(_grad_arrays(gterms.divergence))
    dg3 = _horizontal_family_surface(g3, h)
    ddg3 = _horizontal_family_surface(dg3, h)

    for label, family, volume, sup_thetas, l2_thetas in (
            ("G1", g1, True, (1.0, (3 * lam + 5) / (2 * lam + 6)),
             ((3 * lam + 2) / (2 * lam + 4), (3 * lam + 3) / (2 * lam + 6))),
            ("DG1", dg1, True, (1.0, 1.0), (1.0, (3 * lam + 5) / (2 * lam + 6))),
            ("G2", g2, True, (1.0, 1.0), (1.0, m2)),
            ("DG2", dg2, True, (1.0, 1.0), (1.0, 1.0)),
            ("grad G2", gradg2, True, (1.0, 1.0), (1.0, m2)),
            ("G3", g3, False, (1.0, (3 * lam + 5) / (2 * lam + 6)),
             ((2 * lam + 1) / (lam + 2), m1)),
            ("DG3", dg3, False, (1.0, 1.0), (1.0, m2)),
            ("D2 G3", ddg3, False, (1.0, 1.0), (1.0, 1.0)),
            ("G4", g4, False, (1.0, 1.0), (1.0, m2))):
        if volume:
            sup2, l22 = _family_norms_volume(family, grid)
        else:
            sup2, l22 = _family_norms_surface(family, h)
        push(label + "|sup", sup2, *sup_thetas)
        push(label + "|l2", l22, *l2_thetas)

    kap = kappa(state)
    den = E_low ** (r / (2.0 + r)) * E_full ** (2.0 / (2.0 + r))
    entries.append(RatioEntry("kappa", 0.0 if den <= 0.0 else kap / den,
                              2.0 / (2.0 + r), "kappa-bound"))
    return tuple(entries)


# ---------------------------------------------------------------------------
# full report


def energy_report(state, cfg: DiagConfig = DiagConfig(),
                  previous: EnergyReport | None = None,
                  include_ratios: bool = False) -> EnergyReport:
    """Assemble every monitored quantity for one state, carrying the
    running suprema that make up the total-energy aggregate."""
    n = cfg.n_level
    lam = cfg.lam
    jm = cfg.J_max
    vm = cfg.max_vertical_order
    E2, D2 = energy_min2(state, n, jm, vm)
    E1 = energy_min1(state, n, jm, vm)
    EF, DF = energy_full(state, n, lam, jm, vm)
    E_low = energy_full(state, 2 * (n - 2), lam, jm, vm)[0]
    F2N = sp.sobolev_norm_surface(state.eta, 4 * (n - 2) + 0.5) ** 2
    kap = kappa(state)

    flags = [f"time-derivative orders {jm + 1}..{n} omitted "
             f"(backward-difference depth {jm})",
             f"volume terms with more than {vm} vertical derivatives omitted "
             "(difference-matrix noise amplification)"]
    if jm >= 1 and _time_difference(state) is None:
        flags.append("order-1 time-derivative terms unavailable (no prior state)")

    if state.history and state.history[0].t < state.t:
        prev_state = state.history[0]
        res_g = identity_residual_geometric(prev_state, state).residual
        res_p = identity_residual_perturbed(prev_state, state).residual
    else:
        res_g = res_p = 0.0
        flags.append("identity residuals unavailable (no prior state)")

    t = state.t
    w1 = (1.0 + t) ** (1.0 + lam) * E1
    w2 = (1.0 + t) ** (2.0 + lam) * E2
    fr = F2N / (1.0 + t)
    if previous is not None:
        sup_E2N = max(previous.sup_E2N, E_low)
        sup1 = max(previous.sup_weighted1, w1)
        sup2 = max(previous.sup_weighted2, w2)
        supf = max(previous.sup_F2N_ratio, fr)
    else:
        sup_E2N, sup1, sup2, supf = E_low, w1, w2, fr
    GN = sup_E2N + sup1 + sup2 + supf

    ratios = monitored_ratios(state, cfg) if include_ratios else ()
    return EnergyReport(t=t, E_n2=E2, D_n2=D2, E_n=EF, D_n=DF, E_n1=E1,
                        F2N=F2N, kappa=kap, GN=GN,
                        res_geometric=res_g, res_perturbed=res_p,
                        monitored_ratios=ratios, flags=tuple(flags),
                        sup_E2N=sup_E2N, sup_weighted1=sup1,
                        sup_weighted2=sup2, sup_F2N_ratio=supf)
