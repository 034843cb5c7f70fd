"""Coupled time stepping: forcing assembly, per-step fixed-point loop, runs.

One step from t to t + dt solves the implicit system

    (u+ - u)/dt - theta lap_A u+ + theta grad_A p+ =
        F(lagged) + (1-theta)(lap_A u - grad_A p),
    div_A u+ = 0,   S_A(p+, u+) N = eta N on top,   u+ = 0 underneath,
    eta+ = transport of eta by the trace of u+,

with every geometry coefficient evaluated at the lagged surface iterate.  The
loop re-solves with refreshed coefficients until the H^1 velocity change plus
the H^{5/2} surface change drops below the step tolerance.  Dividing the
momentum row by theta turns it into exactly the mass-term form the elliptic
module factors, so each pass is one curved solve plus one transport step.

The forcing of the momentum equation is

    F = (d/dt etabar) btilde K d3(u) - (u . grad_A) u,

all products dealiased, with the surface rate taken from the lagged iterate's
backward difference.  The top load is eta N.

A run drives steps until the final time, halving dt up to five times on a
non-convergent step or a transport step-size rejection, and restoring the
configured dt after every success.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from . import spectral as sp
from . import stokes as st
from . import transport as tr
from .errors import (
    ConfigError,
    FieldError,
    PicardError,
    SlabflowError,
    SolverDivergenceError,
    StepSizeError,
)
from .fields import SurfaceField, VolumeField, VolumeGrid, zeros_volume


@dataclass(frozen=True)
class FlowState:
    """One instant of the discrete flow, plus a short ring of prior states."""

    u: tuple[VolumeField, VolumeField, VolumeField]
    p: VolumeField
    eta: SurfaceField
    t: float
    geometry: geo.GeometryState
    history: tuple = ()
    iterations: int = 0

    @property
    def grid(self) -> VolumeGrid:
        return self.geometry.grid

    def surface_trace(self):
        return tuple(c.trace_top() for c in self.u)

    def stripped(self) -> "FlowState":
        """Copy without the ring, for storing inside another state's ring."""
        return dataclasses.replace(self, history=())


@dataclass(frozen=True)
class StepConfig:
    dt: float
    picard_tol: float = 1e-7
    picard_max: int = 30
    theta: float = 1.0
    scheme: str = "rk4_spectral"
    keep_states: int = 2
    solver: st.SolverConfig = st.SolverConfig()

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigError(f"implicitness weight must lie in [1/2, 1], got {self.theta!r}")
        if self.picard_tol <= 0 or self.picard_max < 1:
            raise ConfigError("per-step loop needs a positive tolerance and iteration budget")
        if self.keep_states < 1:
            raise ConfigError("keep_states must be at least 1")


# ---------------------------------------------------------------------------
# forcing


def assemble_forcing(u, g: geo.GeometryState, detabar_t: VolumeField | None = None):
    """Momentum forcing and top load for the transformed system.

    Returns (F triple, H triple) with F = detabar_t btilde K d3(u) - (u.grad_A)u
    and H = eta N.  The surface rate defaults to the one stored in the
    geometry (zero for a static build).
    """
    grid = g.grid
    if detabar_t is None:
        detabar_t = g.detabar_t
    if detabar_t.grid != grid:
        raise FieldError("surface-rate extension lives on the wrong grid")

    # btilde is horizontal-constant per layer, so only one padded product
    # per term is needed on each side of it
    rate_K = sp.dealiased_product(detabar_t, g.K)
    rate_btK = VolumeField(grid, rate_K.values * g.btilde.values)

    F = []
    for i in range(3):
        d3u = VolumeField(grid, sp.apply_vertical(u[i].values, grid))
        lift = sp.dealiased_product(rate_btK, d3u)
        gu = geo.grad_A(u[i], g)
        conv = np.zeros(grid.shape)
        for j in range(3):
            conv = conv + sp.dealiased_product(u[j], gu[j]).values
        F.append(VolumeField(grid, lift.values - conv))

    h = grid.horizontal
    eta = g.eta
    H = (SurfaceField(h, -sp.dealiased_product(eta, sp.horizontal_derivative(eta, 1)).values),
         SurfaceField(h, -sp.dealiased_product(eta, sp.horizontal_derivative(eta, 2)).values),
         eta)
    return tuple(F), H


# ---------------------------------------------------------------------------
# order-0 compatibility of initial data


@dataclass(frozen=True)
class CompatibilityReport:
    res_divergence: float
    res_bottom: float
    res_stress: float
    tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return max(self.res_divergence, self.res_bottom, self.res_stress) <= self.tol


def check_compatibility0(u0, eta0: SurfaceField, g0: geo.GeometryState) -> CompatibilityReport:
    """Residuals of the three order-zero constraints on initial data.

    (1) transformed divergence of u0, discrete L2 over the slab;
    (2) velocity trace on the rigid bottom;
    (3) tangential part of the top load eta0 N plus the doubled transformed
        strain of u0 applied to N (the normal component is removed by the
        pointwise projection, so a nonzero value means genuinely incompatible
        tangential stress).
    """
    grid = g0.grid
    div = sp.l2_norm_volume(geo.div_A(u0, g0))
    bottom = float(np.sqrt(sum(np.sum(c.values[:, :, 0] ** 2) for c in u0)
                           * grid.horizontal.cell_area))
    # sym_grad_A(u0) N on top = -(zero-pressure stress vector)
    DN = geo.stress_vector_top(zeros_volume(grid), u0, g0)
    h = grid.horizontal
    load = tuple(SurfaceField(h, eta0.values * n.values - d.values)
                 for n, d in zip(g0.Nvec, DN))
    tangential = geo.projection_Pi0(load, g0)
    stress = float(np.sqrt(sum(np.sum(c.values ** 2) for c in tangential)
                           * h.cell_area))
    return CompatibilityReport(res_divergence=div, res_bottom=bottom, res_stress=stress)


# ---------------------------------------------------------------------------
# state construction


def initial_state(eta0: SurfaceField, u0, b: SurfaceField, grid: VolumeGrid,
                  epsilon: float, delta: float,
                  p0: VolumeField | None = None,
                  solver: st.SolverConfig = st.SolverConfig(),
                  ext_cfg=None) -> FlowState:
    """Bundle initial data into a state at t = 0.

    The surface rate needed by the geometry is closed with the transport
    equation itself: d/dt eta(0) = u3 - u1 d1 eta - u2 d2 eta from the trace
    of u0.  The starting pressure, unless supplied, solves the induced scalar
    problem with top load eta0 N.
    """
    trace = tuple(c.trace_top() for c in u0)
    eta_t0 = tr.advection_rhs(eta0, trace)
    g0 = geo.build_geometry(eta0, eta_t0, b, grid, epsilon, delta,
                            ext_cfg=ext_cfg)
    if p0 is None:
        h = grid.horizontal
        H0 = (SurfaceField(h, -sp.dealiased_product(
                  eta0, sp.horizontal_derivative(eta0, 1)).values),
              SurfaceField(h, -sp.dealiased_product(
                  eta0, sp.horizontal_derivative(eta0, 2)).values),
              eta0)
        p0 = st.initial_pressure(u0, g0, H0=H0, cfg=solver)
    return FlowState(u=tuple(u0), p=p0, eta=eta0, t=0.0, geometry=g0)


# ---------------------------------------------------------------------------
# one implicit step


def _h1_norm(u, grid):
    return sum(sp.sobolev_norm_volume(c, 1) for c in u)


def picard_step(state: FlowState, cfg: StepConfig) -> FlowState:
    """Advance one step of length cfg.dt with lagged-coefficient passes."""
    g_base = state.geometry
    grid = g_base.grid
    dt = cfg.dt
    theta = cfg.theta
    alpha = 1.0 / (theta * dt)

    eta_m = state.eta
    u_m = state.u
    p_m = state.p
    changes = []
    for m in range(1, cfg.picard_max + 1):
        rate = SurfaceField(grid.horizontal, (eta_m.values - state.eta.values) / dt)
        g_m = geo.build_geometry(eta_m, rate, g_base.bottom, grid,
                                 g_base.epsilon, g_base.delta, g_base.ext_cfg)
        F, H = assemble_forcing(u_m, g_m)
        F_eff = []
        for i in range(3):
            extra = state.u[i].values / dt
            if theta < 1.0:
                explicit = (geo.laplace_A(state.u[i], g_m).values
                            - geo.grad_A(state.p, g_m)[i].values)
                extra = extra + (1.0 - theta) * explicit
            F_eff.append(VolumeField(grid, (F[i].values + extra) / theta))
        data = st.StokesData(F=tuple(F_eff), G=zeros_volume(grid), H=H)
        sol = st.solve_stokes_A(g_m, data, cfg.solver, alpha=alpha,
                                initial=(u_m, p_m))
        u_new, p_new = sol.u, sol.p
        eta_new = tr.transport_step(state.eta, tuple(c.trace_top() for c in u_new),
                                    dt, scheme=cfg.scheme)
        change = (_h1_norm(tuple(VolumeField(grid, a.values - b.values)
                                 for a, b in zip(u_new, u_m)), grid)
                  + sp.sobolev_norm_surface(
                      SurfaceField(grid.horizontal, eta_new.values - eta_m.values), 2.5))
        u_m, p_m, eta_m = u_new, p_new, eta_new
        changes.append(change)
        if change <= cfg.picard_tol:
            rate = SurfaceField(grid.horizontal, (eta_m.values - state.eta.values) / dt)
            g_new = geo.build_geometry(eta_m, rate, g_base.bottom, grid,
                                       g_base.epsilon, g_base.delta, g_base.ext_cfg)
            ring = (state.stripped(),) + state.history[:cfg.keep_states - 1]
            return FlowState(u=u_m, p=p_m, eta=eta_m, t=state.t + dt,
                             geometry=g_new, history=ring, iterations=m)
    raise PicardError(
        f"step at t = {state.t:.6g} did not settle in {cfg.picard_max} passes; "
        f"last change {changes[-1]:.3e} (tolerance {cfg.picard_tol:.1e})"
    )


# ---------------------------------------------------------------------------
# driving a run


def run_simulation(initial: FlowState, cfg: StepConfig, T: float,
                   observer=None, max_halvings: int = 5) -> list[FlowState]:
    """Step from the initial state to time T; returns the full trajectory.

    On a non-convergent pass or a transport step-size rejection the step is
    retried with dt halved, up to max_halvings times; the configured dt is
    restored after each completed step.  The observer, if given, is called
    with every accepted state (the initial one included).
    """
    if T <= initial.t:
        raise ConfigError("final time must exceed the initial time")
    trajectory = [initial]
    if observer is not None:
        observer(initial)
    state = initial
    while state.t < T - 1e-12:
        dt = min(cfg.dt, T - state.t)
        halvings = 0
        while True:
            try:
                step_cfg = cfg if dt == cfg.dt else dataclasses.replace(cfg, dt=dt)
                state = picard_step(state, step_cfg)
                break
            except (PicardError, StepSizeError, SolverDivergenceError) as exc:
                halvings += 1
                if halvings > max_halvings:
                    raise SlabflowError(
                        f"step {len(trajectory)} failed after {max_halvings} "
                        f"dt halvings (t = {state.t:.6g})"
                    ) from exc
                dt *= 0.5
        trajectory.append(state)
        if observer is not None:
            observer(state)
    return trajectory
