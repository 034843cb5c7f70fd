"""Refinement studies: error tables with fitted orders of accuracy.

Each study sweeps one discretization knob, collects one or two error
columns, and fits the slope of log error against the log of the step
(vertical spacing or dt).  The fitted order is compared against the
documented minimum for that construction, so a regression in any solver
shows up as a flattened slope rather than a silent loss of digits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import config as cf
from . import diagnostics as dg
from . import evolution as ev
from . import geometry as geo
from . import spectral as sp
from . import stokes as st
from .errors import ConfigError
from .fields import HorizontalGrid, SurfaceField, VolumeField, VolumeGrid


@dataclass(frozen=True)
class StudyReport:
    """One sweep: parameter values, error columns, fitted orders."""

    study: str
    parameter: str
    columns: tuple
    rows: tuple          # ((value, (err, ...)), ...)
    orders: tuple
    target: float

    @property
    def passed(self) -> bool:
        return all(o >= self.target for o in self.orders)

    def lines(self):
        head = f"{self.parameter:>10}  " + "  ".join(f"{c:>14}" for c in self.columns)
        yield f"study {self.study}:"
        yield "  " + head
        for value, errs in self.rows:
            yield ("  " + f"{value:>10.6g}  "
                   + "  ".join(f"{e:>14.6e}" for e in errs))
        pairs = ", ".join(f"{c}: {o:.2f}" for c, o in zip(self.columns, self.orders))
        verdict = "passed" if self.passed else "FAILED"
        yield f"  fitted orders {pairs}; need >= {self.target:.2f} -> {verdict}"


def _fit_order(hs, errs) -> float:
    """Least-squares slope of log err vs log h (positive = converging)."""
    pos = [(h, e) for h, e in zip(hs, errs) if e > 0]
    if len(pos) < 2:
        return float("inf")  # errors at the roundoff floor: no slope to fit
    lh = np.log([h for h, _ in pos])
    le = np.log([e for _, e in pos])
    return float(np.polyfit(lh, le, 1)[0])


# ---------------------------------------------------------------------------
# manufactured pair for the flat solver (transcendental verticals, z = x3 + 1)


def _mms_fields(grid: VolumeGrid):
    """u1 = sin(2 pi x1) sin z, u3 = -2 pi cos(2 pi x1)(1 - cos z),
    p = cos(2 pi x1) cosh z — divergence free, no slip at the bottom;
    the matching force and top load follow by substitution."""
    h = grid.horizontal
    X1, _ = h.meshgrid()
    z = (grid.x3 + 1.0)[None, None, :]
    s = np.sin(2 * np.pi * X1)[:, :, None]
    c = np.cos(2 * np.pi * X1)[:, :, None]
    zero = VolumeField(grid, np.zeros(grid.shape))
    zsurf = SurfaceField(h, np.zeros((h.Nx, h.Ny)))
    u = (VolumeField(grid, s * np.sin(z)), zero,
         VolumeField(grid, -2 * np.pi * c * (1.0 - np.cos(z))))
    p = VolumeField(grid, c * np.cosh(z))
    F1 = VolumeField(grid, s * ((4 * np.pi ** 2 + 1.0) * np.sin(z)
                                - 2 * np.pi * np.cosh(z)))
    F3 = VolumeField(grid, c * (-8 * np.pi ** 3 * (1.0 - np.cos(z))
                                + 2 * np.pi * np.cos(z) + np.sinh(z)))
    H1 = SurfaceField(h, -np.sin(2 * np.pi * X1)
                      * (4 * np.pi ** 2 * (1.0 - np.cos(1.0)) + np.cos(1.0)))
    H3 = SurfaceField(h, np.cos(2 * np.pi * X1)
                      * (np.cosh(1.0) + 4 * np.pi * np.sin(1.0)))
    data = st.StokesData(F=(F1, zero, F3), G=zero, H=(H1, zsurf, H3))
    return data, u, p


def study_stokes_mms(levels=(16, 32, 64, 128)) -> StudyReport:
    """Discrete L2 error of the direct solver against a smooth exact pair."""
    h = HorizontalGrid(1.0, 1.0, 8, 8)
    rows = []
    hs, eu, ep = [], [], []
    for Nz in levels:
        grid = VolumeGrid(horizontal=h, b0=1.0, Nz=Nz)
        data, ue, pe = _mms_fields(grid)
        u, p = st.solve_stokes_const(data, grid)
        err_u = max(sp.l2_norm_volume(VolumeField(grid, a.values - b.values))
                    for a, b in zip(u, ue))
        err_p = sp.l2_norm_volume(VolumeField(grid, p.values - pe.values))
        hs.append(1.0 / (Nz - 1))
        eu.append(err_u)
        ep.append(err_p)
        rows.append((float(Nz), (err_u, err_p)))
    orders = (_fit_order(hs, eu), _fit_order(hs, ep))
    return StudyReport("stokes_mms", "Nz", ("velocity L2", "pressure L2"),
                       tuple(rows), orders, target=1.8)


def study_piola(levels=(17, 33, 65)) -> StudyReport:
    """Row-divergence defect of the weighted transform matrix under
    vertical refinement, on a curved surface over a curved bottom."""
    h = HorizontalGrid(1.0, 1.0, 8, 8)
    X1, X2 = h.meshgrid()
    eta = SurfaceField(h, 0.08 * np.cos(2 * np.pi * X1)
                       + 0.05 * np.sin(2 * np.pi * X2))
    b = SurfaceField(h, 1.0 + 0.1 * np.cos(2 * np.pi * (X1 + X2)))
    rows, hs, errs = [], [], []
    for Nz in levels:
        grid = VolumeGrid(horizontal=h, b0=1.0, Nz=Nz)
        g = geo.build_geometry(eta, None, b, grid, 0.9, 0.25)
        r = geo.piola_residual(g)
        hs.append(1.0 / (Nz - 1))
        errs.append(r)
        rows.append((float(Nz), (r,)))
    return StudyReport("piola", "Nz", ("row divergence",), tuple(rows),
                       (_fit_order(hs, errs),), target=3.0)


def study_identity_dt(dts=(0.24, 0.12, 0.06)) -> StudyReport:
    """Both energy-identity residuals against the step size, from a warmed
    small-amplitude run; the defect is first order in dt."""
    text = (
        "grid.Nx = 8\ngrid.Ny = 8\ngrid.Nz = 65\n"
        "time.dt = 0.08\ntime.T = 1.0\n"
        "init.eta = 1,0,1e-3\n"
        "extension.epsilon = 0.05\n"
        "picard.tol = 1e-13\npicard.max_iter = 80\n"
    )
    cfg = cf.parse_config(text, "<identity_dt>")
    state = cf.build_state(cfg)
    warm = cf.step_config(cfg)
    for _ in range(2):
        state = ev.picard_step(state, warm)

    rows, eg, epp = [], [], []
    for dt in dts:
        step = ev.StepConfig(dt=dt, picard_tol=1e-13, picard_max=80)
        new = ev.picard_step(state, step)
        bg = dg.identity_residual_geometric(state, new)
        bp = dg.identity_residual_perturbed(state, new)
        eg.append(bg.residual)
        epp.append(bp.residual)
        rows.append((dt, (bg.residual, bp.residual)))
    orders = (_fit_order(dts, eg), _fit_order(dts, epp))
    return StudyReport("identity_dt", "dt", ("momentum form", "flat form"),
                       tuple(rows), orders, target=float(np.log2(1.7)))


STUDIES = {
    "stokes_mms": study_stokes_mms,
    "piola": study_piola,
    "identity_dt": study_identity_dt,
}


def run_study(name: str) -> StudyReport:
    if name not in STUDIES:
        raise ConfigError(f"unknown study {name!r}; pick from {sorted(STUDIES)}")
    return STUDIES[name]()
