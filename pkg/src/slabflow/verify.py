"""Built-in health suites: fast, seeded, quantitative spot checks.

Each suite is a handful of closed-form or cross-assembly comparisons with
explicit numeric bounds — the kind of thing you run after touching a core
module or moving to a new machine.  ``run_suite(name, seed)`` returns a
report whose lines read ``[PASS] label   measured <= bound``; nothing here
depends on the test harness, so the same batteries back the command-line
``verify`` subcommand.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import config as cf
from . import diagnostics as dg
from . import evolution as ev
from . import extension as ex
from . import geometry as geo
from . import spectral as sp
from . import stokes as st
from . import transport as tr
from .errors import ConfigError, StepSizeError
from .fields import (
    HorizontalGrid,
    SurfaceField,
    VolumeField,
    VolumeGrid,
    random_surface_field,
    random_volume_field,
)


@dataclass(frozen=True)
class CheckResult:
    """One measured quantity against one bound."""

    name: str
    measured: float
    bound: float
    relation: str = "<="
    note: str = ""

    @property
    def passed(self) -> bool:
        if self.relation == "<=":
            return bool(self.measured <= self.bound)
        if self.relation == ">=":
            return bool(self.measured >= self.bound)
        raise ConfigError(f"unknown relation {self.relation!r}")

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        out = (f"[{tag}] {self.name}: {self.measured:.6g} "
               f"{self.relation} {self.bound:.6g}")
        return out + (f"   ({self.note})" if self.note else "")


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    seed: int
    results: tuple
    elapsed: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self):
        yield f"suite {self.suite} (seed {self.seed}):"
        for r in self.results:
            yield "  " + r.line()
        verdict = "passed" if self.passed else "FAILED"
        yield (f"  {sum(r.passed for r in self.results)}/{len(self.results)} "
               f"checks passed in {self.elapsed:.2f} s -> {verdict}")


# ---------------------------------------------------------------------------
# shared scenery


def _grid(Nx=16, Ny=12, L1=1.0, L2=2.0):
    return HorizontalGrid(L1, L2, Nx, Ny)


def _small_run(seed: int, steps: int = 3, Nz: int = 33):
    """A short curved-surface run used by the stateful suites."""
    text = (
        f"grid.Nx = 8\ngrid.Ny = 8\ngrid.Nz = {Nz}\n"
        "time.dt = 0.08\ntime.T = 1.0\n"
        "init.eta = 1,0,1e-3\n"
        "extension.epsilon = 0.05\n"
        "picard.tol = 1e-12\npicard.max_iter = 60\n"
    )
    cfg = cf.parse_config(text, f"<verify seed {seed}>")
    state = cf.build_state(cfg)
    step = cf.step_config(cfg)
    out = [state]
    for _ in range(steps):
        out.append(ev.picard_step(out[-1], step))
    return out


# ---------------------------------------------------------------------------
# the suites


def suite_spectral(seed: int):
    rng = np.random.default_rng(seed)
    h = _grid()
    X1, X2 = np.meshgrid(h.x1, h.x2, indexing="ij")
    phase = 2.0 * np.pi * (3 * X1 / h.L1 + 2 * X2 / h.L2) + 0.7
    f = SurfaceField(h, np.cos(phase))
    exact = -2.0 * np.pi * 3 / h.L1 * np.sin(phase)
    d1 = sp.horizontal_derivative(f, 1).values
    res = [CheckResult("derivative of a plane cosine, closed form",
                       float(np.max(np.abs(d1 - exact))) / np.max(np.abs(exact)),
                       1e-12)]

    g1 = random_surface_field(h, rng)
    sq = sp.l2_norm_surface(g1) ** 2
    modal = float(np.sum(np.abs(g1.coeffs) ** 2)) * h.L1 * h.L2
    res.append(CheckResult("modal energy sum equals the L2 integral",
                           abs(sq - modal) / sq, 1e-12))

    nyq = SurfaceField(h, np.cos(2.0 * np.pi * (h.Nx // 2) * X1 / h.L1))
    res.append(CheckResult("odd derivative annihilates the unpaired top mode",
                           float(np.max(np.abs(sp.horizontal_derivative(nyq, 1).values))),
                           0.0))

    a = SurfaceField(h, np.cos(2.0 * np.pi * 2 * X1 / h.L1))
    b = SurfaceField(h, np.cos(2.0 * np.pi * 3 * X1 / h.L1))
    prod = sp.dealiased_product(a, b).values
    exactp = 0.5 * (np.cos(2.0 * np.pi * 1 * X1 / h.L1)
                    + np.cos(2.0 * np.pi * 5 * X1 / h.L1))
    res.append(CheckResult("product of low cosines is exact",
                           float(np.max(np.abs(prod - exactp))), 1e-12))

    c5 = SurfaceField(h, np.cos(2.0 * np.pi * 5 * X1 / h.L1))
    co = sp.to_spectral(sp.dealiased_product(c5, c5))
    spill = float(np.max(np.abs(co[6:h.Nx - 5, :])))
    res.append(CheckResult("self-product leaves no aliased image",
                           spill, 1e-15,
                           note="modes 6..10 of cos(10 pi x)^2 must vanish"))

    errs = []
    for Nz in (17, 33):
        vg = VolumeGrid(horizontal=_grid(4, 4), b0=1.0, Nz=Nz)
        prof = np.sin(0.5 * np.pi * (vg.x3 + 1.0))
        vals = np.broadcast_to(prof, (4, 4, Nz)).copy()
        d3 = sp.apply_vertical(vals, vg)
        exact3 = 0.5 * np.pi * np.cos(0.5 * np.pi * (vg.x3 + 1.0))
        errs.append(float(np.max(np.abs(d3[0, 0] - exact3))))
    order = float(np.log2(errs[0] / errs[1]))
    res.append(CheckResult("vertical difference order under halving",
                           order, 3.5, relation=">="))

    one = SurfaceField(h, np.ones((h.Nx, h.Ny)))
    res.append(CheckResult("low-frequency smoothing kills the mean",
                           float(np.max(np.abs(sp.riesz_potential(one, 0.5).values))),
                           0.0))
    return tuple(res)


def suite_poisson(seed: int):
    rng = np.random.default_rng(seed)
    h = _grid(16, 16, 1.0, 1.0)
    worst = 0.0
    for _ in range(10):
        f = random_surface_field(h, rng)
        for q in (0, 1, 2):
            for eps in (0.25, 0.75):
                worst = max(worst, ex.check_poisson_bound(f, q, eps).ratio)
    res = [CheckResult("depth-integral gain stays under the pi ceiling",
                       worst, float(np.pi) * (1.0 + 1e-3))]

    f = random_surface_field(h, rng)
    cfg = ex.ExtensionConfig(epsilon=0.4)
    vg = VolumeGrid(horizontal=h, b0=1.0, Nz=33)
    top = ex.extend(f, cfg, vg).values[:, :, -1]
    res.append(CheckResult("extension restores its trace",
                           float(np.max(np.abs(top - f.values))) / sp.max_norm(f),
                           1e-12))

    small = ex.check_vertical_smallness(f, 0.25)
    res.append(CheckResult("vertical derivative is epsilon-small, mode by mode",
                           small.lhs, small.rhs * (1.0 + 1e-8)))
    res.append(CheckResult("sup-norm scaling halves with the rate",
                           small.scaling_factor, 4.0,
                           note="quotient of sup ratios at eps and eps/2"))

    margin = np.inf
    b = SurfaceField(h, np.ones((h.Nx, h.Ny)))
    for _ in range(5):
        eta = random_surface_field(h, rng, amplitude=0.3)
        epsv, delta = ex.select_epsilon(eta, b, 1.0)
        jmin = ex.top_jacobian_min(eta, b, 1.0, epsv)
        margin = min(margin, jmin - delta)
    res.append(CheckResult("auto-selected rate honors the Jacobian floor",
                           margin, 0.0, relation=">="))
    return tuple(res)


def suite_geometry(seed: int):
    rng = np.random.default_rng(seed)
    vg = VolumeGrid(horizontal=_grid(8, 8, 1.0, 1.0), b0=1.0, Nz=33)
    flat = geo.flat_geometry(vg)
    flat_dev = max(float(np.max(np.abs(flat.A.values))),
                   float(np.max(np.abs(flat.B.values))),
                   float(np.max(np.abs(flat.J.values - 1.0))),
                   float(np.max(np.abs(flat.K.values - 1.0))))
    res = [CheckResult("coefficients collapse over a resting surface", flat_dev, 0.0)]

    h = vg.horizontal
    eta = random_surface_field(h, rng, amplitude=0.15, max_mode=2)
    b = SurfaceField(h, np.ones((h.Nx, h.Ny)))
    epsv, delta = ex.select_epsilon(eta, b, 1.0)
    g = geo.build_geometry(eta, None, b, vg, epsv, delta)
    res.append(CheckResult("volume Jacobian stays above the floor",
                           float(np.min(g.J.values)), delta, relation=">="))

    # a strong decay rate puts real curvature into the vertical profiles,
    # so the truncation error (not roundoff) is what the ratio sees
    prev = None
    ratio = 0.0
    for Nz in (17, 33):
        vgn = VolumeGrid(horizontal=h, b0=1.0, Nz=Nz)
        gn = geo.build_geometry(eta, None, b, vgn, 0.9, delta)
        r = geo.piola_residual(gn)
        ratio = prev / r if prev is not None else 0.0
        prev = r
    res.append(CheckResult("row-divergence residual drops 8x per refinement",
                           ratio, 8.0, relation=">="))

    f = random_volume_field(vg, rng)
    lap = geo.laplace_A(f, flat).values
    ref = (sp.horizontal_derivative(f, 1, order=2).values
           + sp.horizontal_derivative(f, 2, order=2).values
           + sp.apply_vertical(sp.apply_vertical(f.values, vg), vg))
    scale = float(np.max(np.abs(ref)))
    res.append(CheckResult("transformed Laplacian reduces to the flat one",
                           float(np.max(np.abs(lap - ref))) / scale, 1e-12))

    kq = geo.korn_lower_bound(vg, rng, n_samples=8)
    res.append(CheckResult("symmetric gradient controls the full gradient",
                           kq, 0.2, relation=">="))
    return tuple(res)


def suite_elliptic(seed: int):
    rng = np.random.default_rng(seed)
    vg = VolumeGrid(horizontal=_grid(8, 8, 1.0, 1.0), b0=1.0, Nz=33)
    data = st.zero_data(vg)
    F = tuple(random_volume_field(vg, rng, amplitude=0.1) for _ in range(3))
    data = st.StokesData(F=F, G=data.G, H=data.H)

    u, p = st.solve_stokes_const(data, vg)
    r = st.stokes_residual_const(u, p, data, vg)
    res = [CheckResult("direct solve satisfies its own equations",
                       r.relative, 1e-8)]

    flat = geo.flat_geometry(vg)
    sol = st.solve_stokes_A(flat, data, st.SolverConfig(tol=1e-12))
    dev = max(float(np.max(np.abs(a.values - c.values)))
              for a, c in zip(sol.u, u))
    dev = max(dev, float(np.max(np.abs(sol.p.values - p.values))))
    res.append(CheckResult("coefficient solver agrees over a flat surface",
                           dev, 1e-9))

    h = vg.horizontal
    eta = random_surface_field(h, rng, amplitude=5e-3, max_mode=2)
    bb = SurfaceField(h, np.ones((h.Nx, h.Ny)))
    epsv, delta = ex.select_epsilon(eta, bb, 1.0)
    g = geo.build_geometry(eta, None, bb, vg, epsv, delta)
    solc = st.solve_stokes_A(g, data, st.SolverConfig(tol=1e-12))
    rc = st.stokes_residual_A(solc.u, solc.p, data, g)
    res.append(CheckResult("curved solve satisfies the transformed equations",
                           rc.relative, 1e-8))

    ua, pa = st.solve_stokes_const(data, vg, alpha=2.0)
    ra = st.stokes_residual_const(ua, pa, data, vg, alpha=2.0)
    res.append(CheckResult("time-shifted solve satisfies its own equations",
                           ra.relative, 1e-8))
    return tuple(res)


def suite_transport(seed: int):
    rng = np.random.default_rng(seed)
    h = _grid(16, 16, 1.0, 1.0)
    X1, _ = np.meshgrid(h.x1, h.x2, indexing="ij")
    a, U, W = 0.2, 0.3, 0.05
    eta = SurfaceField(h, a * np.sin(2.0 * np.pi * X1))
    const = lambda v: SurfaceField(h, np.full((h.Nx, h.Ny), v))
    rhs = tr.advection_rhs(eta, (const(U), const(0.0), const(W)))
    exact = W - U * 2.0 * np.pi * a * np.cos(2.0 * np.pi * X1)
    res = [CheckResult("surface equation closed form for a plane wave",
                       float(np.max(np.abs(rhs.values - exact))), 1e-12)]

    frozen = tr.transport_step(eta, (const(0.0), const(0.0), const(0.0)), 0.1)
    res.append(CheckResult("no flow leaves the surface untouched",
                           float(np.max(np.abs(frozen.values - eta.values))), 0.0))

    dt = 0.05
    stepped = tr.transport_step(eta, (const(U), const(0.0), const(0.0)), dt)
    shifted = a * np.sin(2.0 * np.pi * (X1 - U * dt))
    res.append(CheckResult("wave advected by a uniform stream",
                           float(np.max(np.abs(stepped.values - shifted))) / a,
                           1e-6))

    fast = (const(8.0), const(0.0), const(0.0))
    try:
        tr.transport_step(eta, fast, 0.1)
        guarded = 0.0
    except StepSizeError:
        guarded = 1.0
    res.append(CheckResult("runaway advective step is refused",
                           guarded, 1.0, relation=">="))
    return tuple(res)


def suite_identities(seed: int):
    # Nz = 65: the dual-assembly agreement is a vertical-resolution story,
    # and these margins were calibrated at that depth
    states = _small_run(seed, steps=3, Nz=65)
    old, new = states[-2], states[-1]
    bal_g = dg.identity_residual_geometric(old, new)
    bal_p = dg.identity_residual_perturbed(old, new)
    scale = max(bal_g.lhs, 1e-300)
    res = [
        CheckResult("momentum pairing closes", bal_g.residual, 1e-8),
        CheckResult("momentum pairing, dual assembly gap",
                    abs(bal_g.alternate - bal_g.residual), 0.05 * max(bal_g.residual, 1e-300)),
        CheckResult("flat-form dissipation closes", bal_p.residual, 1e-8),
        CheckResult("flat-form dissipation, dual assembly gap",
                    abs(bal_p.alternate - bal_p.residual), 0.05 * max(bal_p.residual, 1e-300)),
    ]

    vg = VolumeGrid(horizontal=_grid(8, 8, 1.0, 1.0), b0=1.0, Nz=17)
    rest = _rest_pair(vg)
    bal0 = dg.identity_residual_geometric(*rest)
    res.append(CheckResult("both sides vanish at rest", bal0.residual, 1e-13))
    return tuple(res)


def _rest_pair(vg):
    h = vg.horizontal
    zeros2 = np.zeros((h.Nx, h.Ny))
    zeros3 = np.zeros((h.Nx, h.Ny, vg.Nz))
    g = geo.flat_geometry(vg)
    mk = lambda t: ev.FlowState(
        u=tuple(VolumeField(vg, zeros3) for _ in range(3)),
        p=VolumeField(vg, zeros3), eta=SurfaceField(h, zeros2),
        t=t, geometry=g)
    return mk(0.0), mk(0.1)


def suite_interpolation(seed: int):
    rng = np.random.default_rng(seed)
    h = _grid(16, 16, 1.0, 1.0)
    worst = 0.0
    for _ in range(30):
        f = random_surface_field(h, rng)
        for (s, r, q) in ((1.0, 1.0, 1.0), (2.5, 0.5, 1.5), (4.0, 2.0, 2.0)):
            worst = max(worst, sp.sobolev_interpolation_ratio(f, s, r, q))
    res = [CheckResult("norm interpolation with constant one",
                       worst, 1.0 + 1e-10)]

    worsth = 0.0
    for _ in range(10):
        f = random_surface_field(h, rng)
        worsth = max(worsth, sp.sobolev_interpolation_ratio(
            f, 2.0, 1.0, 1.0, homogeneous=True))
    res.append(CheckResult("same with the mean removed", worsth, 1.0 + 1e-10))

    worstr = 0.0
    for _ in range(10):
        f = random_surface_field(h, rng)
        for lam in (0.25, 0.5, 0.75):
            for k in (1, 2):
                worstr = max(worstr, sp.riesz_interpolation_ratio(f, lam, k))
    res.append(CheckResult("smoothed-derivative interpolation with constant one",
                           worstr, 1.0 + 1e-10))

    states = _small_run(seed, steps=2)
    rows = dg.monitored_ratios(states[-1])
    vals = [r.value for r in rows]
    labels = [r.label for r in rows]
    finite = float(np.max(vals)) if all(np.isfinite(vals)) else float("inf")
    res.append(CheckResult("monitored quotients stay finite", finite, 1e6,
                           note=f"{len(rows)} rows"))
    res.append(CheckResult("monitored quotient labels are distinct",
                           float(len(labels) - len(set(labels))), 0.0))
    return tuple(res)


SUITES = {
    "spectral": suite_spectral,
    "poisson": suite_poisson,
    "geometry": suite_geometry,
    "elliptic": suite_elliptic,
    "transport": suite_transport,
    "identities": suite_identities,
    "interpolation": suite_interpolation,
}


def run_suite(name: str, seed: int = 0) -> SuiteReport:
    """Execute one battery and wrap the outcome with timing."""
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}; pick from {sorted(SUITES)}")
    t0 = time.perf_counter()
    results = SUITES[name](seed)
    return SuiteReport(name, seed, tuple(results), time.perf_counter() - t0)
