"""Geometry tour: a wavy surface over a wavy floor.

Builds the flattening map for a genuinely curved scene, shows how the
vertical decay rate is chosen automatically, checks the quality of the
transform (Jacobian floor, row-divergence defect), and solves one
transformed Stokes problem driven by a surface load.

Run from anywhere::

    python demos/curved_cavern.py
"""

import numpy as np

from slabflow import extension as ex
from slabflow import geometry as geo
from slabflow import stokes as st
from slabflow.fields import HorizontalGrid, SurfaceField, VolumeField, VolumeGrid

h = HorizontalGrid(1.0, 1.0, 16, 16)
X1, X2 = h.meshgrid()
eta = SurfaceField(h, 0.08 * np.cos(2 * np.pi * X1) + 0.05 * np.sin(2 * np.pi * X2))
bottom = SurfaceField(h, 1.0 + 0.1 * np.cos(2 * np.pi * (X1 + X2)))

# -- 1. pick the vertical decay rate ---------------------------------------
# the rate controls how quickly the surface's influence fades with depth;
# the automatic rule guarantees the flattening map stays a diffeomorphism
eps, delta = ex.select_epsilon(eta, bottom, 1.0)
jmin = ex.top_jacobian_min(eta, bottom, 1.0, eps, refine=4)
print(f"auto-selected rate {eps:.3e}, Jacobian floor {delta:.3f}, "
      f"measured min J = {jmin:.3f}")

# a deliberately aggressive rate keeps more vertical structure; the floor
# check still passes for this scene, and the transform defect below is
# then real truncation error instead of roundoff
eps = 0.9

# -- 2. build the transform at two resolutions -----------------------------
for Nz in (17, 33):
    grid = VolumeGrid(horizontal=h, b0=1.0, Nz=Nz)
    g = geo.build_geometry(eta, None, bottom, grid, eps, 0.25)
    print(f"Nz = {Nz:2d}: min J = {np.min(g.J.values):.4f}, "
          f"row-divergence defect = {geo.piola_residual(g):.3e}")
print("(the defect falls ~16x per doubling: pure fourth-order truncation)")

# -- 3. one transformed Stokes solve ---------------------------------------
# this scene is genuinely far from flat (surface slopes ~0.5), so the
# plain corrective iteration overshoots and diverges; halving each update
# tames it at the cost of more passes
grid = VolumeGrid(horizontal=h, b0=1.0, Nz=33)
eps_auto, delta_auto = ex.select_epsilon(eta, bottom, 1.0)
g = geo.build_geometry(eta, None, bottom, grid, eps_auto, delta_auto)
zero = VolumeField(grid, np.zeros(grid.shape))
zs = SurfaceField(h, np.zeros((16, 16)))
load = SurfaceField(h, 0.05 * np.cos(2 * np.pi * X1))
data = st.StokesData(F=(zero, zero, zero), G=zero, H=(zs, zs, load))

sol = st.solve_stokes_A(g, data, st.SolverConfig(tol=1e-10, damping=0.5,
                                                 max_iter=300))
res = st.stokes_residual_A(sol.u, sol.p, data, g)
speed = max(float(np.max(np.abs(c.values))) for c in sol.u)
print(f"solved in {sol.iterations} damped passes; "
      f"relative residual {res.relative:.2e}")
print(f"peak speed {speed:.3e} under a 0.05 surface load")
