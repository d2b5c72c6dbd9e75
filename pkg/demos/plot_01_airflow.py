"""
Stationary air flow in the two-room apartment
=============================================

Mesh the canonical floor plan, solve the penalized Navier-Stokes equations for
a few fan settings and look at where the air goes.
"""

import numpy as np

from zonalhvac import mesh as M
from zonalhvac.fem import Assembler
from zonalhvac.flow import FlowBCs, FlowSolver, boundary_flux, fan_power, mean_speed, velocity_at, write_flow_vtk

###############################################################################
# The floor plan is 5 x 10 m with an interior wall at y = 5 and a door in the
# middle. A 0.5 m element size snaps every wall, vent, heater and zone edge.
fp = M.canonical_apartment()
mesh = M.generate(fp, target_h=0.5)
nT, npres, nu = M.node_counts(mesh)
print(f"{mesh.n_triangles} triangles, {mesh.n_vertices} vertices, {nu} velocity dofs")

###############################################################################
# Assembly happens once; the solver keeps the factor-independent operators.
asm = Assembler(mesh)
solver = FlowSolver(asm)

###############################################################################
# Both fans blow into the rooms along the inward normal. Air leaves through
# the return inlet on the left wall of the lower room, so the upper room
# drains through the door.
for speed in (0.1, 0.55, 1.0):
    flow = solver.solve_navier_stokes(FlowBCs((speed, speed)))
    print(f"fans {speed:4.2f} m/s: mean air speed {mean_speed(asm, flow):.3f} m/s, "
          f"Newton iterations {flow.newton_iters}, fan power {fan_power(asm, flow):.1f} W/m")

flow = solver.solve_navier_stokes(FlowBCs((0.55, 0.55)))
for name, tag in (("outlet 1", M.OUTLET1), ("outlet 2", M.OUTLET2), ("inlet", M.INLET)):
    print(f"outward flux through {name}: {boundary_flux(asm, flow, tag):+.4f} m^2/s")

###############################################################################
# Sample the velocity along the door.
for x in np.linspace(2.1, 2.9, 5):
    u = velocity_at(asm, flow, [x, 5.0])
    print(f"door x={x:.1f}: u = ({u[0]:+.3f}, {u[1]:+.3f}) m/s")

write_flow_vtk("airflow.vtk", asm, flow)
print("wrote airflow.vtk")
