"""
Forward problem, DtN map and Cauchy data
========================================

Solve the exterior-value problem, assemble the Dirichlet-to-Neumann map,
and check the Alessandrini identity that links potential differences to
measurement differences.
"""

import numpy as np

from fraccal.forward import (Potential, alessandrini_gap, cauchy_basis, cauchy_distance,
                             dirichlet_spectrum, dtn_difference, dtn_matrix, kernel_spaces,
                             solve_forward, whitened_dtn)
from fraccal.fracgrid import assemble_operator, build_lattice

lat = build_lattice((-1, 1), [(-3, -2), (2, 3)], 0.02)
op = assemble_operator(lat, 0.5)
rng = np.random.default_rng(0)
n = len(lat.omega_loc)

# Prescribe a hat on W1 and solve ((-Delta)^s + q) u = 0 in Omega.
q1 = Potential(0.3 * rng.uniform(-1, 1, n))
f = lat.zeros()
f[lat.loc(0)[25]] = 1.0
u = solve_forward(op, q1, f)
print("max |u| in Omega:", u[lat.omega_loc].max())

# The DtN map from W1 to W2 and the Alessandrini identity.
q2 = Potential.zero(op)
Lam = dtn_matrix(op, q1, 0, 1)
print("DtN block shape:", Lam.entries.shape)
f2 = lat.extend(rng.standard_normal(len(lat.loc(1))), 1)
lhs, rhs = alessandrini_gap(op, q1, q2, f, f2)
print(f"((q1-q2)u1,u2) = {lhs:.6e}   ((L1-L2)f1,f2) = {rhs:.6e}")

# The operator norm of the DtN difference in the window norms.
D = dtn_difference(op, q1, q2, 0, 0)
print("||Lambda_1 - Lambda_2||_* =", np.linalg.norm(whitened_dtn(op, D, 0, 0), 2))

# Shift the potential so that zero becomes a Dirichlet eigenvalue.  The DtN
# map no longer exists, but the Cauchy data set does.
qk = Potential.constant(op, -dirichlet_spectrum(op, q2).lambda_1)
ks = kernel_spaces(op, qk)
print("kernel dimension:", ks.dim)
C1 = cauchy_basis(op, qk, ks, region=0)
C2 = cauchy_basis(op, qk.shifted(1e-3), region=0)
print("Cauchy set dimension:", C1.dim, " distance to a nearby potential:",
      cauchy_distance(C1, C2))
