"""
The discrete fractional Laplacian
=================================

Build a lattice with one interior interval and two observation windows,
assemble the collocation matrix of (-Delta)^s and check it against a
function whose fractional Laplacian is known in closed form.
"""

import math

import numpy as np

from fraccal.forward import Potential, dirichlet_spectrum
from fraccal.fracgrid import assemble_operator, build_lattice, hs_norm

# Omega = (-1, 1) carries the potential; measurements live on W1 and W2.
lat = build_lattice((-1, 1), [(-3, -2), (2, 3)], 0.02)
op = assemble_operator(lat, 0.5)
print("active nodes:", lat.n_active, " Omega nodes:", len(lat.omega_loc))

# For u = (1 - x^2)_+^s, (-Delta)^s u = Gamma(2s + 1) inside (-1, 1).
x = lat.x
u = np.clip(1 - x**2, 0, None) ** 0.5
Lu = op.apply(u)
for p in (-0.8, 0.0, 0.4):
    i = int(np.argmin(np.abs(x - p)))
    print(f"x = {p:+.1f}:  discrete {Lu[i]:.5f}  exact {math.gamma(2.0):.5f}")

# The Dirichlet spectrum of L restricted to Omega is positive.
sp = dirichlet_spectrum(op, Potential.zero(op))
print("lambda_1..3:", np.round(sp.eigenvalues[:3], 5))

# Window norms: the H^s norm of a bump supported on W2.
f = lat.extend(np.sin(np.linspace(0, np.pi, len(lat.loc(1)))), 1)
print("||f||_{H^s(W2)} =", round(hs_norm(op, f, 1), 6))
