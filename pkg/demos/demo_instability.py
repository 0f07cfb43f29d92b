"""
Exponential instability in the number of cells
==============================================

The measurement Jacobian loses about two orders of magnitude per two extra
cells, and nearly indistinguishable pairs of potentials appear among the
3^N cellwise {-delta, 0, delta} potentials.
"""

import numpy as np

from fraccal.fracgrid import assemble_operator, build_lattice
from fraccal.inverse import instability_experiment, lipschitz_estimate, make_basis

# h = 1/60 puts the edges of 2, 4, 6, 8 and 10 equal cells on the lattice.
lat = build_lattice((-1, 1), [(-3, -2), (2, 3)], 1 / 60)
op = assemble_operator(lat, 0.5)

Ns = [2, 4, 6, 8, 10]
print(" N   sigma_min    C_emp      min ratio")
mins = []
for N in Ns:
    lip = lipschitz_estimate(op, make_basis(lat, "piecewise_constant", N), 20, seed=0)
    ins = instability_experiment(op, N, 0.1, 500, seed=7)
    mins.append(ins.min_ratio)
    print(f"{N:2d}  {lip.sigma_min:.3e}  {lip.C_emp:.3e}  {ins.min_ratio:.3e}")

slope, icpt = np.polyfit(Ns, np.log(mins), 1)
print(f"log(min ratio) ~ {slope:.3f} N + {icpt:.3f}")
