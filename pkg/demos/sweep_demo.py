"""Peak squeezing at the optimal axis over trap radius and atom number.

Rows below the 0.1 dB observability threshold are flagged; for 500 atoms
the observable range ends near 2.3 a.
"""

from nanofiber_qsim import FiberSpec, load_system, solve_he11
from nanofiber_qsim.squeezing_dynamics import sweep

d1 = load_system("D1")
sol = solve_he11(FiberSpec(radius_a=225.0, n1=1.4469, n2=1.0), d1.wavelength_nm)
rows = sweep(d1, sol, [1.5, 1.8, 2.0, 2.2, 2.3, 2.4, 2.5], [500, 1000, 2500], grid_deg=5.0)
print(" r/a    N_A   phi_opt   OD/N_A   peak dB  observable")
for row in rows:
    print(f"{row.r_over_a:4.1f}  {row.N_A:5d}   {row.phi_opt_deg:6.1f}   {row.od_per_atom:.4f}"
          f"   {row.peak_db:6.3f}  {row.observable}")
