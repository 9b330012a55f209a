"""Atom-number resolution of an H/V phase probe on the D2 line.

A fully mixed ground state responds only through the scalar
polarizability; delta N_A does not depend on the photon flux.
"""

from nanofiber_qsim import FiberSpec, load_system, solve_he11
from nanofiber_qsim.squeezing_dynamics import atom_number_resolution

d2 = load_system("D2")
sol = solve_he11(FiberSpec(radius_a=225.0, n1=1.4469, n2=1.0), d2.wavelength_nm)
for ra in (1.8, 1.9, 2.0):
    res = atom_number_resolution(d2, sol, ra * sol.a)
    print(f"r = {ra:.1f} a: delta N_A = {res.delta_N_A:6.2f}, A_N = {res.A_N:.3e} nm^2, "
          f"A_in = {res.A_in:.3e} nm^2, sigma0/A_in = {d2.sigma0 / res.A_in:.3f}")
