"""Guided HE11 mode of the reference nanofiber at the Cs D1 line.

Prints the dispersion parameters and the field anisotropy at the trap
radius, where H is polarised in the x-z plane and V along y.
"""

import numpy as np

from nanofiber_qsim import FiberSpec, load_system, solve_he11
from nanofiber_qsim.fiber_modes import local_modes, mode_profile, norm_integral

d1 = load_system("D1")
sol = solve_he11(FiberSpec(radius_a=225.0, n1=1.4469, n2=1.0), d1.wavelength_nm)
print(f"beta0 = {sol.beta0:.6f} /nm, n_eff = {sol.beta0 / sol.k0:.5f}, n_g = {sol.n_g:.4f}")
print(f"h = {sol.h_in:.6f} /nm, q = {sol.q_out:.6f} /nm, s = {sol.s_param:.6f}")
print(f"power normalisation integral = {norm_integral(sol):.12f}")

for ra in (1.5, 1.8, 2.0, 2.5):
    r = ra * sol.a
    ur, up, uz = mode_profile(sol, r)
    uH, uV = local_modes(sol, r, 0.0)
    IH, IV = np.vdot(uH, uH).real, np.vdot(uV, uV).real
    print(f"r = {ra:.1f} a: |u_z/u_r| = {abs(uz / ur):.3f}, I_H/I_V = {IH / IV:.3f}")
